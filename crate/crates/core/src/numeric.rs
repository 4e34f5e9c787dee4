//! Small numerical helpers shared by the other modules.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

pub use std::f64::consts::LOG2_E;

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of reals.
pub fn sum(iter: impl IntoIterator<Item = f64>) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const TABLE_LEN: usize = 1025;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_LEN);
        let mut acc = CompensatedSum::new();
        t.push(0.0);
        for j in 1..TABLE_LEN {
            acc.add((j as f64).ln());
            t.push(acc.value());
        }
        t
    })
}

/// `ln(m!)`, with `m` a non-negative integer held in a float so that very
/// large counts are representable. Non-integers go through log-gamma.
pub fn ln_factorial(m: f64) -> f64 {
    if m < 2.0 {
        return 0.0;
    }
    if m.fract() == 0.0 && m < TABLE_LEN as f64 {
        return ln_factorial_table()[m as usize];
    }
    ln_gamma(m + 1.0)
}

/// `log2(m!)`.
pub fn log2_factorial(m: f64) -> f64 {
    ln_factorial(m) * LOG2_E
}

/// `log2(c! / (c - m)!)`, the log of the falling factorial.
pub fn log2_falling(c: f64, m: f64) -> f64 {
    debug_assert!(m <= c);
    if m <= 0.0 {
        return 0.0;
    }
    if m <= 64.0 && m.fract() == 0.0 {
        // short products are summed directly to avoid cancelling two large logs
        let mut acc = CompensatedSum::new();
        let mut j = 0.0;
        while j < m {
            acc.add((c - j).log2());
            j += 1.0;
        }
        return acc.value();
    }
    log2_factorial(c) - log2_factorial(c - m)
}

/// `log2 C(a, b)`.
pub fn log2_binomial(a: f64, b: f64) -> f64 {
    debug_assert!(b >= 0.0 && b <= a);
    let b = b.min(a - b);
    log2_falling(a, b) - log2_factorial(b)
}

/// `-p log2 p`, zero at `p = 0`.
pub fn neg_xlog2x(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Binary entropy `h2(p)` in bits. Arguments are clamped to `[0, 1]` so that
/// ratios a rounding error outside the interval stay finite.
pub fn binary_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    neg_xlog2x(p) + neg_xlog2x(1.0 - p)
}

/// `(1 - theta)^n`.
pub fn pow_complement(theta: f64, n: f64) -> f64 {
    (n * (-theta).ln_1p()).exp()
}

/// `1 - (1 - theta)^n`, the probability that a letter of probability
/// `theta` occurs in `n` draws.
pub fn occurrence_prob(theta: f64, n: f64) -> f64 {
    -(n * (-theta).ln_1p()).exp_m1()
}

/// `e^{-x} - 1 + x` without cancellation for small `x`.
pub fn exp_neg_excess(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        (-x).exp_m1() + x
    }
}

/// `n theta - 1 + (1 - theta)^n`, the mean number of re-occurrences of a
/// letter with probability `theta` in `n` draws.
pub fn mean_reoccurrence(theta: f64, n: f64) -> f64 {
    if n <= 1.0 {
        return 0.0;
    }
    if n * theta >= 0.1 {
        return n * theta - 1.0 + pow_complement(theta, n);
    }
    // binomial expansion: sum_{j>=2} C(n, j) (-theta)^j
    let mut term = n * (n - 1.0) / 2.0 * theta * theta;
    let mut acc = CompensatedSum::new();
    let mut j = 2.0;
    while term != 0.0 && j <= n {
        acc.add(term);
        if term.abs() < 1e-18 * acc.value().abs() {
            break;
        }
        term *= -(n - j) / (j + 1.0) * theta;
        j += 1.0;
    }
    acc.value()
}

/// Largest integer `f` with `f * f <= x`, for `x >= 0`.
pub fn floor_sqrt(x: f64) -> f64 {
    let mut f = x.sqrt().floor();
    while f > 0.0 && f * f > x {
        f -= 1.0;
    }
    while (f + 1.0) * (f + 1.0) <= x {
        f += 1.0;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-15).abs() < 1e-28);
    }

    #[test]
    fn factorial_logs() {
        assert_eq!(log2_factorial(0.0), 0.0);
        assert!((log2_factorial(3.0) - 6f64.log2()).abs() < 1e-15);
        assert!((log2_falling(5.0, 2.0) - 20f64.log2()).abs() < 1e-14);
        assert!((log2_binomial(6.0, 3.0) - 20f64.log2()).abs() < 1e-13);
        // table and log-gamma agree at the seam
        let seam = ln_factorial(1024.0) + 1025f64.ln();
        assert!((ln_factorial(1025.0) - seam).abs() < 1e-9);
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reoccurrence_series_matches_direct_form() {
        for &(theta, n) in &[(1e-3f64, 50.0), (0.01, 9.0), (0.004, 20.0)] {
            let direct: f64 = n * theta - 1.0 + (1.0 - theta).powf(n);
            let series = mean_reoccurrence(theta, n);
            assert!((direct - series).abs() < 1e-12, "{theta} {n}");
        }
        // one draw never re-occurs
        assert_eq!(mean_reoccurrence(0.3, 1.0), 0.0);
        assert!(mean_reoccurrence(1e-9, 10.0) > 0.0);
    }

    #[test]
    fn floor_sqrt_handles_perfect_squares() {
        assert_eq!(floor_sqrt(100.0), 10.0);
        assert_eq!(floor_sqrt(99.999_999_999_999_99), 9.0);
        assert_eq!(floor_sqrt(0.5), 0.0);
    }

    #[test]
    fn excess_is_continuous_at_switch() {
        for x in [0.000_999_999f64, 0.001_000_001] {
            let direct = (-x).exp() - 1.0 + x;
            assert!((exp_neg_excess(x) - direct).abs() < 1e-9 * direct);
        }
    }
}
