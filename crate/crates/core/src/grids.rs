//! Quadratic probability grids, per-bin statistics and per-letter occurrence
//! quantities.
//!
//! Three grids partition `(0, 1]`:
//!
//! * `tau`: `tau_b = b^2 / n^(1+eps)`.
//! * `eta`: `eta_1 = 1/n^(1+eps)`, `eta_2 = 1/n^(1-eps)`, then the points
//!   `j^2 / n^(1+2 eps)` for `j = b + floor(n^(3 eps/2)) - 2`, `b >= 3`.
//! * `xi`: `xi_b = b^2 / n^(1-eps)`.
//!
//! Point `0` opens every grid and `1` closes it, sitting at index `B + 1`
//! (it is merged when the last regular point already equals one). Bin `b`
//! is the half-open interval `(p_b, p_{b+1}]`.

use serde::{Deserialize, Serialize};

use crate::distributions::ParamVector;
use crate::error::{invalid, Error, Result};
use crate::numeric::{self, floor_sqrt};

/// Largest number of regular grid points built.
pub const MAX_GRID_POINTS: f64 = 2e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Tau,
    Eta,
    Xi,
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Self::Tau),
            "eta" => Ok(Self::Eta),
            "xi" => Ok(Self::Xi),
            _ => invalid(format!("unknown grid kind {s:?}")),
        }
    }
}

/// Non-fatal conditions met while building a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFlag {
    /// `eps < ln ln n / ln n`: outside the asymptotic regime of the bounds.
    BelowRegime,
    /// `floor(n^(3 eps/2)) < 2`: the shifted `eta` points start at `j = 2`
    /// or lower.
    SmallShift,
    /// The last regular point equals one and doubles as the terminal point.
    TerminalMerged,
    /// A non-increasing point produced by rounding was dropped.
    CollisionMerged { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub kind: GridKind,
    pub n: u64,
    pub epsilon: f64,
    /// `p_0 = 0, p_1, ..., p_B` and the terminal `1`.
    pub points: Vec<f64>,
    /// `B`: index of the last regular point.
    pub last_index: usize,
    /// `A`: largest index whose point is at most `1/2`.
    pub half_index: usize,
    /// `floor(n^(3 eps/2))` for `eta`, zero otherwise.
    pub shift: u64,
    /// `floor(n^(eps/2)) - 1`, the offset the `eta` spacing law is written
    /// with; kept for comparison with `shift`.
    pub spacing_offset: i64,
    pub flags: Vec<GridFlag>,
}

impl Grid {
    pub fn num_bins(&self) -> usize {
        self.points.len() - 1
    }

    /// Lower and upper edge of bin `b`.
    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        (self.points[b], self.points[b + 1])
    }
}

fn check_grid_size(count: f64) -> Result<()> {
    if count > MAX_GRID_POINTS {
        return Err(Error::ResourceCap {
            what: "grid points",
            needed: count,
            cap: MAX_GRID_POINTS,
        });
    }
    Ok(())
}

/// `eps` below which a grid is flagged as outside the asymptotic regime.
pub fn regime_threshold(n: f64, delta: f64) -> f64 {
    let ln = n.ln();
    if ln <= 1.0 {
        return 0.0;
    }
    (1.0 + delta) * ln.ln() / ln
}

pub fn build_grid(kind: GridKind, n: u64, epsilon: f64) -> Result<Grid> {
    if n < 1 {
        return invalid("grid needs n >= 1");
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return invalid(format!("epsilon = {epsilon} must be non-negative"));
    }
    if kind == GridKind::Eta && epsilon == 0.0 {
        return invalid("eta grid needs epsilon > 0");
    }
    if kind != GridKind::Tau && epsilon >= 1.0 {
        return invalid("eta and xi grids need epsilon < 1");
    }
    let nf = n as f64;
    let mut flags = Vec::new();
    if epsilon < regime_threshold(nf, 0.0) {
        flags.push(GridFlag::BelowRegime);
    }
    let mut points = vec![0.0];
    let mut shift = 0;
    match kind {
        GridKind::Tau | GridKind::Xi => {
            let denom = match kind {
                GridKind::Tau => nf.powf(1.0 + epsilon),
                _ => nf.powf(1.0 - epsilon),
            };
            check_grid_size(denom.sqrt())?;
            let mut b = 1.0_f64;
            while b * b <= denom {
                points.push(b * b / denom);
                b += 1.0;
            }
        }
        GridKind::Eta => {
            let denom = nf.powf(1.0 + 2.0 * epsilon);
            check_grid_size(denom.sqrt())?;
            let s = nf.powf(1.5 * epsilon).floor();
            shift = s as u64;
            if s < 2.0 {
                flags.push(GridFlag::SmallShift);
            }
            points.push(1.0 / nf.powf(1.0 + epsilon));
            points.push(1.0 / nf.powf(1.0 - epsilon));
            let mut j = s + 1.0;
            while j * j <= denom {
                points.push(j * j / denom);
                j += 1.0;
            }
        }
    }
    // drop anything rounding made non-increasing
    let mut cleaned = Vec::with_capacity(points.len() + 1);
    for (i, p) in points.into_iter().enumerate() {
        if let Some(&last) = cleaned.last() {
            if p <= last {
                flags.push(GridFlag::CollisionMerged { index: i });
                continue;
            }
        }
        cleaned.push(p);
    }
    let last_index = cleaned.len() - 1;
    if *cleaned.last().unwrap() >= 1.0 {
        *cleaned.last_mut().unwrap() = 1.0;
        flags.push(GridFlag::TerminalMerged);
    } else {
        cleaned.push(1.0);
    }
    let half_index = cleaned[..=last_index].partition_point(|&p| p <= 0.5) - 1;
    Ok(Grid {
        kind,
        n,
        epsilon,
        points: cleaned,
        last_index,
        half_index,
        shift,
        spacing_offset: nf.powf(epsilon / 2.0).floor() as i64 - 1,
        flags,
    })
}

/// Closed forms of `(B, A)`.
pub fn closed_form_indices(kind: GridKind, n: u64, epsilon: f64) -> (i64, i64) {
    let nf = n as f64;
    match kind {
        GridKind::Tau | GridKind::Xi => {
            let denom = match kind {
                GridKind::Tau => nf.powf(1.0 + epsilon),
                _ => nf.powf(1.0 - epsilon),
            };
            (floor_sqrt(denom) as i64, floor_sqrt(denom / 2.0) as i64)
        }
        GridKind::Eta => {
            let denom = nf.powf(1.0 + 2.0 * epsilon);
            let s = nf.powf(1.5 * epsilon).floor() as i64;
            (
                floor_sqrt(denom) as i64 - s + 2,
                floor_sqrt(denom / 2.0) as i64 - s + 2,
            )
        }
    }
}

/// Index `b` of the bin `(p_b, p_{b+1}]` holding `theta`.
pub fn bin_index(grid: &Grid, theta: f64) -> Result<usize> {
    if !(theta > 0.0 && theta <= 1.0) {
        return invalid(format!("probability {theta} outside (0, 1]"));
    }
    Ok(grid.points.partition_point(|&p| p < theta) - 1)
}

/// Aggregates over the letters of one populated bin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub index: usize,
    /// Number of letters.
    pub count: u64,
    /// Probability mass.
    pub mass: f64,
    /// Expected number of distinct letters of the bin in `n` draws.
    pub occupancy: f64,
    /// Sum of squared letter probabilities.
    pub sq_mass: f64,
    /// Sum of cubed letter probabilities.
    pub cube_mass: f64,
    /// `sum e^{-n theta}`.
    pub absent_upper: f64,
    /// `sum e^{-n (theta + theta^2)}` over letters with `theta <= 3/5`.
    pub absent_lower: f64,
}

/// Quantities of the two lowest bins of a grid, packed or separate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LowBins {
    pub k0: u64,
    pub k1: u64,
    pub k01: u64,
    pub phi0: f64,
    pub phi1: f64,
    pub phi01: f64,
    pub occupancy0: f64,
    pub occupancy1: f64,
    pub occupancy01: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub kind: GridKind,
    pub n: u64,
    /// Populated bins, ascending by index.
    pub bins: Vec<BinEntry>,
}

impl BinStats {
    pub fn entry(&self, b: usize) -> Option<&BinEntry> {
        self.bins
            .binary_search_by_key(&b, |e| e.index)
            .ok()
            .map(|i| &self.bins[i])
    }

    pub fn count(&self, b: usize) -> u64 {
        self.entry(b).map_or(0, |e| e.count)
    }

    pub fn mass(&self, b: usize) -> f64 {
        self.entry(b).map_or(0.0, |e| e.mass)
    }

    pub fn occupancy(&self, b: usize) -> f64 {
        self.entry(b).map_or(0.0, |e| e.occupancy)
    }

    /// `min(count_b, n)`.
    pub fn capped_count(&self, b: usize) -> u64 {
        self.count(b).min(self.n)
    }

    /// Letters in the three bins around `b` (`b - 1`, `b`, `b + 1`), whether
    /// or not bin `b` itself is populated; bin `1` only looks upward.
    pub fn neighborhood_count(&self, b: usize) -> u64 {
        let below = if b >= 2 { self.count(b - 1) } else { 0 };
        below + self.count(b) + self.count(b + 1)
    }

    pub fn low(&self) -> LowBins {
        let (e0, e1) = (
            self.entry(0).cloned().unwrap_or_default(),
            self.entry(1).cloned().unwrap_or_default(),
        );
        LowBins {
            k0: e0.count,
            k1: e1.count,
            k01: e0.count + e1.count,
            phi0: e0.mass,
            phi1: e1.mass,
            phi01: e0.mass + e1.mass,
            occupancy0: e0.occupancy,
            occupancy1: e1.occupancy,
            occupancy01: e0.occupancy + e1.occupancy,
        }
    }
}

pub fn bin_stats(theta: &ParamVector, grid: &Grid) -> Result<BinStats> {
    let nf = grid.n as f64;
    let mut bins: Vec<BinEntry> = Vec::new();
    for l in theta.levels() {
        let b = bin_index(grid, l.prob)?;
        if bins.last().map(|e| e.index) != Some(b) {
            bins.push(BinEntry {
                index: b,
                ..Default::default()
            });
        }
        let e = bins.last_mut().unwrap();
        let c = l.count as f64;
        let p = l.prob;
        e.count += l.count;
        e.mass += c * p;
        e.occupancy += c * numeric::occurrence_prob(p, nf);
        e.sq_mass += c * p * p;
        e.cube_mass += c * p * p * p;
        e.absent_upper += c * (-nf * p).exp();
        if p <= 0.6 {
            e.absent_lower += c * (-nf * (p + p * p)).exp();
        }
    }
    Ok(BinStats {
        kind: grid.kind,
        n: grid.n,
        bins,
    })
}

/// Per-letter occurrence quantities for a block of length `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceStats {
    /// `(1 - theta)^n`.
    pub p_absent: f64,
    /// `e^{-n (theta + theta^2)}`, or `0` when `theta > 3/5`.
    pub p_absent_lo: f64,
    /// `e^{-n theta}`.
    pub p_absent_hi: f64,
    pub p_present_lo: f64,
    pub p_present_hi: f64,
    /// `n theta - 1 + (1 - theta)^n`.
    pub mean_reoccur: f64,
    pub mean_reoccur_lo: f64,
    pub mean_reoccur_hi: f64,
    /// Sharper brackets valid when `theta <= 1/n`.
    pub small: Option<SmallLetterBounds>,
}

/// Second- and third-order binomial brackets for letters with `theta <= 1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallLetterBounds {
    pub p_present_lo: f64,
    pub p_present_hi: f64,
    pub mean_reoccur_lo: f64,
    pub mean_reoccur_hi: f64,
}

pub fn occurrence_stats(theta: f64, n: u64) -> Result<OccurrenceStats> {
    if !(theta > 0.0 && theta <= 1.0) {
        return invalid(format!("probability {theta} outside (0, 1]"));
    }
    if n < 1 {
        return invalid("n must be at least 1");
    }
    let nf = n as f64;
    let p_absent = numeric::pow_complement(theta, nf);
    let p_absent_hi = (-nf * theta).exp();
    let p_absent_lo = if theta <= 0.6 {
        (-nf * (theta + theta * theta)).exp()
    } else {
        0.0
    };
    let small = (theta * nf <= 1.0).then(|| {
        let pairs = nf * (nf - 1.0) / 2.0 * theta * theta;
        let triples = nf * (nf - 1.0) * (nf - 2.0) / 6.0 * theta * theta * theta;
        SmallLetterBounds {
            p_present_lo: nf * theta - pairs,
            p_present_hi: nf * theta - pairs + triples,
            mean_reoccur_lo: pairs - triples,
            mean_reoccur_hi: pairs,
        }
    });
    Ok(OccurrenceStats {
        p_absent,
        p_absent_lo,
        p_absent_hi,
        p_present_lo: -(-nf * theta).exp_m1(),
        p_present_hi: if theta <= 0.6 {
            -(-nf * (theta + theta * theta)).exp_m1()
        } else {
            1.0
        },
        mean_reoccur: numeric::mean_reoccurrence(theta, nf),
        // n theta - 1 + e^{-x} written as -(n theta^2) + (e^{-x} - 1 + x)
        mean_reoccur_lo: if theta <= 0.6 {
            numeric::exp_neg_excess(nf * (theta + theta * theta)) - nf * theta * theta
        } else {
            nf * theta - 1.0
        },
        mean_reoccur_hi: numeric::exp_neg_excess(nf * theta),
        small,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_at_zero_epsilon() {
        let g = build_grid(GridKind::Tau, 100, 0.0).unwrap();
        let expect: Vec<f64> = (0..=10).map(|b| (b * b) as f64 / 100.0).collect();
        assert_eq!(g.points, expect);
        assert_eq!(g.last_index, 10);
        assert_eq!(g.half_index, 7);
        assert!(g.flags.contains(&GridFlag::TerminalMerged));
    }

    #[test]
    fn bin_of_edges() {
        let g = build_grid(GridKind::Tau, 100, 0.0).unwrap();
        assert_eq!(bin_index(&g, 0.01).unwrap(), 0);
        assert_eq!(bin_index(&g, 0.010_000_1).unwrap(), 1);
        assert_eq!(bin_index(&g, 1.0).unwrap(), g.num_bins() - 1);
        assert!(bin_index(&g, 0.0).is_err());
        assert!(bin_index(&g, 1.5).is_err());
    }

    #[test]
    fn eta_layout() {
        let g = build_grid(GridKind::Eta, 10_000, 0.25).unwrap();
        let n = 10_000f64;
        assert_eq!(g.points[1], 1.0 / n.powf(1.25));
        assert_eq!(g.points[2], 1.0 / n.powf(0.75));
        let s = n.powf(0.375).floor();
        assert_eq!(g.shift, s as u64);
        assert_eq!(g.points[3], (s + 1.0) * (s + 1.0) / n.powf(1.5));
        assert_eq!(*g.points.last().unwrap(), 1.0);
        assert!(g.points.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_rejects_bad_epsilon() {
        assert!(build_grid(GridKind::Eta, 100, 0.0).is_err());
        assert!(build_grid(GridKind::Tau, 100, -0.1).is_err());
        assert!(build_grid(GridKind::Xi, 100, 1.0).is_err());
    }

    #[test]
    fn neighborhood_counts() {
        // xi grid at n = 100, eps = 0: points b^2/100, bins 2 and 3 populated
        let g = build_grid(GridKind::Xi, 100, 0.0).unwrap();
        let theta = ParamVector::new(&[0.05, 0.05, 0.12, 0.78]).unwrap();
        let st = bin_stats(&theta, &g).unwrap();
        assert_eq!(st.count(2), 2);
        assert_eq!(st.count(3), 1);
        assert_eq!(st.neighborhood_count(2), 3);
        assert_eq!(st.neighborhood_count(3), 3);
        assert_eq!(st.neighborhood_count(1), 2);
        assert_eq!(st.neighborhood_count(5), 0);
    }

    #[test]
    fn heavy_letter_branch() {
        let o = occurrence_stats(0.99, 5).unwrap();
        assert_eq!(o.p_absent_lo, 0.0);
        assert_eq!(o.p_present_hi, 1.0);
        assert!((o.mean_reoccur_lo - (5.0 * 0.99 - 1.0)).abs() < 1e-15);
        assert!(o.small.is_none());
    }
}
