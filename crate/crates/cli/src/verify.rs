//! Desk-scale property suites, shared by the `verify` subcommand and the
//! acceptance tests.

use std::time::Instant;

use pattern_entropy::bounds::{
    packing_upper, permutation_lower, permutation_upper, range_decrease, simple_bounds,
    small_letter_lower, stirling_bounds, BoundReport, PackingVariant, SmallLetterOptions,
};
use pattern_entropy::coder::{
    decode, encode, expected_codelength_by_bins, expected_codelength_stepwise, sequence_codelength,
    CoderModel,
};
use pattern_entropy::distributions::{make_distribution, sample_sequence, ParamVector, SourceSpec};
use pattern_entropy::grids::{build_grid, closed_form_indices, occurrence_stats, GridKind};
use pattern_entropy::numeric::{binary_entropy, ln_factorial, occurrence_prob};
use pattern_entropy::oracle::{brute_force_permutation_count, exact_entropies, mc_pattern_entropy};
use pattern_entropy::patterns::{bin_sequence, extract_pattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Block-length exponent used wherever a small-instance `eta` grid is needed.
const SMALL_EPSILON: f64 = 0.5;
const TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: &'static str,
    pub description: &'static str,
    pub checks: u64,
    pub failures: u64,
    pub seconds: f64,
    pub time_limit: Option<f64>,
    /// First failure messages, then summary facts.
    pub messages: Vec<String>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0 && self.time_limit.is_none_or(|t| self.seconds <= t)
    }
}

struct Checker {
    checks: u64,
    failures: u64,
    messages: Vec<String>,
}

impl Checker {
    fn new() -> Self {
        Self {
            checks: 0,
            failures: 0,
            messages: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.failures <= 10 {
                self.messages.push(msg());
            }
        }
    }

    fn fail(&mut self, msg: String) {
        self.check(false, || msg);
    }

    fn info(&mut self, msg: String) {
        self.messages.push(msg);
    }
}

pub struct Suite {
    pub name: &'static str,
    pub description: &'static str,
    pub time_limit: Option<f64>,
    body: fn(&mut Checker, u64),
}

impl Suite {
    pub fn run(&self, seed: u64) -> SuiteOutcome {
        let start = Instant::now();
        let mut c = Checker::new();
        (self.body)(&mut c, seed);
        SuiteOutcome {
            suite: self.name,
            description: self.description,
            checks: c.checks,
            failures: c.failures,
            seconds: start.elapsed().as_secs_f64(),
            time_limit: self.time_limit,
            messages: c.messages,
        }
    }
}

pub const SUITES: [Suite; 11] = [
    Suite {
        name: "sandwich",
        description: "simple lower <= exact pattern entropy <= n H(X) on 200 small sources",
        time_limit: Some(10.0),
        body: sandwich,
    },
    Suite {
        name: "coder",
        description: "expected codelength >= joint entropy >= pattern entropy; three codelength computations agree",
        time_limit: Some(60.0),
        body: coder_dominance,
    },
    Suite {
        name: "permutations",
        description: "brute-force bin-preserving permutations = product of bin-count factorials",
        time_limit: None,
        body: permutations,
    },
    Suite {
        name: "occurrence",
        description: "occurrence probabilities and mean re-occurrences within their brackets",
        time_limit: None,
        body: occurrence,
    },
    Suite {
        name: "grids",
        description: "grid spacing laws and closed-form last/half indices",
        time_limit: None,
        body: grid_laws,
    },
    Suite {
        name: "mc",
        description: "Monte Carlo pattern entropy within 3 standard errors of the exact value",
        time_limit: Some(30.0),
        body: monte_carlo,
    },
    Suite {
        name: "stirling",
        description: "Stirling bracket on ln m! for m = 1..10^4",
        time_limit: None,
        body: stirling,
    },
    Suite {
        name: "collapse",
        description: "with no small letters the packing bound reduces term-by-term to the large-letter bound",
        time_limit: None,
        body: collapse,
    },
    Suite {
        name: "examples",
        description: "two-level and uniform example families at n = 10^6 match the displayed leading expressions",
        time_limit: Some(5.0),
        body: examples,
    },
    Suite {
        name: "region",
        description: "range decrease clamping, monotonicity, asymptotic agreement and fixed-point residuals",
        time_limit: None,
        body: region,
    },
    Suite {
        name: "roundtrip",
        description: "coder decode(encode) identity and length within 2 bits of -log2 Q",
        time_limit: None,
        body: roundtrip,
    },
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

pub fn find_suite(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

/// Random probability vector; weights are cubed so that skewed sources
/// show up alongside near-uniform ones.
fn random_theta(rng: &mut ChaCha8Rng, k: usize) -> ParamVector {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    ParamVector::new(&probs).expect("normalized weights")
}

/// The fixed small-instance matrix: cycles through `n in 2..=7`,
/// `k in 1..=4`.
fn small_matrix(seed: u64, size: usize) -> Vec<(usize, ParamVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|i| {
            let n = 2 + i % 6;
            let k = 1 + (i / 6) % 4;
            (n, random_theta(&mut rng, k))
        })
        .collect()
}

fn sandwich(c: &mut Checker, seed: u64) {
    for (n, theta) in small_matrix(seed, 200) {
        let grid = match build_grid(GridKind::Eta, n as u64, SMALL_EPSILON) {
            Ok(g) => g,
            Err(e) => return c.fail(format!("grid n={n}: {e}")),
        };
        let (exact, (lo, hi)) = match (
            exact_entropies(&theta, &grid),
            simple_bounds(&theta, n as u64),
        ) {
            (Ok(e), Ok(b)) => (e, b),
            (Err(e), _) | (_, Err(e)) => return c.fail(format!("n={n}: {e}")),
        };
        let h = exact.h_pattern;
        c.check(lo.value <= h + TOL && h <= hi.value + TOL, || {
            format!(
                "n={n} k={}: {} <= {h} <= {} fails",
                theta.k(),
                lo.value,
                hi.value
            )
        });
    }
}

fn coder_dominance(c: &mut Checker, seed: u64) {
    let mut worst_gap: f64 = 0.0;
    for (n, theta) in small_matrix(seed, 200).into_iter().filter(|(n, _)| *n <= 6) {
        let run = || -> pattern_entropy::Result<_> {
            let grid = build_grid(GridKind::Eta, n as u64, SMALL_EPSILON)?;
            let model = CoderModel::new(&theta, &grid)?;
            let exact = exact_entropies(&theta, &grid)?;
            let stepwise = expected_codelength_stepwise(&model, &theta, &grid)?;
            let by_bins = expected_codelength_by_bins(&model, &theta, &grid)?;
            Ok((exact, stepwise, by_bins))
        };
        let (e, stepwise, by_bins) = match run() {
            Ok(r) => r,
            Err(err) => return c.fail(format!("n={n}: {err}")),
        };
        c.check(e.expected_codelength >= e.h_joint - TOL, || {
            format!(
                "n={n}: E[-log Q] = {} < H(Psi, B) = {}",
                e.expected_codelength, e.h_joint
            )
        });
        c.check(e.h_joint >= e.h_pattern - TOL, || {
            format!(
                "n={n}: H(Psi, B) = {} < H(Psi) = {}",
                e.h_joint, e.h_pattern
            )
        });
        for (name, v) in [("stepwise", stepwise), ("per-bin", by_bins)] {
            let gap = (v - e.expected_codelength).abs();
            worst_gap = worst_gap.max(gap);
            c.check(gap <= TOL, || {
                format!(
                    "n={n}: {name} codelength {v} vs enumerated {}",
                    e.expected_codelength
                )
            });
        }
    }
    c.info(format!(
        "largest codelength disagreement {worst_gap:.3e} bits"
    ));
}

fn permutations(c: &mut Checker, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003);
    for _ in 0..100 {
        let k = rng.random_range(1..=7usize);
        let nbins = rng.random_range(1..=k);
        let bins: Vec<usize> = (0..k).map(|_| rng.random_range(0..nbins)).collect();
        let mut counts = vec![0u64; nbins];
        bins.iter().for_each(|&b| counts[b] += 1);
        let expect: u64 = counts.iter().map(|&m| (1..=m).product::<u64>()).product();
        match brute_force_permutation_count(&bins) {
            Ok(got) => c.check(got == expect, || {
                format!("bins {bins:?}: {got} != {expect}")
            }),
            Err(e) => c.fail(format!("bins {bins:?}: {e}")),
        }
    }
}

/// `lo <= x <= hi` up to a relative rounding allowance.
fn within(lo: f64, x: f64, hi: f64) -> bool {
    let slack = 1e-12 * x.abs().max(lo.abs()).max(hi.abs()) + 1e-300;
    lo <= x + slack && x <= hi + slack
}

fn occurrence(c: &mut Checker, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0004);
    let mut pairs: Vec<(f64, u64)> = (0..10_000)
        .map(|_| {
            let theta = 10f64.powf(-8.0 * rng.random::<f64>()).min(1.0);
            let n = 10f64.powf(6.0 * rng.random::<f64>()).round().max(1.0) as u64;
            (theta, n)
        })
        .collect();
    pairs.extend([(0.61, 3), (0.61, 50), (0.99, 2), (0.99, 1000)]);
    for (theta, n) in pairs {
        let s = match occurrence_stats(theta, n) {
            Ok(s) => s,
            Err(e) => return c.fail(format!("theta={theta} n={n}: {e}")),
        };
        let ctx = || format!("theta={theta} n={n}");
        c.check(within(s.p_absent_lo, s.p_absent, s.p_absent_hi), || {
            format!("{}: p_absent {s:?}", ctx())
        });
        let present = occurrence_prob(theta, n as f64);
        c.check(within(s.p_present_lo, present, s.p_present_hi), || {
            format!("{}: p_present {s:?}", ctx())
        });
        c.check(
            within(s.mean_reoccur_lo, s.mean_reoccur, s.mean_reoccur_hi),
            || format!("{}: mean re-occurrence {s:?}", ctx()),
        );
        if theta > 0.6 {
            c.check(s.p_absent_lo == 0.0, || {
                format!("{}: large-letter lower bound not 0", ctx())
            });
            let nf = n as f64;
            c.check(
                (s.mean_reoccur_lo - (nf * theta - 1.0)).abs() <= 1e-12 * nf,
                || format!("{}: large-letter re-occurrence bound", ctx()),
            );
        }
        if let Some(small) = s.small {
            c.check(
                within(small.p_present_lo, present, small.p_present_hi),
                || format!("{}: small-letter presence {small:?}", ctx()),
            );
            c.check(
                within(small.mean_reoccur_lo, s.mean_reoccur, small.mean_reoccur_hi),
                || format!("{}: small-letter re-occurrence {small:?}", ctx()),
            );
        }
    }
}

fn grid_laws(c: &mut Checker, _seed: u64) {
    for n in [100u64, 10_000, 1_000_000] {
        for eps in [0.1, 0.25] {
            let nf = n as f64;
            for kind in [GridKind::Tau, GridKind::Eta, GridKind::Xi] {
                let g = match build_grid(kind, n, eps) {
                    Ok(g) => g,
                    Err(e) => {
                        c.fail(format!("{kind:?} n={n} eps={eps}: {e}"));
                        continue;
                    }
                };
                let ctx = |b: usize| format!("{kind:?} n={n} eps={eps} b={b}");
                let p = &g.points;
                // regular points are 1..=B; the step to the appended 1 is not
                // governed by the spacing laws
                let last = g.last_index;
                for b in 1..last {
                    let gap = p[b + 1] - p[b];
                    match kind {
                        GridKind::Tau => {
                            let expect = (2 * b + 1) as f64 / nf.powf(1.0 + eps);
                            c.check((gap - expect).abs() <= 1e-9 * expect, || {
                                format!("{}: spacing {gap} != {expect}", ctx(b))
                            });
                        }
                        GridKind::Xi => {
                            let floor = 2.0 * p[b].sqrt() / nf.powf(1.0 - eps).sqrt();
                            c.check(gap >= floor * (1.0 - 1e-12), || {
                                format!("{}: spacing {gap} < {floor}", ctx(b))
                            });
                        }
                        GridKind::Eta if b >= 2 => {
                            // the allowance grows with theta, so the left edge is the binding case
                            let ceiling = 3.0 * p[b].sqrt() / nf.powf(1.0 + 2.0 * eps).sqrt();
                            c.check(gap <= ceiling * (1.0 + 1e-12), || {
                                format!("{}: spacing {gap} > {ceiling}", ctx(b))
                            });
                        }
                        GridKind::Eta => {}
                    }
                }
                let (b_closed, a_closed) = closed_form_indices(kind, n, eps);
                c.check(b_closed == g.last_index as i64 && a_closed == g.half_index as i64, || {
                    format!(
                        "{kind:?} n={n} eps={eps}: closed forms ({b_closed}, {a_closed}) vs built ({}, {})",
                        g.last_index, g.half_index
                    )
                });
            }
        }
    }
}

fn monte_carlo(c: &mut Checker, seed: u64) {
    let theta = ParamVector::new(&[1.0 / 3.0; 3]).expect("uniform");
    let run = || -> pattern_entropy::Result<_> {
        let grid = build_grid(GridKind::Eta, 10, SMALL_EPSILON)?;
        let exact = exact_entropies(&theta, &grid)?;
        let mc = mc_pattern_entropy(&theta, 10, 100_000, seed)?;
        Ok((exact.h_pattern, mc))
    };
    match run() {
        Ok((h, mc)) => {
            let z = (mc.mean - h).abs() / mc.std_error;
            c.check(z <= 3.0, || {
                format!(
                    "MC {} +- {} vs exact {h}: {z:.2} standard errors",
                    mc.mean, mc.std_error
                )
            });
            c.info(format!(
                "exact {h:.6}, MC {:.6} +- {:.6} ({z:.2} SE)",
                mc.mean, mc.std_error
            ));
        }
        Err(e) => c.fail(e.to_string()),
    }
}

fn stirling(c: &mut Checker, _seed: u64) {
    for m in 1..=10_000u32 {
        let m = m as f64;
        let exact = ln_factorial(m);
        match stirling_bounds(m) {
            Ok(s) => {
                // a few ulps of ln m! absorb rounding in both evaluations
                let slack = 8.0 * f64::EPSILON * exact.abs().max(1.0);
                c.check(
                    s.ln_lower <= exact + slack && exact <= s.ln_upper + slack,
                    || format!("m={m}: {} <= {exact} <= {} fails", s.ln_lower, s.ln_upper),
                );
                let width = s.ln_upper - s.ln_lower;
                c.check((width - 1.0 / (12.0 * m)).abs() <= slack, || {
                    format!("m={m}: bracket width {width}")
                });
            }
            Err(e) => c.fail(format!("m={m}: {e}")),
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn term(r: &BoundReport, name: &str) -> f64 {
    r.term(name).unwrap_or(f64::NAN)
}

fn collapse(c: &mut Checker, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0008);
    let (n, eps) = (10_000u64, 0.25);
    let floor = 1.5 / (n as f64).powf(1.0 - eps);
    for _ in 0..50 {
        let k = rng.random_range(1..=50usize);
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        let spare = 1.0 - k as f64 * floor;
        let probs: Vec<f64> = w
            .iter()
            .map(|x| (floor + spare * x / total).min(1.0))
            .collect();
        let theta = match ParamVector::new(&probs) {
            Ok(t) => t,
            Err(e) => return c.fail(e.to_string()),
        };
        let run = || -> pattern_entropy::Result<_> {
            Ok((
                permutation_upper(&theta, n, eps, false)?,
                packing_upper(&theta, n, eps, PackingVariant::Full)?,
                small_letter_lower(&theta, n, eps, &SmallLetterOptions::default())?,
                permutation_lower(&theta, n, eps)?.0,
            ))
        };
        let (ub1, ub3, lb4, lb2a) = match run() {
            Ok(r) => r,
            Err(e) => return c.fail(e.to_string()),
        };
        for name in ["n_h", "bin_permutations"] {
            c.check(same(term(&ub1, name), term(&ub3, name)), || {
                format!(
                    "k={k}: term {name}: {} vs {}",
                    term(&ub1, name),
                    term(&ub3, name)
                )
            });
        }
        for name in [
            "bin1_reoccurrences",
            "bin1_first_occurrences",
            "bin0_packing",
        ] {
            c.check(term(&ub3, name) == 0.0, || {
                format!("k={k}: {name} = {}", term(&ub3, name))
            });
        }
        c.check(same(ub1.value, ub3.value), || {
            format!("k={k}: {} vs {}", ub1.value, ub3.value)
        });
        for name in ["small_reoccurrences", "small_first_occurrences"] {
            c.check(term(&lb4, name) == 0.0, || {
                format!("k={k}: {name} = {}", term(&lb4, name))
            });
        }
        let without_window = lb4.value - term(&lb4, "boundary_uncertainty");
        c.check(same(without_window, lb2a.value), || {
            format!(
                "k={k}: general lower bound {without_window} vs {}",
                lb2a.value
            )
        });
    }
}

struct ExampleCase {
    label: &'static str,
    spec: SourceSpec,
    epsilon: f64,
    /// (variant, displayed leading expression)
    displayed: Vec<(PackingVariant, f64)>,
    /// Variants listed from tightest to loosest where the ordering is stated.
    ordering: Vec<PackingVariant>,
}

fn example_cases(n: f64) -> Vec<ExampleCase> {
    let log_n = n.log2();
    let e = std::f64::consts::E;
    let (phi0, phi1) = (0.5, 0.5);
    let k1 = n.powf(0.75);
    let uniform_first = n * k1.log2();
    vec![
        ExampleCase {
            label: "uniform, k = n^0.75",
            spec: SourceSpec::Uniform {
                k: None,
                nu: Some(0.25),
            },
            epsilon: 0.3,
            displayed: vec![
                (
                    PackingVariant::Full,
                    uniform_first - k1 * (n.powf(0.5) / e).log2(),
                ),
                (
                    PackingVariant::Packed01,
                    uniform_first - k1 * (n.powf(0.5) / e).log2(),
                ),
                (PackingVariant::Bin0Only, uniform_first),
                (
                    PackingVariant::PerBinLoosened,
                    uniform_first - k1 * (k1 / e).log2(),
                ),
            ],
            ordering: vec![
                PackingVariant::PerBinLoosened,
                PackingVariant::Full,
                PackingVariant::Bin0Only,
            ],
        },
        ExampleCase {
            label: "two levels, 1/n^1.5 and 1/n^0.6",
            spec: SourceSpec::TwoLevel {
                phi0,
                mu: 0.5,
                nu: 0.4,
            },
            epsilon: 0.45,
            displayed: vec![
                (
                    PackingVariant::Full,
                    0.6 * n * phi1 * log_n - n * phi0 * phi0.log2(),
                ),
                (
                    PackingVariant::Packed01,
                    n * phi1 * log_n + n * binary_entropy(phi0),
                ),
                (
                    PackingVariant::Bin0Only,
                    0.6 * n * phi1 * log_n - n * phi0 * phi0.log2(),
                ),
            ],
            ordering: vec![PackingVariant::Full, PackingVariant::Packed01],
        },
        ExampleCase {
            label: "two levels, 1/n^1.5 and 1/n^1.4",
            spec: SourceSpec::TwoLevel {
                phi0,
                mu: 0.5,
                nu: -0.4,
            },
            epsilon: 0.45,
            displayed: vec![(PackingVariant::Full, n * binary_entropy(phi0))],
            ordering: vec![
                PackingVariant::Packed01,
                PackingVariant::Full,
                PackingVariant::PerBinLoosened,
                PackingVariant::Bin0Only,
            ],
        },
        ExampleCase {
            label: "two levels, 1/n^1.5 and 1/n",
            spec: SourceSpec::TwoLevel {
                phi0,
                mu: 0.5,
                nu: 0.0,
            },
            epsilon: 0.3,
            displayed: vec![
                (
                    PackingVariant::Full,
                    n * phi1 / e * log_n
                        + n * (binary_entropy(phi0)
                            + phi1 * binary_entropy(1.0 / e)
                            + phi1 / e * phi1.log2()),
                ),
                (
                    PackingVariant::Packed01,
                    n * phi1 / e * log_n + n * binary_entropy(phi1 / e),
                ),
                (
                    PackingVariant::Bin0Only,
                    n * phi1 * log_n - n * phi0 * phi0.log2(),
                ),
                (
                    PackingVariant::PerBinLoosened,
                    n * phi1 / e * log_n
                        + n * (binary_entropy(phi0)
                            + phi1 / e * (phi1 * (1.0 - 1.0 / e) / e).log2()
                            + phi1 * (e / (1.0 - 1.0 / e)).log2()),
                ),
            ],
            ordering: vec![
                PackingVariant::Packed01,
                PackingVariant::Full,
                PackingVariant::PerBinLoosened,
                PackingVariant::Bin0Only,
            ],
        },
    ]
}

fn examples(c: &mut Checker, _seed: u64) {
    let n = 1_000_000u64;
    for case in example_cases(n as f64) {
        let theta = match make_distribution(&case.spec, Some(n)) {
            Ok(s) => s.theta,
            Err(e) => return c.fail(format!("{}: {e}", case.label)),
        };
        let mut values = Vec::new();
        for v in [
            PackingVariant::Full,
            PackingVariant::Packed01,
            PackingVariant::Bin0Only,
            PackingVariant::PerBinLoosened,
        ] {
            match packing_upper(&theta, n, case.epsilon, v) {
                Ok(r) => values.push((v, r.value)),
                Err(e) => return c.fail(format!("{} {}: {e}", case.label, v.name())),
            }
        }
        let value_of = |v: PackingVariant| {
            values
                .iter()
                .find(|(w, _)| *w == v)
                .map(|p| p.1)
                .unwrap_or(f64::NAN)
        };
        for &(v, shown) in &case.displayed {
            let got = value_of(v);
            let rel = (got - shown).abs() / shown.abs();
            c.check(rel <= 0.05, || {
                format!(
                    "{} {}: {got:.6e} vs displayed {shown:.6e} ({:.1}%)",
                    case.label,
                    v.name(),
                    100.0 * rel
                )
            });
        }
        for w in case.ordering.windows(2) {
            let (a, b) = (value_of(w[0]), value_of(w[1]));
            c.check(a <= b, || {
                format!(
                    "{}: {} = {a:.6e} should not exceed {} = {b:.6e}",
                    case.label,
                    w[0].name(),
                    w[1].name()
                )
            });
        }
        c.info(format!(
            "{}: {}",
            case.label,
            values
                .iter()
                .map(|(v, x)| format!("{} {x:.4e}", v.name()))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
}

fn region(c: &mut Checker, _seed: u64) {
    // moderate n: integer sweep over the whole valid range
    let (n, eps, n_eps1): (f64, f64, f64) = (1e6, 0.2, 20.0);
    let k_valid = n.powf(1.0 - n_eps1.ln() / n.ln());
    let mut previous: Option<f64> = None;
    let mut nonpositive = Vec::new();
    let mut worst_residual: f64 = 0.0;
    for k in 1..k_valid as u64 {
        let row = match range_decrease(k as f64, n, eps, n_eps1) {
            Ok(r) => r,
            Err(e) => return c.fail(format!("k={k}: {e}")),
        };
        if (k as f64) < row.threshold {
            c.check(row.upper_decrease == 0.0, || {
                format!("k={k}: decrease {} below threshold", row.upper_decrease)
            });
            continue;
        }
        if row.upper_decrease > 0.0 {
            c.checks += 1;
        } else {
            nonpositive.push(k);
            c.check(false, || {
                format!(
                    "k={k}: decrease not positive above threshold (raw {:.4})",
                    row.upper_decrease_raw
                )
            });
        }
        if let Some(prev) = previous {
            c.check(
                row.upper_decrease >= prev && (row.upper_decrease > prev || prev == 0.0),
                || format!("k={k}: decrease {} after {prev}", row.upper_decrease),
            );
        }
        previous = Some(row.upper_decrease);
        if row.gamma.is_finite() {
            worst_residual = worst_residual.max(row.gamma_residual);
            c.check(row.gamma >= 2.0 && row.gamma_residual < 1e-9, || {
                format!("k={k}: gamma {} residual {}", row.gamma, row.gamma_residual)
            });
        }
    }
    if let (Some(first), Some(last)) = (nonpositive.first(), nonpositive.last()) {
        c.info(format!(
            "n=1e6: non-asymptotic decrease is not positive for k in {first}..={last} ({} values above the threshold)",
            nonpositive.len()
        ));
    }

    // huge n: asymptotic and non-asymptotic decreases side by side
    let (n, eps, n_eps1): (f64, f64, f64) = (1e50, 0.1, 1000.0);
    let threshold = n.powf(1.0 / 3.0 + eps);
    let k_hi = n.powf(1.0 - n_eps1.ln() / n.ln()) * 0.999;
    let (a, b) = ((10.0 * threshold).ln(), k_hi.ln());
    let mut worst_gap: f64 = 0.0;
    for i in 0..=400 {
        let k = (a + (b - a) * i as f64 / 400.0).exp();
        let row = match range_decrease(k, n, eps, n_eps1) {
            Ok(r) => r,
            Err(e) => return c.fail(format!("k={k:.3e}: {e}")),
        };
        let gap = (row.upper_decrease_asymptotic - row.upper_decrease).abs() / row.upper_decrease;
        worst_gap = worst_gap.max(gap);
        c.check(gap <= 0.01, || {
            format!(
                "n=1e50 k={k:.3e}: asymptotic {:.6e} vs non-asymptotic {:.6e} ({:.2}%)",
                row.upper_decrease_asymptotic,
                row.upper_decrease,
                100.0 * gap
            )
        });
        worst_residual = worst_residual.max(row.gamma_residual);
        c.check(row.gamma >= 2.0 && row.gamma_residual < 1e-9, || {
            format!(
                "n=1e50 k={k:.3e}: gamma {} residual {}",
                row.gamma, row.gamma_residual
            )
        });
    }
    c.info(format!(
        "n=1e50: largest asymptotic/non-asymptotic gap {:.2}%",
        100.0 * worst_gap
    ));
    c.info(format!("largest fixed-point residual {worst_residual:.3e}"));
}

fn roundtrip(c: &mut Checker, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0011);
    for i in 0..1000u64 {
        let k = rng.random_range(1..=8usize);
        let n = rng.random_range(1..=64usize);
        let theta = random_theta(&mut rng, k);
        let run = || -> pattern_entropy::Result<_> {
            let grid = build_grid(GridKind::Eta, n as u64, SMALL_EPSILON)?;
            let model = CoderModel::new(&theta, &grid)?;
            let x = sample_sequence(&theta, n, seed.wrapping_add(i))?;
            let psi = extract_pattern(&x)?;
            let beta = bin_sequence(&theta, &grid, &x)?;
            let bits = encode(&model, &psi, &beta)?;
            let ideal = sequence_codelength(&model, &psi, &beta)?.bits;
            let back = decode(&model, &bits.bits, n)?;
            Ok((psi, beta, bits.len() as f64, ideal, back))
        };
        match run() {
            Ok((psi, beta, len, ideal, (psi2, beta2))) => {
                c.check(psi == psi2 && beta == beta2, || {
                    format!("sequence {i}: decode mismatch")
                });
                c.check(len >= ideal - TOL && len <= ideal + 2.0 + TOL, || {
                    format!("sequence {i}: {len} bits vs -log2 Q = {ideal}")
                });
            }
            Err(e) => c.fail(format!("sequence {i}: {e}")),
        }
    }
}

/// Runs the named suites (all when empty).
pub fn run_verify(names: &[String], seed: u64) -> Result<Vec<SuiteOutcome>, String> {
    let selected: Vec<&Suite> = if names.is_empty() {
        SUITES.iter().collect()
    } else {
        names
            .iter()
            .map(|n| {
                find_suite(n).ok_or_else(|| {
                    format!("unknown suite `{n}`; known: {}", suite_names().join(", "))
                })
            })
            .collect::<Result<_, _>>()?
    };
    Ok(selected.iter().map(|s| s.run(seed)).collect())
}
