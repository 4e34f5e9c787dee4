//! Parameter vectors, the source families used in the examples, i.i.d.
//! entropies and seeded sampling.
//!
//! A [`ParamVector`] is stored as ascending runs of equal probabilities so
//! that alphabets with billions of letters (two-level sources at `n = 10^6`)
//! stay cheap. Letters are numbered `1..=k` in ascending probability order.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{self, CompensatedSum};

/// Tolerance on `sum(theta) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Largest alphabet an explicit family may materialize.
pub const MAX_EXPLICIT_K: u64 = 10_000_000;

/// A run of `count` letters sharing probability `prob`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub prob: f64,
    pub count: u64,
}

/// Probability vector of an i.i.d. source, sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    levels: Vec<Level>,
    k: u64,
}

impl ParamVector {
    /// Builds from explicit letter probabilities (any order).
    pub fn new(probs: &[f64]) -> Result<Self> {
        let levels = probs.iter().map(|&p| Level { prob: p, count: 1 }).collect();
        Self::from_levels(levels)
    }

    /// Builds from runs; runs are sorted and equal probabilities merged.
    pub fn from_levels(mut levels: Vec<Level>) -> Result<Self> {
        if levels.iter().all(|l| l.count == 0) {
            return invalid("empty parameter vector");
        }
        for l in &levels {
            if !(l.prob.is_finite() && l.prob > 0.0 && l.prob <= 1.0) {
                return invalid(format!("letter probability {} outside (0, 1]", l.prob));
            }
        }
        levels.retain(|l| l.count > 0);
        levels.sort_by(|a, b| a.prob.total_cmp(&b.prob));
        let mut merged: Vec<Level> = Vec::with_capacity(levels.len());
        for l in levels {
            match merged.last_mut() {
                Some(last) if last.prob == l.prob => last.count += l.count,
                _ => merged.push(l),
            }
        }
        let total = numeric::sum(merged.iter().map(|l| l.prob * l.count as f64));
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        let k = merged.iter().map(|l| l.count).sum();
        Ok(Self { levels: merged, k })
    }

    /// Alphabet size.
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Letter probabilities in ascending order, refusing alphabets above `cap`.
    pub fn expand(&self, cap: u64) -> Result<Vec<f64>> {
        if self.k > cap {
            return Err(Error::ResourceCap {
                what: "alphabet expansion",
                needed: self.k as f64,
                cap: cap as f64,
            });
        }
        let mut out = Vec::with_capacity(self.k as usize);
        for l in &self.levels {
            out.extend(std::iter::repeat_n(l.prob, l.count as usize));
        }
        Ok(out)
    }

    /// Probability of letter `i` (1-based).
    pub fn prob_of(&self, i: u64) -> Result<f64> {
        if i == 0 || i > self.k {
            return invalid(format!("letter {i} outside 1..={}", self.k));
        }
        let mut seen = 0;
        for l in &self.levels {
            seen += l.count;
            if i <= seen {
                return Ok(l.prob);
            }
        }
        unreachable!("letter index checked against k")
    }
}

/// Named source families; serialized with a `family` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Explicit letter probabilities.
    Explicit { probs: Vec<f64> },
    /// `k` equiprobable letters, either given directly or as `k = n^(1 - nu)`.
    Uniform {
        #[serde(default)]
        k: Option<u64>,
        #[serde(default)]
        nu: Option<f64>,
    },
    /// `phi0 n^(1+mu)` letters of probability `n^-(1+mu)` plus
    /// `(1 - phi0) n^(1-nu)` letters of probability `n^-(1-nu)`. Negative `nu`
    /// puts the second level below `1/n` as well.
    TwoLevel { phi0: f64, mu: f64, nu: f64 },
    /// `theta_i` proportional to `decay^i`, `i = 1..=k`.
    Geometric { k: u64, decay: f64 },
    /// `theta_i` proportional to `i^-exponent`, `i = 1..=k`.
    Zipf { k: u64, exponent: f64 },
}

/// A materialized source and the factor applied to make it sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub theta: ParamVector,
    /// Ratio of the realized to the nominal probability of the level that
    /// absorbed rounding; `1.0` when nothing was rescaled.
    pub renormalization: f64,
}

/// Largest relative rescaling tolerated when rounding letter counts.
pub const MAX_RENORMALIZATION: f64 = 0.10;

/// Builds the parameter vector of a family at block length `n`.
pub fn make_distribution(spec: &SourceSpec, n: Option<u64>) -> Result<Source> {
    let need_n = || {
        n.filter(|&n| n >= 1)
            .ok_or_else(|| Error::Invalid("family needs n >= 1".into()))
    };
    match spec {
        SourceSpec::Explicit { probs } => Ok(Source {
            theta: ParamVector::new(probs)?,
            renormalization: 1.0,
        }),
        SourceSpec::Uniform { k, nu } => {
            let k = match (k, nu) {
                (Some(k), None) => *k,
                (None, Some(nu)) => {
                    let n = need_n()? as f64;
                    n.powf(1.0 - nu).round() as u64
                }
                _ => return invalid("uniform family needs exactly one of k, nu"),
            };
            if k == 0 {
                return invalid("uniform family has zero letters");
            }
            Ok(Source {
                theta: ParamVector::from_levels(vec![Level {
                    prob: 1.0 / k as f64,
                    count: k,
                }])?,
                renormalization: 1.0,
            })
        }
        SourceSpec::TwoLevel { phi0, mu, nu } => {
            let n = need_n()? as f64;
            if !(*phi0 > 0.0 && *phi0 < 1.0) {
                return invalid(format!("phi0 = {phi0} outside (0, 1)"));
            }
            if *nu >= 1.0 {
                return invalid(format!("nu = {nu} must be below 1"));
            }
            let low_prob = n.powf(-(1.0 + mu));
            let low_count = (phi0 * n.powf(1.0 + mu)).round();
            let high_nominal = n.powf(-(1.0 - nu));
            let high_count = ((1.0 - phi0) * n.powf(1.0 - nu)).round();
            if low_count < 1.0 || high_count < 1.0 {
                return invalid("a two-level count rounds to zero letters");
            }
            let low_mass = low_count * low_prob;
            if low_mass >= 1.0 {
                return invalid("low level absorbs all probability mass");
            }
            let high_prob = (1.0 - low_mass) / high_count;
            let factor = high_prob / high_nominal;
            if (factor - 1.0).abs() > MAX_RENORMALIZATION {
                return invalid(format!(
                    "rounding needs a rescaling factor {factor}, beyond {MAX_RENORMALIZATION}"
                ));
            }
            let theta = ParamVector::from_levels(vec![
                Level {
                    prob: low_prob,
                    count: low_count as u64,
                },
                Level {
                    prob: high_prob,
                    count: high_count as u64,
                },
            ])?;
            Ok(Source {
                theta,
                renormalization: factor,
            })
        }
        SourceSpec::Geometric { k, decay } => {
            if !(*decay > 0.0) {
                return invalid("geometric decay must be positive");
            }
            normalized((1..=*k).map(|i| decay.powf(i as f64)), *k)
        }
        SourceSpec::Zipf { k, exponent } => {
            if !(*exponent >= 0.0) {
                return invalid("zipf exponent must be non-negative");
            }
            normalized((1..=*k).map(|i| (i as f64).powf(-exponent)), *k)
        }
    }
}

fn normalized(weights: impl Iterator<Item = f64>, k: u64) -> Result<Source> {
    if k == 0 {
        return invalid("family has zero letters");
    }
    if k > MAX_EXPLICIT_K {
        return Err(Error::ResourceCap {
            what: "explicit alphabet",
            needed: k as f64,
            cap: MAX_EXPLICIT_K as f64,
        });
    }
    let w: Vec<f64> = weights.collect();
    let total = numeric::sum(w.iter().copied());
    let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    // push the residual rounding error into the largest letter
    probs.sort_by(f64::total_cmp);
    let residual = 1.0 - numeric::sum(probs.iter().copied());
    if let Some(last) = probs.last_mut() {
        *last += residual;
    }
    Ok(Source {
        theta: ParamVector::new(&probs)?,
        renormalization: 1.0,
    })
}

/// Per-symbol i.i.d. entropy `H(X)`.
pub fn iid_entropy(theta: &ParamVector) -> f64 {
    let mut acc = CompensatedSum::new();
    for l in theta.levels() {
        acc.add(l.count as f64 * numeric::neg_xlog2x(l.prob));
    }
    acc.value()
}

pub use numeric::binary_entropy;

/// Draws i.i.d. letters (1-based, ascending-probability numbering).
#[derive(Clone, Debug)]
pub struct Sampler {
    levels: WeightedIndex<f64>,
    offsets: Vec<u64>,
    counts: Vec<u64>,
}

impl Sampler {
    pub fn new(theta: &ParamVector) -> Result<Self> {
        let weights = theta.levels().iter().map(|l| l.prob * l.count as f64);
        let levels = WeightedIndex::new(weights).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut offsets = Vec::with_capacity(theta.levels().len());
        let mut acc = 0;
        for l in theta.levels() {
            offsets.push(acc);
            acc += l.count;
        }
        let counts = theta.levels().iter().map(|l| l.count).collect();
        Ok(Self {
            levels,
            offsets,
            counts,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let g = self.levels.sample(rng);
        self.offsets[g] + rng.random_range(0..self.counts[g]) + 1
    }

    pub fn draw_sequence<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// `n` i.i.d. draws from a generator seeded with `seed`.
pub fn sample_sequence(theta: &ParamVector, n: usize, seed: u64) -> Result<Vec<u64>> {
    let sampler = Sampler::new(theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw_sequence(n, &mut rng))
}
