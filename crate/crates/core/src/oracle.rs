//! Exact pattern entropies by enumeration, a Monte Carlo estimator, and a
//! brute-force count of bin-preserving permutations.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coder::{sequence_codelength, CoderModel};
use crate::distributions::{iid_entropy, ParamVector, Sampler};
use crate::error::{invalid, Error, Result};
use crate::grids::{bin_index, Grid};
use crate::numeric::{neg_xlog2x, CompensatedSum};
use crate::patterns::{extract_pattern, pattern_probability, Pattern};

/// Largest number of sequences `k^n` enumerated exactly.
pub const MAX_SEQUENCES: f64 = 1e7;

/// Largest alphabet for the brute-force permutation count.
pub const MAX_PERMUTATION_K: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEntropies {
    /// `H(Psi^n)`.
    pub h_pattern: f64,
    /// `H(Psi^n, B^n)` with `B` the `eta` bins of the symbols.
    pub h_joint: f64,
    /// `n H(X)`.
    pub h_x_block: f64,
    /// `E[-log2 Q(Psi^n, B^n)]` under the coder model.
    pub expected_codelength: f64,
}

/// Enumerates all `k^n` sequences of an explicit alphabet.
pub fn exact_entropies(theta: &ParamVector, grid: &Grid) -> Result<ExactEntropies> {
    let n = grid.n as usize;
    let k = theta.k();
    let total = (k as f64).powi(n as i32);
    if total > MAX_SEQUENCES {
        return Err(Error::ResourceCap {
            what: "exact enumeration k^n",
            needed: total,
            cap: MAX_SEQUENCES,
        });
    }
    let letters = theta.expand(k)?;
    let bins = letters
        .iter()
        .map(|&p| bin_index(grid, p))
        .collect::<Result<Vec<_>>>()?;
    let model = CoderModel::new(theta, grid)?;

    let mut joint: HashMap<(Vec<u32>, Vec<usize>), f64> = HashMap::new();
    let mut digits = vec![0usize; n];
    for _ in 0..total as u64 {
        let p: f64 = digits.iter().map(|&d| letters[d]).product();
        let psi = extract_pattern(&digits)?;
        let beta: Vec<usize> = digits.iter().map(|&d| bins[d]).collect();
        *joint.entry((psi.indices().to_vec(), beta)).or_insert(0.0) += p;
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < letters.len() {
                break;
            }
            *d = 0;
        }
    }

    let mut patterns: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut h_joint = CompensatedSum::new();
    let mut codelength = CompensatedSum::new();
    for ((psi, beta), p) in &joint {
        *patterns.entry(psi.clone()).or_insert(0.0) += p;
        h_joint.add(neg_xlog2x(*p));
        let pattern = Pattern::new(psi.clone())?;
        let c = sequence_codelength(&model, &pattern, beta)?;
        codelength.add(p * c.bits);
    }
    let h_pattern = patterns
        .values()
        .map(|&p| neg_xlog2x(p))
        .collect::<CompensatedSum>();
    Ok(ExactEntropies {
        h_pattern: h_pattern.value(),
        h_joint: h_joint.value(),
        h_x_block: n as f64 * iid_entropy(theta),
        expected_codelength: codelength.value(),
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_CHUNK: u64 = 4096;

/// Estimates `H(Psi^n)` as the mean of `-log2 P(Psi(X^n))` over sampled
/// blocks. Chunks of samples draw from separate streams of one seeded
/// generator, so the result does not depend on the thread count.
pub fn mc_pattern_entropy(
    theta: &ParamVector,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 2 {
        return invalid("Monte Carlo needs at least two samples");
    }
    if n == 0 {
        return invalid("block length must be positive");
    }
    let sampler = Sampler::new(theta)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let size = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut s1 = CompensatedSum::new();
            let mut s2 = CompensatedSum::new();
            for _ in 0..size {
                let x = sampler.draw_sequence(n, &mut rng);
                let psi = extract_pattern(&x)?;
                let v = -pattern_probability(theta, &psi)?.log2();
                s1.add(v);
                s2.add(v * v);
            }
            Ok((s1.value(), s2.value()))
        })
        .collect();
    let mut s1 = CompensatedSum::new();
    let mut s2 = CompensatedSum::new();
    for r in partial {
        let (a, b) = r?;
        s1.add(a);
        s2.add(b);
    }
    let m = samples as f64;
    let mean = s1.value() / m;
    let var = ((s2.value() - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / m).sqrt(),
        samples,
    })
}

/// Counts permutations of `0..k` that map every letter to a letter of the
/// same bin, by visiting all `k!` permutations.
pub fn brute_force_permutation_count(bins: &[usize]) -> Result<u64> {
    let k = bins.len();
    if k > MAX_PERMUTATION_K {
        return Err(Error::ResourceCap {
            what: "permutation enumeration k",
            needed: k as f64,
            cap: MAX_PERMUTATION_K as f64,
        });
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let preserves = |p: &[usize]| p.iter().enumerate().all(|(i, &j)| bins[i] == bins[j]);
    let mut count = u64::from(preserves(&perm));
    // Heap's algorithm, iterative form
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count += u64::from(preserves(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_grid, GridKind};

    #[test]
    fn fair_coin_two_draws() {
        let theta = ParamVector::new(&[0.5, 0.5]).unwrap();
        let grid = build_grid(GridKind::Eta, 2, 0.5).unwrap();
        let e = exact_entropies(&theta, &grid).unwrap();
        assert!((e.h_pattern - 1.0).abs() < 1e-12);
        assert!((e.h_x_block - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_letter_has_no_pattern_entropy() {
        let theta = ParamVector::new(&[1.0]).unwrap();
        let grid = build_grid(GridKind::Eta, 5, 0.5).unwrap();
        let e = exact_entropies(&theta, &grid).unwrap();
        assert_eq!(e.h_pattern, 0.0);
        let mc = mc_pattern_entropy(&theta, 5, 100, 1).unwrap();
        assert_eq!((mc.mean, mc.std_error), (0.0, 0.0));
    }

    #[test]
    fn enumeration_cap() {
        let theta = ParamVector::new(&[0.25; 4]).unwrap();
        let grid = build_grid(GridKind::Eta, 12, 0.5).unwrap();
        assert!(matches!(
            exact_entropies(&theta, &grid),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(brute_force_permutation_count(&[0, 0, 1]).unwrap(), 2);
        assert_eq!(brute_force_permutation_count(&[3, 3, 3, 3]).unwrap(), 24);
        assert_eq!(brute_force_permutation_count(&[]).unwrap(), 1);
        assert!(brute_force_permutation_count(&[0; 9]).is_err());
    }

    #[test]
    fn mc_is_reproducible() {
        let theta = ParamVector::new(&[0.2, 0.3, 0.5]).unwrap();
        let a = mc_pattern_entropy(&theta, 6, 5000, 4).unwrap();
        let b = mc_pattern_entropy(&theta, 6, 5000, 4).unwrap();
        assert_eq!(a, b);
    }
}
