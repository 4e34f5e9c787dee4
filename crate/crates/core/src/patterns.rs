//! Patterns (restricted growth strings), their enumeration and their
//! probabilities under an i.i.d. source.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use crate::distributions::ParamVector;
use crate::error::{invalid, Error, Result};
use crate::grids::{bin_index, Grid};
use crate::numeric::CompensatedSum;

/// Default cap on the number of patterns an enumeration may yield.
pub const DEFAULT_PATTERN_CAP: u128 = 10_000_000;

/// Cap on the number of partial assignments explored by
/// [`pattern_probability`].
pub const MAX_ASSIGNMENT_NODES: f64 = 1e8;

/// Pattern of a sequence: each symbol replaced by the 1-based order of its
/// first occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    indices: Vec<u32>,
    distinct: u32,
}

impl Pattern {
    /// Validates a restricted growth string.
    pub fn new(indices: Vec<u32>) -> Result<Self> {
        if indices.is_empty() {
            return invalid("empty pattern");
        }
        let mut max = 0;
        for (j, &v) in indices.iter().enumerate() {
            if v == 0 || v > max + 1 {
                return invalid(format!("position {j}: index {v} after maximum {max}"));
            }
            max = max.max(v);
        }
        Ok(Self {
            indices,
            distinct: max,
        })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of distinct indices.
    pub fn distinct(&self) -> u32 {
        self.distinct
    }

    /// Occurrences of each index `1..=distinct`.
    pub fn multiplicities(&self) -> Vec<u32> {
        let mut m = vec![0; self.distinct as usize];
        for &v in &self.indices {
            m[v as usize - 1] += 1;
        }
        m
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.distinct <= 9 {
            for v in &self.indices {
                write!(f, "{v}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.indices.iter().map(|v| v.to_string()).collect();
            f.write_str(&parts.join(","))
        }
    }
}

impl FromStr for Pattern {
    type Err = Error;

    /// Digit strings (`"12331433"`) or comma-separated indices.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parsed: Option<Vec<u32>> = if s.contains(',') {
            s.split(',').map(|t| t.trim().parse().ok()).collect()
        } else {
            s.chars().map(|c| c.to_digit(10)).collect()
        };
        match parsed {
            Some(v) => Pattern::new(v),
            None => invalid(format!("cannot parse pattern {s:?}")),
        }
    }
}

/// Pattern of an arbitrary sequence.
pub fn extract_pattern<T: Eq + Hash>(x: &[T]) -> Result<Pattern> {
    if x.is_empty() {
        return invalid("cannot take the pattern of an empty sequence");
    }
    let mut first: HashMap<&T, u32> = HashMap::new();
    let mut indices = Vec::with_capacity(x.len());
    for s in x {
        let next = first.len() as u32 + 1;
        indices.push(*first.entry(s).or_insert(next));
    }
    let distinct = first.len() as u32;
    Ok(Pattern { indices, distinct })
}

/// Number of patterns of length `n` with at most `k` distinct indices,
/// `sum_{m <= k} S(n, m)`, saturating at `u128::MAX`.
pub fn pattern_count(n: usize, k: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    let k = k.min(n);
    // row[m] = S(i, m)
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for _ in 0..n {
        for m in (1..=k).rev() {
            row[m] = (m as u128)
                .saturating_mul(row[m])
                .saturating_add(row[m - 1]);
        }
        row[0] = 0;
    }
    row.iter().fold(0u128, |a, &b| a.saturating_add(b))
}

/// Lexicographic iterator over patterns of length `n` with at most `k`
/// distinct indices.
#[derive(Clone, Debug)]
pub struct PatternIter {
    current: Option<Vec<u32>>,
    k: u32,
}

impl Iterator for PatternIter {
    type Item = Pattern;

    fn next(&mut self) -> Option<Pattern> {
        let cur = self.current.as_mut()?;
        let out = Pattern::new(cur.clone()).expect("iterator keeps growth property");
        // prefix maxima decide how far each position may grow
        let mut prefix_max = Vec::with_capacity(cur.len());
        let mut m = 0;
        for &v in cur.iter() {
            prefix_max.push(m);
            m = m.max(v);
        }
        let mut advanced = false;
        for i in (1..cur.len()).rev() {
            if cur[i] < self.k.min(prefix_max[i] + 1) {
                cur[i] += 1;
                for v in &mut cur[i + 1..] {
                    *v = 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.current = None;
        }
        Some(out)
    }
}

/// All patterns of length `n` over at most `k` distinct indices, refusing to
/// start when their number exceeds `cap`.
pub fn enumerate_patterns(n: usize, k: usize, cap: u128) -> Result<PatternIter> {
    if n == 0 || k == 0 {
        return invalid("pattern enumeration needs n >= 1 and k >= 1");
    }
    let count = pattern_count(n, k);
    if count > cap {
        return Err(Error::ResourceCap {
            what: "pattern enumeration",
            needed: count as f64,
            cap: cap as f64,
        });
    }
    Ok(PatternIter {
        current: Some(vec![1; n]),
        k: k.min(u32::MAX as usize) as u32,
    })
}

/// Probability that an i.i.d. block has pattern `psi`: the sum over
/// injections of pattern indices into letters of the product of the
/// assigned letter probabilities raised to the index multiplicities.
///
/// Letters of equal probability are handled as one run with a capacity, so a
/// uniform source costs one path per pattern.
pub fn pattern_probability(theta: &ParamVector, psi: &Pattern) -> Result<f64> {
    let m = psi.distinct() as u64;
    if m > theta.k() {
        return Ok(0.0);
    }
    let levels = theta.levels();
    let nodes = (levels.len() as f64).powi(m as i32);
    if nodes > MAX_ASSIGNMENT_NODES {
        return Err(Error::ResourceCap {
            what: "pattern probability assignments",
            needed: nodes,
            cap: MAX_ASSIGNMENT_NODES,
        });
    }
    let mut mult = psi.multiplicities();
    // big multiplicities first keeps the partial products small early
    mult.sort_unstable_by(|a, b| b.cmp(a));
    let powers: Vec<Vec<f64>> = mult
        .iter()
        .map(|&e| levels.iter().map(|l| l.prob.powi(e as i32)).collect())
        .collect();
    let mut capacity: Vec<u64> = levels.iter().map(|l| l.count).collect();
    let mut acc = CompensatedSum::new();
    assign(0, 1.0, &powers, &mut capacity, &mut acc);
    Ok(acc.value())
}

fn assign(
    j: usize,
    weight: f64,
    powers: &[Vec<f64>],
    capacity: &mut [u64],
    acc: &mut CompensatedSum,
) {
    if j == powers.len() {
        acc.add(weight);
        return;
    }
    for g in 0..capacity.len() {
        let c = capacity[g];
        if c == 0 {
            continue;
        }
        capacity[g] -= 1;
        assign(
            j + 1,
            weight * c as f64 * powers[j][g],
            powers,
            capacity,
            acc,
        );
        capacity[g] += 1;
    }
}

/// Bin of each symbol's probability in `grid`.
pub fn bin_sequence(theta: &ParamVector, grid: &Grid, x: &[u64]) -> Result<Vec<usize>> {
    x.iter()
        .map(|&s| bin_index(grid, theta.prob_of(s)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_pattern_for_relabelled_words() {
        let a = extract_pattern(&"lossless".chars().collect::<Vec<_>>()).unwrap();
        let b = extract_pattern(&"sellsoll".chars().collect::<Vec<_>>()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "12331433");
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(extract_pattern::<u8>(&[]).is_err());
    }

    #[test]
    fn parse_and_render() {
        let p: Pattern = "12331433".parse().unwrap();
        assert_eq!(p.distinct(), 4);
        assert!("1233143a".parse::<Pattern>().is_err());
        assert!("13".parse::<Pattern>().is_err());
        let long: Pattern = "1,2,3,4,5,6,7,8,9,10,1".parse().unwrap();
        assert_eq!(long.to_string(), "1,2,3,4,5,6,7,8,9,10,1");
    }

    #[test]
    fn small_enumerations() {
        let got: Vec<String> = enumerate_patterns(3, 2, 100)
            .unwrap()
            .map(|p| p.to_string())
            .collect();
        assert_eq!(got, ["111", "112", "121", "122"]);
        assert_eq!(enumerate_patterns(3, 5, 100).unwrap().count(), 5);
        assert_eq!(pattern_count(3, 2), 4);
        assert!(enumerate_patterns(12, 12, 1000).is_err());
    }

    #[test]
    fn single_symbol_pattern() {
        let theta = ParamVector::new(&[0.5, 0.5]).unwrap();
        let p = Pattern::new(vec![1]).unwrap();
        assert_eq!(pattern_probability(&theta, &p).unwrap(), 1.0);
    }

    #[test]
    fn fair_coin_two_symbols() {
        let theta = ParamVector::new(&[0.5, 0.5]).unwrap();
        for s in ["11", "12"] {
            let p: Pattern = s.parse().unwrap();
            assert!((pattern_probability(&theta, &p).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn too_many_indices_is_impossible() {
        let theta = ParamVector::new(&[0.5, 0.5]).unwrap();
        let p: Pattern = "123".parse().unwrap();
        assert_eq!(pattern_probability(&theta, &p).unwrap(), 0.0);
    }
}
