//! Sequential probability assignment over (pattern index, bin) pairs and an
//! arithmetic coder driven by it.
//!
//! The model codes the pattern jointly with the `eta` bin of every symbol.
//! A re-occurring index costs `rho_b` of its bin; a new index in bin `b`
//! gets whatever mass of `phi_b` its already seen letters have not used,
//! `phi_b - seen_b * rho_b`. For `b >= 2`, `rho_b = phi_b / k_b`; the two
//! lowest bins use `rho_b = (n phi_b - L_b) / (n min(k_b, n))`, where `L_b`
//! is the expected number of their letters that occur.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distributions::ParamVector;
use crate::error::{invalid, Error, Result};
use crate::grids::{bin_stats, Grid, GridKind};
use crate::numeric::{self, CompensatedSum};
use crate::patterns::Pattern;

/// Probability parameters of one populated bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinModel {
    pub index: usize,
    pub count: u64,
    pub mass: f64,
    pub occupancy: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoderModel {
    pub n: u64,
    pub bins: Vec<BinModel>,
}

impl CoderModel {
    pub fn new(theta: &ParamVector, grid: &Grid) -> Result<Self> {
        if grid.kind != GridKind::Eta {
            return invalid("the coder is defined on the eta grid");
        }
        let n = grid.n;
        let nf = n as f64;
        let stats = bin_stats(theta, grid)?;
        let bins = stats
            .bins
            .iter()
            .map(|e| {
                let rho = if e.index >= 2 {
                    e.mass / e.count as f64
                } else {
                    ((nf * e.mass - e.occupancy) / (nf * e.count.min(n) as f64)).max(0.0)
                };
                BinModel {
                    index: e.index,
                    count: e.count,
                    mass: e.mass,
                    occupancy: e.occupancy,
                    rho,
                }
            })
            .collect();
        Ok(Self { n, bins })
    }

    fn position(&self, bin: usize) -> Option<usize> {
        self.bins.binary_search_by_key(&bin, |b| b.index).ok()
    }

    fn new_mass(&self, pos: usize, seen: u64) -> (f64, bool) {
        let b = &self.bins[pos];
        let m = b.mass - seen as f64 * b.rho;
        if m < 0.0 {
            (0.0, true)
        } else {
            (m, false)
        }
    }
}

/// What the coder has seen so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoderState {
    /// Position in `CoderModel::bins` of each index seen, in index order.
    index_bin: Vec<usize>,
    /// Distinct indices seen per populated bin.
    seen: Vec<u64>,
}

impl CoderState {
    pub fn new(model: &CoderModel) -> Self {
        Self {
            index_bin: Vec::new(),
            seen: vec![0; model.bins.len()],
        }
    }

    pub fn distinct(&self) -> usize {
        self.index_bin.len()
    }

    /// Records the step `(psi_j, beta_j)`; the pair must be legal.
    pub fn update(&mut self, model: &CoderModel, psi_j: u32, bin: usize) -> Result<()> {
        let j = psi_j as usize;
        if j == self.index_bin.len() + 1 {
            let pos = model
                .position(bin)
                .ok_or_else(|| Error::Invalid(format!("bin {bin} holds no letters")))?;
            self.index_bin.push(pos);
            self.seen[pos] += 1;
            Ok(())
        } else if j >= 1 && j <= self.index_bin.len() {
            Ok(())
        } else {
            invalid(format!("index {psi_j} does not continue a pattern"))
        }
    }
}

/// Conditional probability of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepProb {
    pub prob: f64,
    /// Set when the new-index mass went negative and was clamped to zero.
    pub clamped: bool,
}

pub fn next_symbol_prob(
    model: &CoderModel,
    state: &CoderState,
    psi_j: u32,
    bin: usize,
) -> Result<StepProb> {
    let j = psi_j as usize;
    let d = state.index_bin.len();
    if j >= 1 && j <= d {
        let pos = state.index_bin[j - 1];
        let prob = if model.bins[pos].index == bin {
            model.bins[pos].rho
        } else {
            0.0
        };
        return Ok(StepProb {
            prob,
            clamped: false,
        });
    }
    if j == d + 1 {
        return Ok(match model.position(bin) {
            Some(pos) => {
                let (prob, clamped) = model.new_mass(pos, state.seen[pos]);
                StepProb { prob, clamped }
            }
            None => StepProb {
                prob: 0.0,
                clamped: false,
            },
        });
    }
    invalid(format!("index {psi_j} does not continue a pattern"))
}

/// `-log2 Q` of a whole sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Codelength {
    /// Infinite when some step has zero probability.
    pub bits: f64,
    /// First step (0-based) with zero probability.
    pub zero_step: Option<usize>,
}

pub fn sequence_codelength(
    model: &CoderModel,
    psi: &Pattern,
    beta: &[usize],
) -> Result<Codelength> {
    if psi.len() != beta.len() {
        return invalid("pattern and bin sequence differ in length");
    }
    let mut state = CoderState::new(model);
    let mut acc = CompensatedSum::new();
    for (step, (&p, &b)) in psi.indices().iter().zip(beta).enumerate() {
        let q = next_symbol_prob(model, &state, p, b)?;
        if q.prob <= 0.0 {
            return Ok(Codelength {
                bits: f64::INFINITY,
                zero_step: Some(step),
            });
        }
        acc.add(-q.prob.log2());
        state.update(model, p, b)?;
    }
    Ok(Codelength {
        bits: acc.value(),
        zero_step: None,
    })
}

/// Legal events at a state with their (unnormalized) probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Event {
    Seen(u32),
    New(usize),
}

fn events(model: &CoderModel, state: &CoderState) -> Vec<(Event, f64)> {
    let mut out = Vec::with_capacity(state.index_bin.len() + model.bins.len());
    for (i, &pos) in state.index_bin.iter().enumerate() {
        let rho = model.bins[pos].rho;
        if rho > 0.0 {
            out.push((Event::Seen(i as u32 + 1), rho));
        }
    }
    for pos in 0..model.bins.len() {
        let (m, _) = model.new_mass(pos, state.seen[pos]);
        if m > 0.0 {
            out.push((Event::New(pos), m));
        }
    }
    out
}

const FREQ_BITS: u32 = 64;
const FREQ_TOTAL: u128 = 1 << FREQ_BITS;
const NORM: u128 = 1 << 127;
const HALF: u128 = 1 << 126;

/// Integer frequencies summing to `2^64`, every entry at least one.
fn quantize(weights: &[f64]) -> Vec<u128> {
    let total: f64 = numeric::sum(weights.iter().copied());
    let mut f: Vec<u128> = weights
        .iter()
        .map(|w| ((w / total * FREQ_TOTAL as f64) as u128).max(1))
        .collect();
    let sum: u128 = f.iter().sum();
    let largest = (0..f.len()).max_by_key(|&i| f[i]).unwrap();
    if sum <= FREQ_TOTAL {
        f[largest] += FREQ_TOTAL - sum;
    } else {
        f[largest] -= sum - FREQ_TOTAL;
    }
    f
}

/// A bit string, packed big-endian into bytes on request.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitString {
    pub bits: Vec<bool>,
}

impl BitString {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Most significant bit first; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|c| {
                c.iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let bits = bytes
            .iter()
            .flat_map(|&byte| (0..8).map(move |i| byte & (0x80 >> i) != 0))
            .collect();
        Self { bits }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

struct Encoder {
    low: u128,
    range: u128,
    out: Vec<bool>,
}

impl Encoder {
    fn new() -> Self {
        Self {
            low: 0,
            range: NORM,
            out: Vec::new(),
        }
    }

    fn carry(&mut self) {
        for b in self.out.iter_mut().rev() {
            *b = !*b;
            if *b {
                return;
            }
        }
        unreachable!("carry past the first bit");
    }

    fn encode(&mut self, cum: u128, freq: u128, last: bool) {
        let r = self.range >> FREQ_BITS;
        let start = r * cum;
        self.range = if last { self.range - start } else { r * freq };
        self.low += start;
        if self.low >= NORM {
            self.low -= NORM;
            self.carry();
        }
        while self.range <= HALF {
            self.out.push(self.low >= HALF);
            self.low = (self.low << 1) & (NORM - 1);
            self.range <<= 1;
        }
    }

    /// Emits the fewest bits whose dyadic interval lies inside the final
    /// coding interval.
    fn finish(mut self) -> BitString {
        for t in 0..=2u32 {
            let unit = NORM >> t;
            let q = self.low.div_ceil(unit);
            if self.range >= unit && q * unit - self.low <= self.range - unit {
                if q == 1 << t {
                    self.carry();
                    self.out.extend(std::iter::repeat_n(false, t as usize));
                } else {
                    for i in (0..t).rev() {
                        self.out.push(q >> i & 1 == 1);
                    }
                }
                return BitString { bits: self.out };
            }
        }
        unreachable!("a normalized interval always contains a quarter-unit dyadic interval")
    }
}

struct Decoder<'a> {
    bits: &'a [bool],
    pos: usize,
    value: u128,
    range: u128,
}

impl<'a> Decoder<'a> {
    fn new(bits: &'a [bool]) -> Self {
        let mut d = Self {
            bits,
            pos: 0,
            value: 0,
            range: 1,
        };
        d.fill();
        d
    }

    fn fill(&mut self) {
        while self.range <= HALF {
            let bit = self.bits.get(self.pos).copied().unwrap_or(false);
            self.pos += 1;
            self.value = (self.value << 1) | bit as u128;
            self.range <<= 1;
        }
    }

    fn decode(&mut self, freqs: &[u128]) -> usize {
        let r = self.range >> FREQ_BITS;
        let target = self.value / r;
        let mut cum = 0u128;
        let mut chosen = freqs.len() - 1;
        for (i, &f) in freqs.iter().enumerate().take(freqs.len() - 1) {
            if target < cum + f {
                chosen = i;
                break;
            }
            cum += f;
        }
        let start = r * cum;
        let last = chosen == freqs.len() - 1;
        self.range = if last {
            self.range - start
        } else {
            r * freqs[chosen]
        };
        self.value -= start;
        self.fill();
        chosen
    }
}

/// Arithmetic-codes a pattern and its bin sequence. The output length lies in
/// `[-log2 Q, -log2 Q + 2]`; the block length is not stored.
pub fn encode(model: &CoderModel, psi: &Pattern, beta: &[usize]) -> Result<BitString> {
    if psi.len() != beta.len() {
        return invalid("pattern and bin sequence differ in length");
    }
    let mut state = CoderState::new(model);
    let mut enc = Encoder::new();
    for (step, (&p, &b)) in psi.indices().iter().zip(beta).enumerate() {
        let evs = events(model, &state);
        let want = if p as usize <= state.distinct() {
            Event::Seen(p)
        } else {
            match model.position(b) {
                Some(pos) => Event::New(pos),
                None => return Err(Error::ZeroProbability { step }),
            }
        };
        let slot = evs
            .iter()
            .position(|(e, _)| *e == want)
            .ok_or(Error::ZeroProbability { step })?;
        if let Event::Seen(i) = want {
            if model.bins[state.index_bin[i as usize - 1]].index != b {
                return Err(Error::ZeroProbability { step });
            }
        }
        let freqs = quantize(&evs.iter().map(|e| e.1).collect::<Vec<_>>());
        let cum: u128 = freqs[..slot].iter().sum();
        enc.encode(cum, freqs[slot], slot == freqs.len() - 1);
        state.update(model, p, b)?;
    }
    Ok(enc.finish())
}

/// Decodes `n` steps. The stream must be exactly the encoding of what it
/// decodes to; anything else is reported as corrupt.
pub fn decode(model: &CoderModel, bits: &[bool], n: usize) -> Result<(Pattern, Vec<usize>)> {
    if n == 0 {
        return invalid("block length must be positive");
    }
    let mut state = CoderState::new(model);
    let mut dec = Decoder::new(bits);
    let mut psi = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for _ in 0..n {
        let evs = events(model, &state);
        if evs.is_empty() {
            return Err(Error::CorruptStream("no legal continuation".into()));
        }
        let freqs = quantize(&evs.iter().map(|e| e.1).collect::<Vec<_>>());
        let (p, b) = match evs[dec.decode(&freqs)].0 {
            Event::Seen(i) => (i, model.bins[state.index_bin[i as usize - 1]].index),
            Event::New(pos) => (state.distinct() as u32 + 1, model.bins[pos].index),
        };
        state.update(model, p, b)?;
        psi.push(p);
        beta.push(b);
    }
    let psi = Pattern::new(psi)?;
    let canonical = encode(model, &psi, &beta)?;
    if canonical.bits != bits {
        return Err(Error::CorruptStream(format!(
            "{} bits do not form the canonical {}-bit code of their decoding",
            bits.len(),
            canonical.len()
        )));
    }
    Ok((psi, beta))
}

/// Decodes a byte-packed stream, accepting up to seven zero pad bits.
pub fn decode_bytes(model: &CoderModel, bytes: &[u8], n: usize) -> Result<(Pattern, Vec<usize>)> {
    let all = BitString::from_bytes(bytes).bits;
    let mut end = all.len();
    let floor = all.len().saturating_sub(7);
    loop {
        match decode(model, &all[..end], n) {
            Ok(out) => return Ok(out),
            Err(Error::CorruptStream(msg)) => {
                if end == floor || end == 0 || all[end - 1] {
                    return Err(Error::CorruptStream(msg));
                }
                end -= 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Letter-level view of a small source used by the exact expectations.
fn letter_bins(
    model: &CoderModel,
    theta: &ParamVector,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let letters = theta.expand(20)?;
    let pos = letters
        .iter()
        .map(|&p| {
            let b = crate::grids::bin_index(grid, p)?;
            model
                .position(b)
                .ok_or_else(|| Error::Invalid("letter outside the model bins".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((letters, pos))
}

/// Distribution over the set of letters seen after `n` draws, indexed by
/// bit mask, for alphabets of at most 20 letters.
fn seen_set_distribution(letters: &[f64], n: u64, mut per_step: impl FnMut(&[f64])) -> Vec<f64> {
    let k = letters.len();
    let mut dist = vec![0.0; 1 << k];
    dist[0] = 1.0;
    for _ in 0..n {
        per_step(&dist);
        let mut next = vec![0.0; 1 << k];
        for (mask, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (i, &t) in letters.iter().enumerate() {
                next[mask | 1 << i] += p * t;
            }
        }
        dist = next;
    }
    dist
}

/// `E[-log2 Q]` as a sum over steps of the expected cost of the next symbol
/// given the set of letters seen so far, for alphabets of at most 20 letters.
pub fn expected_codelength_stepwise(
    model: &CoderModel,
    theta: &ParamVector,
    grid: &Grid,
) -> Result<f64> {
    let (letters, pos) = letter_bins(model, theta, grid)?;
    let mut total = CompensatedSum::new();
    let mut infinite = false;
    seen_set_distribution(&letters, model.n, |dist| {
        for (mask, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (i, &t) in letters.iter().enumerate() {
                let q = if mask & (1 << i) != 0 {
                    model.bins[pos[i]].rho
                } else {
                    let seen = (0..letters.len())
                        .filter(|&l| mask & (1 << l) != 0 && pos[l] == pos[i])
                        .count() as u64;
                    model.new_mass(pos[i], seen).0
                };
                if q <= 0.0 {
                    infinite = true;
                } else {
                    total.add(-p * t * q.log2());
                }
            }
        }
    });
    Ok(if infinite {
        f64::INFINITY
    } else {
        total.value()
    })
}

/// `E[-log2 Q]` split into re-occurrence costs and first-occurrence costs
/// per bin, using the exact law of the number of distinct letters of each
/// bin that occur. Alphabets of at most 20 letters.
pub fn expected_codelength_by_bins(
    model: &CoderModel,
    theta: &ParamVector,
    grid: &Grid,
) -> Result<f64> {
    let (letters, pos) = letter_bins(model, theta, grid)?;
    let dist = seen_set_distribution(&letters, model.n, |_| {});
    let nf = model.n as f64;
    let mut total = CompensatedSum::new();
    for (bp, b) in model.bins.iter().enumerate() {
        // law of the number of distinct letters of this bin that occur
        let mut law = vec![0.0; b.count as usize + 1];
        for (mask, &p) in dist.iter().enumerate() {
            let m = (0..letters.len())
                .filter(|&i| pos[i] == bp && mask & (1 << i) != 0)
                .count();
            law[m] += p;
        }
        let expected_distinct: f64 = law.iter().enumerate().map(|(m, p)| m as f64 * p).sum();
        let reoccurrences = nf * b.mass - expected_distinct;
        if reoccurrences > 0.0 {
            total.add(-reoccurrences * b.rho.log2());
        }
        for (m, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for l in 0..m {
                total.add(-p * model.new_mass(bp, l as u64).0.log2());
            }
        }
    }
    Ok(total.value())
}
