//! The work behind each subcommand.

use std::collections::HashMap;

use pattern_entropy::bounds::{
    contribution_limits, decrease_range, packing_upper, permutation_lower, permutation_upper,
    region_curve, simple_bounds, small_letter_lower, stirling_bounds, BoundReport, PackingVariant,
    RangeRow,
};
use pattern_entropy::coder::{decode, encode, sequence_codelength, CoderModel};
use pattern_entropy::distributions::{iid_entropy, sample_sequence, ParamVector};
use pattern_entropy::grids::{bin_stats, build_grid, regime_threshold, BinStats, Grid, GridKind};
use pattern_entropy::numeric::LOG2_E;
use pattern_entropy::oracle::{exact_entropies, mc_pattern_entropy, ExactEntropies, McEstimate};
use pattern_entropy::patterns::{bin_sequence, extract_pattern};
use pattern_entropy::Error;
use serde::Serialize;

use crate::config::{BoundName, RegionSettings, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{BoundRow, Cell, Table};

#[derive(Clone, Debug, Serialize)]
pub struct SourceSummary {
    pub k: u64,
    pub entropy: f64,
    pub renormalization: f64,
}

/// Everything `bounds` produces; the JSON form carries the grid dumps.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsDocument {
    pub config: RunConfig,
    pub source: SourceSummary,
    pub regime_threshold: f64,
    pub grids: Vec<Grid>,
    pub bin_stats: Vec<BinStats>,
    pub oracle: Option<ExactEntropies>,
    pub mc: Option<McEstimate>,
    pub rows: Vec<BoundRow>,
    /// Rows, grids or the oracle that hit a resource cap.
    pub cap_errors: Vec<String>,
    /// A row failed for a reason other than a cap.
    pub row_errors: bool,
}

fn reports_for(
    name: BoundName,
    theta: &ParamVector,
    config: &RunConfig,
    n: u64,
) -> Result<Vec<BoundReport>, Error> {
    let eps = config.epsilon;
    let ub3 = |v| packing_upper(theta, n, eps, v).map(|r| vec![r]);
    match name {
        BoundName::Simple => simple_bounds(theta, n).map(|(lo, hi)| vec![lo, hi]),
        BoundName::Ub1 => permutation_upper(theta, n, eps, false).map(|r| vec![r]),
        BoundName::Ub1Tight => permutation_upper(theta, n, eps, true).map(|r| vec![r]),
        BoundName::Lb2 => permutation_lower(theta, n, eps).map(|(a, b)| vec![a, b]),
        BoundName::Ub3 => ub3(PackingVariant::Full),
        BoundName::C1 => ub3(PackingVariant::Packed01),
        BoundName::C21 => ub3(PackingVariant::Bin0Only),
        BoundName::C2Exact => ub3(PackingVariant::PerBinExact),
        BoundName::C2Loosened => ub3(PackingVariant::PerBinLoosened),
        BoundName::Lb4 => small_letter_lower(theta, n, eps, &config.lb4).map(|r| vec![r]),
        BoundName::Contribution => contribution_limits(theta, n, eps, config.mu.unwrap_or(1.0))
            .map(|c| vec![c.part1, c.part2, c.part2_mu]),
        BoundName::Range => {
            let n_eps1 = (n as f64).powf(config.epsilon1.unwrap_or(eps / 2.0));
            decrease_range(theta, n, eps, n_eps1).map(|r| r.to_vec())
        }
    }
}

fn bound_label(name: BoundName) -> String {
    serde_json::to_value(name)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn run_bounds(config: &RunConfig, seed: Option<u64>) -> CliResult<BoundsDocument> {
    config.validate()?;
    let n = config.block_length()?;
    let source = config.source()?;
    let theta = &source.theta;
    let threshold = regime_threshold(n as f64, config.delta);
    let mut cap_errors: Vec<String> = Vec::new();
    let mut row_errors = false;

    let mut grids = Vec::new();
    let mut stats = Vec::new();
    for kind in [GridKind::Tau, GridKind::Eta, GridKind::Xi] {
        match build_grid(kind, n, config.epsilon).and_then(|g| bin_stats(theta, &g).map(|s| (g, s)))
        {
            Ok((g, s)) => {
                grids.push(g);
                stats.push(s);
            }
            Err(e @ Error::ResourceCap { .. }) => cap_errors.push(format!("{kind:?} grid: {e}")),
            Err(_) => {}
        }
    }

    let oracle = if config.oracle {
        match build_grid(GridKind::Eta, n, config.epsilon).and_then(|g| exact_entropies(theta, &g))
        {
            Ok(e) => Some(e),
            Err(e @ Error::ResourceCap { .. }) => {
                cap_errors.push(format!("oracle: {e}"));
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let mc = match (&config.mc, config.monte_carlo) {
        (Some(mc), true) => Some(mc_pattern_entropy(
            theta,
            n as usize,
            mc.samples,
            seed.unwrap_or(mc.seed),
        )?),
        _ => None,
    };

    let mut rows = Vec::new();
    for &name in &config.bounds {
        match reports_for(name, theta, config, n) {
            Ok(reports) => rows.extend(reports.into_iter().map(BoundRow::from_report)),
            Err(e) => {
                if matches!(e, Error::ResourceCap { .. }) {
                    cap_errors.push(format!("{}: {e}", bound_label(name)));
                } else {
                    row_errors = true;
                }
                rows.push(BoundRow::failed(&bound_label(name), e.to_string()));
            }
        }
    }
    for row in &mut rows {
        row.exact = oracle.map(|o| o.h_pattern);
        row.mc_mean = mc.map(|m| m.mean);
        row.mc_std_error = mc.map(|m| m.std_error);
        if row.value.is_some() && config.epsilon < threshold {
            row.notes
                .push(format!("epsilon below the regime threshold {threshold:.6}"));
        }
    }
    Ok(BoundsDocument {
        config: config.clone(),
        source: SourceSummary {
            k: theta.k(),
            entropy: iid_entropy(theta),
            renormalization: source.renormalization,
        },
        regime_threshold: threshold,
        grids,
        bin_stats: stats,
        oracle,
        mc,
        rows,
        cap_errors,
        row_errors,
    })
}

/// `k log2(k/e) + 0.5 log2(2 pi k)`, the Stirling form of `log2 k!`.
fn stirling_log2_factorial(k: f64) -> f64 {
    stirling_bounds(k)
        .map(|s| s.ln_lower * LOG2_E)
        .unwrap_or(0.0)
}

pub fn region_ks(settings: &RegionSettings) -> CliResult<Vec<f64>> {
    let RegionSettings {
        k_min,
        k_max,
        points,
        integer_step,
        ..
    } = *settings;
    if !(k_min >= 1.0 && k_max >= k_min) {
        return Err(CliError::Config("region needs 1 <= k_min <= k_max".into()));
    }
    if integer_step {
        let (lo, hi) = (k_min.ceil(), k_max.floor());
        if hi - lo > 1e7 {
            return Err(Error::ResourceCap {
                what: "integer region sweep",
                needed: hi - lo + 1.0,
                cap: 1e7,
            }
            .into());
        }
        return Ok((0..=(hi - lo) as u64).map(|i| lo + i as f64).collect());
    }
    if points < 2 {
        return Ok(vec![k_min]);
    }
    let (a, b) = (k_min.ln(), k_max.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

pub const REGION_HEADER: [&str; 13] = [
    "k",
    "threshold",
    "lower_decrease",
    "lower_decrease_stirling",
    "upper_decrease_asymptotic",
    "upper_decrease",
    "upper_decrease_raw",
    "upper_decrease_optimal",
    "gamma",
    "gamma_residual",
    "beta_opt",
    "above_threshold",
    "valid",
];

pub fn run_region(settings: &RegionSettings) -> CliResult<(Vec<RangeRow>, Table)> {
    let ks = region_ks(settings)?;
    let rows = region_curve(settings.n, settings.epsilon, settings.n_eps1, &ks)?;
    let table = Table {
        header: REGION_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::from(r.k),
                    r.threshold.into(),
                    r.lower_decrease.into(),
                    stirling_log2_factorial(r.k).into(),
                    r.upper_decrease_asymptotic.into(),
                    r.upper_decrease.into(),
                    r.upper_decrease_raw.into(),
                    r.upper_decrease_optimal.into(),
                    r.gamma.into(),
                    r.gamma_residual.into(),
                    r.beta_opt.into(),
                    (r.k >= r.threshold).into(),
                    r.valid.into(),
                ]
            })
            .collect(),
    };
    Ok((rows, table))
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleDocument {
    pub n: u64,
    pub k: u64,
    pub exact: ExactEntropies,
    pub simple_lower: f64,
    pub simple_upper: f64,
    pub mc: Option<McEstimate>,
}

pub fn run_oracle(config: &RunConfig, seed: Option<u64>) -> CliResult<(OracleDocument, Table)> {
    config.validate()?;
    let n = config.block_length()?;
    let theta = config.source()?.theta;
    let grid = build_grid(GridKind::Eta, n, config.epsilon)?;
    let exact = exact_entropies(&theta, &grid)?;
    let (lo, hi) = simple_bounds(&theta, n)?;
    let mc = match &config.mc {
        Some(mc) => Some(mc_pattern_entropy(
            &theta,
            n as usize,
            mc.samples,
            seed.unwrap_or(mc.seed),
        )?),
        None => None,
    };
    let doc = OracleDocument {
        n,
        k: theta.k(),
        exact,
        simple_lower: lo.value,
        simple_upper: hi.value,
        mc,
    };
    let header = [
        "n",
        "k",
        "h_pattern",
        "h_joint",
        "h_x_block",
        "expected_codelength",
        "simple_lower",
        "simple_upper",
        "mc_mean",
        "mc_std_error",
    ];
    let table = Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: vec![vec![
            Cell::Text(n.to_string()),
            Cell::Text(doc.k.to_string()),
            exact.h_pattern.into(),
            exact.h_joint.into(),
            exact.h_x_block.into(),
            exact.expected_codelength.into(),
            lo.value.into(),
            hi.value.into(),
            mc.map_or(Cell::Empty, |m| m.mean.into()),
            mc.map_or(Cell::Empty, |m| m.std_error.into()),
        ]],
    };
    Ok((doc, table))
}

/// Result of coding one sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CodedSequence {
    pub n: usize,
    pub pattern: String,
    pub bins: Vec<usize>,
    pub codelength: f64,
    pub bits: usize,
    pub roundtrip: bool,
    pub hex: String,
}

/// Parses one sequence per non-empty line: letter indices `1..=k`
/// separated by commas or whitespace. `#` starts a comment.
pub fn parse_sequences(text: &str) -> CliResult<Vec<Vec<u64>>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<u64>()
                        .map_err(|_| CliError::Config(format!("bad letter index `{t}`")))
                })
                .collect()
        })
        .collect()
}

pub fn run_code(
    config: &RunConfig,
    sequences: Option<Vec<Vec<u64>>>,
    count: usize,
    seed: u64,
) -> CliResult<(Vec<CodedSequence>, Table)> {
    config.validate()?;
    let theta = config.source()?.theta;
    let sequences = match sequences {
        Some(s) => s,
        None => {
            let n = config.block_length()? as usize;
            (0..count)
                .map(|i| sample_sequence(&theta, n, seed.wrapping_add(i as u64)))
                .collect::<Result<_, _>>()?
        }
    };
    let mut models: HashMap<usize, (Grid, CoderModel)> = HashMap::new();
    let mut out = Vec::new();
    for x in &sequences {
        if x.iter().any(|&i| i == 0 || i > theta.k()) {
            return Err(CliError::Config(format!(
                "letter indices must lie in 1..={}",
                theta.k()
            )));
        }
        let n = x.len();
        if let std::collections::hash_map::Entry::Vacant(slot) = models.entry(n) {
            let grid = build_grid(GridKind::Eta, n as u64, config.epsilon)?;
            let model = CoderModel::new(&theta, &grid)?;
            slot.insert((grid, model));
        }
        let (grid, model) = &models[&n];
        let psi = extract_pattern(x)?;
        let beta = bin_sequence(&theta, grid, x)?;
        let bits = encode(model, &psi, &beta)?;
        let roundtrip = decode(model, &bits.bits, n).is_ok_and(|(p, b)| p == psi && b == beta);
        let codelength = sequence_codelength(model, &psi, &beta)?.bits;
        out.push(CodedSequence {
            n,
            pattern: psi.to_string(),
            bins: beta,
            codelength,
            bits: bits.len(),
            roundtrip,
            hex: bits.to_bytes().iter().map(|b| format!("{b:02x}")).collect(),
        });
    }
    let header = [
        "index",
        "n",
        "pattern",
        "codelength",
        "bits",
        "roundtrip",
        "hex",
    ];
    let table = Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: out
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    Cell::Text(i.to_string()),
                    Cell::Text(c.n.to_string()),
                    Cell::Text(c.pattern.clone()),
                    c.codelength.into(),
                    Cell::Text(c.bits.to_string()),
                    c.roundtrip.into(),
                    Cell::Text(c.hex.clone()),
                ]
            })
            .collect(),
    };
    Ok((out, table))
}
