use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pattern_entropy_cli::config::{Format, RegionSettings, RunConfig};
use pattern_entropy_cli::report::{write_bound_csv, write_table_csv, Cell, Table};
use pattern_entropy_cli::run::{parse_sequences, run_bounds, run_code, run_oracle, run_region};
use pattern_entropy_cli::verify::run_verify;
use pattern_entropy_cli::{CliError, CliResult};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "pattern-entropy",
    version,
    about = "Bounds, oracles and a coder for the entropy of patterns of i.i.d. sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the selected bounds for the configured source.
    Bounds(Common),
    /// Sweep the range of the decrease from i.i.d. to pattern entropy over k.
    Region {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// n^eps1.
        #[arg(long)]
        n_eps1: Option<f64>,
        #[arg(long)]
        k_min: Option<f64>,
        #[arg(long)]
        k_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Evaluate every integer k.
        #[arg(long)]
        integer_step: bool,
    },
    /// Run property suites; all of them when none is named.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Encode and decode sequences with the pattern/bin coder.
    Code {
        #[command(flatten)]
        common: Common,
        /// Sequences of letter indices, one per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of sampled sequences when no input is given.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Exact pattern entropy by enumeration, with the Monte Carlo estimate
    /// when `[mc]` is configured.
    Oracle(Common),
}

fn load(common: &Common) -> CliResult<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Err(CliError::Config("--config is required".into())),
    }
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            CliError::Io {
                path: p.display().to_string(),
                source,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, out: Box<dyn Write>) -> CliResult<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io {
            path: "output".into(),
            source,
        })
}

fn emit_table<T: Serialize>(
    format: Format,
    table: &Table,
    doc: &T,
    out: Box<dyn Write>,
) -> CliResult<()> {
    match format {
        Format::Csv => write_table_csv(table, out),
        Format::Json => write_json(doc, out),
    }
}

fn output_settings(common: &Common) -> (Format, Option<PathBuf>, Option<RunConfig>) {
    let config = common.config.as_ref().and_then(|p| RunConfig::load(p).ok());
    let format = common
        .format
        .or_else(|| config.as_ref().and_then(|c| c.format))
        .unwrap_or(Format::Csv);
    let out = common
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.out.clone()));
    (format, out, config)
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bounds(common) => {
            let config = load(&common)?;
            let (format, out, _) = output_settings(&common);
            let doc = run_bounds(&config, common.seed)?;
            let w = sink(out.as_deref())?;
            match format {
                Format::Csv => write_bound_csv(&doc.rows, w)?,
                Format::Json => write_json(&doc, w)?,
            }
            if !doc.cap_errors.is_empty() {
                return Err(CliError::CapExceeded(doc.cap_errors.join("; ")));
            }
            if doc.row_errors {
                return Err(CliError::Config(
                    "one or more bounds could not be evaluated".into(),
                ));
            }
            Ok(())
        }
        Command::Region {
            common,
            n,
            epsilon,
            n_eps1,
            k_min,
            k_max,
            points,
            integer_step,
        } => {
            let from_config = match &common.config {
                Some(p) => RunConfig::load(p)?.region,
                None => None,
            };
            let missing =
                |what: &str| CliError::Config(format!("region needs --{what} or a [region] table"));
            let base = from_config.as_ref();
            let sweep = RegionSettings {
                n: n.or(base.map(|r| r.n)).ok_or_else(|| missing("n"))?,
                epsilon: epsilon
                    .or(base.map(|r| r.epsilon))
                    .ok_or_else(|| missing("epsilon"))?,
                n_eps1: n_eps1
                    .or(base.map(|r| r.n_eps1))
                    .ok_or_else(|| missing("n-eps1"))?,
                k_min: k_min
                    .or(base.map(|r| r.k_min))
                    .ok_or_else(|| missing("k-min"))?,
                k_max: k_max
                    .or(base.map(|r| r.k_max))
                    .ok_or_else(|| missing("k-max"))?,
                points: points.or(base.map(|r| r.points)).unwrap_or(200),
                integer_step: integer_step || base.is_some_and(|r| r.integer_step),
            };
            let (format, out, _) = output_settings(&common);
            let (rows, table) = run_region(&sweep)?;
            emit_table(format, &table, &rows, sink(out.as_deref())?)
        }
        Command::Verify { common, suites } => {
            let (format, out, _) = output_settings(&common);
            let outcomes =
                run_verify(&suites, common.seed.unwrap_or(0)).map_err(CliError::Config)?;
            let table = Table {
                header: ["suite", "status", "checks", "failures", "seconds", "detail"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows: outcomes
                    .iter()
                    .map(|o| {
                        vec![
                            Cell::Text(o.suite.to_string()),
                            Cell::Text(if o.passed() { "pass" } else { "fail" }.to_string()),
                            Cell::Text(o.checks.to_string()),
                            Cell::Text(o.failures.to_string()),
                            o.seconds.into(),
                            Cell::Text(o.messages.join(" | ")),
                        ]
                    })
                    .collect(),
            };
            emit_table(format, &table, &outcomes, sink(out.as_deref())?)?;
            let failed = outcomes.iter().filter(|o| !o.passed()).count() as u64;
            if failed > 0 {
                return Err(CliError::PropertyFailure(failed));
            }
            Ok(())
        }
        Command::Code {
            common,
            input,
            count,
        } => {
            let config = load(&common)?;
            let (format, out, _) = output_settings(&common);
            let sequences = match input {
                Some(p) => Some(parse_sequences(&std::fs::read_to_string(&p).map_err(
                    |source| CliError::Io {
                        path: p.display().to_string(),
                        source,
                    },
                )?)?),
                None => None,
            };
            let (coded, table) = run_code(&config, sequences, count, common.seed.unwrap_or(0))?;
            emit_table(format, &table, &coded, sink(out.as_deref())?)?;
            let bad = coded.iter().filter(|c| !c.roundtrip).count() as u64;
            if bad > 0 {
                return Err(CliError::PropertyFailure(bad));
            }
            Ok(())
        }
        Command::Oracle(common) => {
            let config = load(&common)?;
            let (format, out, _) = output_settings(&common);
            let (doc, table) = run_oracle(&config, common.seed)?;
            emit_table(format, &table, &doc, sink(out.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
