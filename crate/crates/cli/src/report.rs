//! Report rows and their CSV / JSON encodings.

use std::io::Write;

use pattern_entropy::bounds::{BoundReport, Term};
use serde::Serialize;

use crate::error::CliResult;

/// Doubles with 17 significant digits, which round-trip exactly.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// One evaluated bound, or the error that prevented it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub bound: String,
    pub value: Option<f64>,
    pub exact: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub valid: Option<bool>,
    pub residuals: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub terms: Vec<Term>,
}

impl BoundRow {
    pub fn from_report(r: BoundReport) -> Self {
        Self {
            bound: r.name,
            value: Some(r.value),
            exact: None,
            mc_mean: None,
            mc_std_error: None,
            valid: Some(r.validity.holds),
            residuals: r.residual_flags,
            notes: r.validity.notes,
            error: None,
            terms: r.terms,
        }
    }

    pub fn failed(bound: &str, error: String) -> Self {
        Self {
            bound: bound.to_string(),
            value: None,
            exact: None,
            mc_mean: None,
            mc_std_error: None,
            valid: None,
            residuals: Vec::new(),
            notes: Vec::new(),
            error: Some(error),
            terms: Vec::new(),
        }
    }
}

/// Writes bound rows with a `term<i>_name, term<i>` column pair per term,
/// padded to the longest breakdown.
pub fn write_bound_csv<W: Write>(rows: &[BoundRow], out: W) -> CliResult<()> {
    let width = rows.iter().map(|r| r.terms.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "bound",
        "value",
        "exact",
        "mc_mean",
        "mc_std_error",
        "valid",
        "residuals",
        "notes",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 1..=width {
        header.push(format!("term{i}_name"));
        header.push(format!("term{i}"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.bound.clone(),
            fmt_opt(r.value),
            fmt_opt(r.exact),
            fmt_opt(r.mc_mean),
            fmt_opt(r.mc_std_error),
            r.valid.map(|v| v.to_string()).unwrap_or_default(),
            r.residuals.join("; "),
            r.notes.join("; "),
            r.error.clone().unwrap_or_default(),
        ];
        for i in 0..width {
            match r.terms.get(i) {
                Some(t) => {
                    rec.push(t.name.clone());
                    rec.push(fmt_num(t.value));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Generic numeric table: a header and rows of optional numbers or text.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        if x.is_nan() {
            Cell::Empty
        } else {
            Cell::Num(x)
        }
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(b.to_string())
    }
}

pub fn write_table_csv<W: Write>(table: &Table, out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| match c {
            Cell::Num(x) => fmt_num(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
