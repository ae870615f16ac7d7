//! Rendering of grid results: the structured report and the two wide
//! tables (rejection rates and critical values, one row per `G`).

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::{CellSummary, GridConfig, GridOutput, McResult};
use crate::error::{Error, Result};
use crate::methods::Method;

/// Version of the report layout.
pub const FORMAT_VERSION: u32 = 1;

/// Structured report. Contains nothing that depends on timing or the
/// thread count.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub format_version: u32,
    pub config: &'a GridConfig,
    pub cells: &'a [CellSummary],
    pub results: &'a [McResult],
}

impl<'a> Report<'a> {
    pub fn new(out: &'a GridOutput) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: &out.config,
            cells: &out.cells,
            results: &out.results,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Schema(format!("report serialization: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Which quantity a wide table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    RejectionRate,
    CriticalValue,
}

fn lookup<'a>(out: &'a GridOutput, cell: &CellSummary, method: Method) -> Option<&'a McResult> {
    out.results
        .iter()
        .find(|r| r.design == cell.design && r.g == cell.g && r.method == method)
}

fn cell_value(out: &GridOutput, cell: &CellSummary, method: Method, table: Table) -> Option<f64> {
    let r = lookup(out, cell, method)?;
    match table {
        Table::RejectionRate => r.reject_rate,
        Table::CriticalValue => r.median_cv,
    }
}

fn fmt_value(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.decimals$}"),
        Some(x) if x > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => "NA".into(),
    }
}

/// Header and rows of a wide table.
fn wide(out: &GridOutput, table: Table, decimals: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["design".to_string(), "G".to_string()];
    header.extend(out.config.methods.iter().map(|m| m.name().to_string()));
    if table == Table::CriticalValue {
        header.push("simulated".into());
    }
    let rows = out
        .cells
        .iter()
        .map(|cell| {
            let mut row = vec![cell.design.name().to_string(), cell.g.to_string()];
            row.extend(
                out.config
                    .methods
                    .iter()
                    .map(|&m| fmt_value(cell_value(out, cell, m, table), decimals)),
            );
            if table == Table::CriticalValue {
                row.push(fmt_value(cell.simulated_cv, decimals));
            }
            row
        })
        .collect();
    (header, rows)
}

/// Writes a wide table as delimited text.
pub fn write_table<W: Write>(out: &GridOutput, table: Table, writer: W) -> Result<()> {
    let (header, rows) = wide(out, table, 6);
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Schema(format!("table output failed: {e}"));
    w.write_record(&header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Schema(format!("table output failed: {e}")))
}

/// Aligned plain-text rendering for the terminal.
pub fn render_table(out: &GridOutput, table: Table) -> String {
    let (header, rows) = wide(out, table, 3);
    let widths: Vec<usize> = (0..header.len())
        .map(|j| {
            rows.iter()
                .map(|r| r[j].len())
                .chain([header[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    let line = |s: &mut String, cells: &[String]| {
        for (j, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if j > 0 {
                s.push_str("  ");
            }
            if j == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "{c:>w$}");
            }
        }
        s.push('\n');
    };
    line(&mut s, &header);
    for r in &rows {
        line(&mut s, r);
    }
    s
}
