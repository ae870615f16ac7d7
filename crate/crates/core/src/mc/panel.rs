//! State-year outcome panel used by design 1.
//!
//! The panel is external data; the outcome column is used as supplied.
//! Rows sharing a (state, year) pair are averaged, so both aggregated and
//! individual-level files load.

use std::collections::HashMap;
use std::path::Path;

use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

pub const FIRST_YEAR: u32 = 1979;
pub const LAST_YEAR: u32 = 1999;
/// Minimum number of distinct states.
pub const MIN_STATES: usize = 50;

/// Column names of the panel file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelColumns {
    pub state: String,
    pub year: String,
    pub outcome: String,
}

impl Default for PanelColumns {
    fn default() -> Self {
        Self {
            state: "state".into(),
            year: "year".into(),
            outcome: "lnwage".into(),
        }
    }
}

/// Balanced state-by-year outcomes for 1979-1999.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePanel {
    states: Vec<String>,
    outcomes: Vec<Vec<f64>>,
}

impl StatePanel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_years(&self) -> usize {
        (LAST_YEAR - FIRST_YEAR + 1) as usize
    }

    pub fn state(&self, index: usize) -> &str {
        &self.states[index]
    }

    /// Outcomes of one state ordered by year.
    pub fn outcomes(&self, index: usize) -> &[f64] {
        &self.outcomes[index]
    }

    pub fn read_path(path: &Path, columns: &PanelColumns, delimiter: u8) -> Result<Self> {
        Self::from_table(&DataTable::read_path(path, delimiter)?, columns)
    }

    /// Builds the panel; rows outside 1979-1999 are ignored.
    pub fn from_table(table: &DataTable, columns: &PanelColumns) -> Result<Self> {
        let col = |name: &str| {
            table
                .headers()
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("panel is missing column {name:?}")))
        };
        let (sc, yc, oc) = (
            col(&columns.state)?,
            col(&columns.year)?,
            col(&columns.outcome)?,
        );
        let years = (LAST_YEAR - FIRST_YEAR + 1) as usize;

        let mut index: HashMap<String, usize> = HashMap::new();
        let mut states: Vec<String> = Vec::new();
        let mut cells: Vec<Vec<(CompensatedSum, usize)>> = Vec::new();
        for (r, row) in table.rows().iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                row: r + 1,
                message,
            };
            let year: u32 = row[yc]
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                .map(|v| v as u32)
                .ok_or_else(|| parse_err(format!("invalid year {:?}", row[yc])))?;
            if !(FIRST_YEAR..=LAST_YEAR).contains(&year) {
                continue;
            }
            let value: f64 = row[oc]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(format!("invalid outcome {:?}", row[oc])))?;
            let label = row[sc].clone();
            if label.is_empty() {
                return Err(parse_err("blank state identifier".into()));
            }
            let slot = *index.entry(label.clone()).or_insert_with(|| {
                states.push(label);
                cells.push(vec![(CompensatedSum::new(), 0); years]);
                states.len() - 1
            });
            let cell = &mut cells[slot][(year - FIRST_YEAR) as usize];
            cell.0.add(value);
            cell.1 += 1;
        }
        if states.len() < MIN_STATES {
            return Err(Error::Validation(format!(
                "panel has {} states, at least {MIN_STATES} are required",
                states.len()
            )));
        }
        let mut outcomes = Vec::with_capacity(states.len());
        for (state, row) in states.iter().zip(&cells) {
            if let Some(t) = row.iter().position(|(_, n)| *n == 0) {
                return Err(Error::Validation(format!(
                    "state {state:?} has no observation for {}",
                    FIRST_YEAR + t as u32
                )));
            }
            outcomes.push(row.iter().map(|(s, n)| s.total() / *n as f64).collect());
        }
        Ok(Self { states, outcomes })
    }
}
