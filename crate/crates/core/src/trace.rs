//! Run traces and their CSV form.
//!
//! A trace file starts with a schema comment, then one `# key=value` comment
//! per metadata entry, then a header row and the recorded rows.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::{self, Write};
use std::time::Duration;

use crate::coordinator::MessageCount;

pub const TRACE_SCHEMA: &str = "pevgrid-trace v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    /// f at the returned profile.
    pub objective: f64,
    /// The method's own objective at the returned profile (augmented
    /// objective for the penalty method, f of the averaged iterate for
    /// primal-dual).
    pub final_value: f64,
    pub max_normalized_overload: f64,
    pub max_violation: f64,
    /// Worst |sum_t p_k(t) - U_k| seen after any iteration.
    pub max_energy_residual: f64,
    /// Worst box excursion seen after any iteration; 0 when the box held.
    pub max_box_violation: f64,
    pub wall_time: Duration,
    pub messages: Option<MessageCount>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub method: String,
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: RunSummary,
}

impl RunTrace {
    pub fn new(method: &str, columns: &[&str]) -> Self {
        Self {
            method: method.to_string(),
            metadata: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: RunSummary::default(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl Display) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        debug_assert!(self.rows.last().is_none_or(|r| r[0] < row[0]), "rows must advance");
        self.rows.push(row);
    }

    /// All recorded values of one column.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.columns.iter().position(|c| c == name) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {TRACE_SCHEMA}")?;
        writeln!(w, "# method={}", self.method)?;
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, x)| if i == 0 { format!("{}", *x as u64) } else { format!("{x:e}") })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
