//! CSV tables and JSON run reports.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::LabError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table whose first line is a `#` comment carrying the version and
/// the configuration hash; everything after it is deterministic.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV body (header row and records), LF line endings.
    pub fn body(&self) -> Result<String, LabError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| LabError::Io(e.to_string()))
    }

    pub fn render(&self, config_hash: &str) -> Result<String, LabError> {
        Ok(format!("# neass-lab {VERSION} config-sha256={config_hash}\n{}", self.body()?))
    }
}

fn io(e: csv::Error) -> LabError {
    LabError::Io(e.to_string())
}

/// Shortest round-trip representation, so tables are bit-exact.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// How `value` is compared with `threshold`: `le`, `ge` or `true`.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            rule: "le".into(),
            passed: value <= threshold,
        }
    }

    pub fn ge(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            rule: "ge".into(),
            passed: value >= threshold,
        }
    }

    /// A boolean property; `value` is 1 when it holds.
    pub fn holds(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            rule: "true".into(),
            passed: ok,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub version: String,
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Fourier leakage of the weight function actually used, if any.
    pub leakage: Option<f64>,
    pub wall_clock_seconds: f64,
    pub details: serde_json::Value,
}

/// Output of one experiment before it is written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub checks: Vec<Check>,
    pub leakage: Option<f64>,
    pub details: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn write(dir: &Path, experiment: &str, table: &Table, report: &RunReport) -> Result<Written, LabError> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
    let csv = dir.join(format!("{experiment}.csv"));
    let json = dir.join(format!("{experiment}.json"));
    std::fs::write(&csv, table.render(&report.config_hash)?)
        .map_err(|e| LabError::Io(format!("{}: {e}", csv.display())))?;
    let text = serde_json::to_string_pretty(report).map_err(|e| LabError::Io(e.to_string()))?;
    std::fs::write(&json, text + "\n").map_err(|e| LabError::Io(format!("{}: {e}", json.display())))?;
    Ok(Written { csv, json })
}
