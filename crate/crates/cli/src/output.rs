//! File output and error mapping.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nvpol::analysis::AnalysisError;
use nvpol::fmt_sig;
use nvpol::kinetics::KineticsError;
use nvpol::pulse::SequenceError;
use nvpol::readout::ReadoutError;

use crate::CliError;

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NonConvergence { .. } | AnalysisError::SingularJacobian => {
                CliError::Convergence(e.to_string())
            }
            AnalysisError::InvalidData(_) | AnalysisError::Csv(_) => CliError::Usage(e.to_string()),
            _ => CliError::Physics(e.to_string()),
        }
    }
}

impl From<SequenceError> for CliError {
    fn from(e: SequenceError) -> Self {
        match e {
            SequenceError::Parse { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Physics(e.to_string()),
        }
    }
}

impl From<KineticsError> for CliError {
    fn from(e: KineticsError) -> Self {
        CliError::Physics(e.to_string())
    }
}

impl From<ReadoutError> for CliError {
    fn from(e: ReadoutError) -> Self {
        match e {
            ReadoutError::Csv(_) | ReadoutError::Io(_) => CliError::Usage(e.to_string()),
            _ => CliError::Physics(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Numeric CSV with an optional leading text column.
pub struct Table {
    header: Vec<String>,
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), text: String::new() }
    }

    pub fn row(&mut self, values: &[f64]) {
        self.labeled_row(None, values);
    }

    pub fn labeled_row(&mut self, label: Option<&str>, values: &[f64]) {
        let mut cells: Vec<String> = label.map(|l| vec![l.to_string()]).unwrap_or_default();
        cells.extend(values.iter().map(|v| fmt_sig(*v)));
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &format!("{}\n{}", self.header.join(","), self.text))
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    s.push('\n');
    write_text(path, &s)
}

/// `key = value` line on stdout.
pub fn kv(key: &str, value: impl std::fmt::Display) {
    println!("{key} = {value}");
}

pub fn kvf(key: &str, value: f64) {
    kv(key, fmt_sig(value));
}
