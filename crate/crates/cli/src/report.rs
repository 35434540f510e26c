//! Report files: pretty JSON for machines, aligned text for people, CSV
//! tables. Nothing run-dependent (time, host, thread count) is recorded, so
//! a fixed config and seed reproduce every file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use brenier::diagnostics::{CheckRecord, CheckStatus};
use brenier::smoothing::fmt_float;
use serde::Serialize;

use crate::CliError;

pub const TOOL: &str = "brenier";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Hex SHA-256 of the config file, or of the empty string when none was given.
    pub config_sha256: String,
    pub seed: u64,
    pub quadrature: String,
}

impl Provenance {
    pub fn new(command: &'static str, config_sha256: String, seed: u64, quadrature: String) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            config_sha256,
            seed,
            quadrature,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "{} {} {}\nconfig sha256: {}\nseed: {}\nquadrature: {}\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed, self.quadrature
        )
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        action: "create",
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    create_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        action: "write",
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_file(dir, name, &text)
}

/// `1.234568e-3` style, `nan` for missing values.
pub fn sci(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6e}")
    }
}

pub fn status_word(status: CheckStatus) -> &'static str {
    match status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Info => "info",
        CheckStatus::NotApplicable => "n/a",
    }
}

/// One line per check: name, status, lhs, rhs, slack, tolerance, note.
pub fn check_table(checks: &[CheckRecord]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let _ = write!(
            out,
            "  {:width$}  {:4}  lhs {:>13}  rhs {:>13}  slack {:>13}  tol {:>13}",
            c.name,
            status_word(c.status),
            sci(c.lhs),
            sci(c.rhs),
            sci(c.slack),
            sci(c.tolerance),
        );
        if !c.note.is_empty() {
            let _ = write!(out, "  {}", c.note);
        }
        out.push('\n');
    }
    out
}

/// A CSV line from already formatted cells.
pub fn csv_line(cells: &[String]) -> String {
    let mut line = cells
        .iter()
        .map(|c| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

pub fn csv_float(v: f64) -> String {
    fmt_float(v)
}
