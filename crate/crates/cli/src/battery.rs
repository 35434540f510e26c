//! The target battery: entries run in a worker pool, results are collected
//! in entry order and aggregated on one thread.

use std::collections::BTreeMap;

use brenier::diagnostics::{CheckKind, CheckRecord, CheckStatus, ExperimentMeta, Tolerances};
use brenier::{GaussianSpace, QuadraturePolicy, ScalarTarget, SolveConfig, TargetKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{diagnose, Diagnosed};
use crate::config::{build_space, build_target, default_oracle_threshold, validate_solver};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    /// Prepend the built-in battery to `entries`.
    #[serde(default)]
    pub include_default: bool,
    #[serde(default)]
    pub entries: Vec<BatteryEntry>,
    #[serde(default = "default_oracle_threshold")]
    pub oracle_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryEntry {
    pub name: String,
    pub dim: usize,
    pub quadrature: Option<QuadraturePolicy>,
    pub solver: SolveConfig,
    pub target: TargetKind,
}

impl BatteryEntry {
    fn new(name: String, dim: usize, level: usize, degree: usize, target: TargetKind) -> Self {
        Self {
            name,
            dim,
            quadrature: Some(QuadraturePolicy::TensorHermite { level }),
            solver: SolveConfig::new(degree),
            target,
        }
    }
}

/// Isotropic Gaussians over `(m, σ) ∈ {0, ±1} × {0.5, 1, 2}` in one and two
/// dimensions, a quartic-well grid, a 2D mean shift and a 2D diagonal
/// covariance.
pub fn default_battery() -> Vec<BatteryEntry> {
    let mut out = Vec::new();
    for dim in [1, 2] {
        for m in [0.0, 1.0, -1.0] {
            for s in [0.5, 1.0, 2.0] {
                out.push(BatteryEntry::new(
                    format!("gaussian-d{dim}-m{m}-s{s}"),
                    dim,
                    80,
                    2,
                    TargetKind::Gaussian {
                        mean: vec![m; dim],
                        sigma: vec![s; dim],
                    },
                ));
            }
        }
    }
    for (dim, a, b) in [
        (1, 0.05, 0.0),
        (1, 0.05, 0.25),
        (1, 0.03, -0.1),
        (1, 0.1, 0.5),
        (2, 0.05, 0.0),
    ] {
        out.push(BatteryEntry::new(
            format!("quartic-d{dim}-a{a}-b{b}"),
            dim,
            30,
            10,
            TargetKind::QuarticWell { a, b },
        ));
    }
    out.push(BatteryEntry::new(
        "mean-shift-d2".into(),
        2,
        40,
        2,
        TargetKind::Gaussian {
            mean: vec![0.5, -1.0],
            sigma: vec![1.0, 1.0],
        },
    ));
    out.push(BatteryEntry::new(
        "diagonal-covariance-d2".into(),
        2,
        60,
        2,
        TargetKind::Gaussian {
            mean: vec![0.0, 0.0],
            sigma: vec![0.7, 1.5],
        },
    ));
    out
}

/// The entries a battery config selects; an empty selection is a config error.
pub fn resolve(config: Option<&BatteryConfig>) -> Result<(Vec<BatteryEntry>, f64), CliError> {
    let Some(config) = config else {
        return Ok((default_battery(), default_oracle_threshold()));
    };
    let mut entries = if config.include_default {
        default_battery()
    } else {
        Vec::new()
    };
    entries.extend(config.entries.iter().cloned());
    if entries.is_empty() {
        return Err(CliError::config("battery.entries", "battery list is empty"));
    }
    if !(config.oracle_threshold.is_finite() && config.oracle_threshold > 0.0) {
        return Err(CliError::config("battery.oracle_threshold", "must be positive"));
    }
    Ok((entries, config.oracle_threshold))
}

struct Prepared {
    entry: BatteryEntry,
    space: GaussianSpace,
    target: ScalarTarget,
}

fn prepare(entries: Vec<BatteryEntry>) -> Result<Vec<Prepared>, CliError> {
    let mut names = std::collections::HashSet::new();
    entries
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let field = format!("battery.entries[{i}]");
            if !names.insert(entry.name.clone()) {
                return Err(CliError::config(
                    format!("{field}.name"),
                    format!("duplicate entry name {:?}", entry.name),
                ));
            }
            validate_solver(&entry.solver, &format!("{field}.solver"))?;
            let space = build_space(entry.dim, entry.quadrature, &field)?;
            let target = build_target(&space, &entry.target, &format!("{field}.target"))?;
            Ok(Prepared { entry, space, target })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryReport {
    pub name: String,
    pub target: String,
    pub dim: usize,
    pub degree: usize,
    pub quadrature: String,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub w2sq: f64,
    /// Sorted by name; disabled checks are omitted.
    pub checks: Vec<CheckRecord>,
    pub error: Option<String>,
    pub passed: bool,
}

impl EntryReport {
    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extreme {
    pub value: f64,
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub entry: String,
    pub check: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub entry: String,
    pub check: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub entries: usize,
    pub passed_entries: usize,
    /// Smallest `rhs − lhs` of each inequality over the battery.
    pub min_slack: BTreeMap<String, Extreme>,
    pub max_forward_el: Option<Extreme>,
    pub max_backward_el: Option<Extreme>,
    pub max_oracle_deviation: Option<Extreme>,
    pub max_quartic_ratio: Option<Extreme>,
    pub skipped: Vec<Skipped>,
    pub failures: Vec<Failure>,
    pub passed: bool,
}

fn raise(slot: &mut Option<Extreme>, value: f64, entry: &str, larger: bool) {
    let better = match slot {
        None => true,
        Some(e) => (larger && value > e.value) || (!larger && value < e.value),
    };
    if better && value.is_finite() {
        *slot = Some(Extreme {
            value,
            entry: entry.to_string(),
        });
    }
}

pub fn aggregate(reports: &[EntryReport]) -> Aggregate {
    let mut min_slack: BTreeMap<String, Extreme> = BTreeMap::new();
    let (mut fwd, mut bwd, mut oracle, mut quartic) = (None, None, None, None);
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for r in reports {
        if let Some(e) = &r.error {
            failures.push(Failure {
                entry: r.name.clone(),
                check: "solve".into(),
                note: e.clone(),
            });
        } else if !r.converged {
            failures.push(Failure {
                entry: r.name.clone(),
                check: "solve".into(),
                note: format!("not converged, gradient norm {:e}", r.grad_norm),
            });
        }
        for c in &r.checks {
            match c.status {
                CheckStatus::NotApplicable => skipped.push(Skipped {
                    entry: r.name.clone(),
                    check: c.name.clone(),
                    reason: c.note.clone(),
                }),
                CheckStatus::Fail => failures.push(Failure {
                    entry: r.name.clone(),
                    check: c.name.clone(),
                    note: c.note.clone(),
                }),
                _ => {}
            }
            if c.status == CheckStatus::NotApplicable {
                continue;
            }
            if c.kind == CheckKind::Inequality && c.slack.is_finite() {
                let mut slot = min_slack.remove(&c.name);
                raise(&mut slot, c.slack, &r.name, false);
                if let Some(s) = slot {
                    min_slack.insert(c.name.clone(), s);
                }
            }
            match c.name.as_str() {
                "forward-el-residual" => raise(&mut fwd, c.lhs, &r.name, true),
                "backward-el-residual" => raise(&mut bwd, c.lhs, &r.name, true),
                crate::config::ORACLE_CHECK => raise(&mut oracle, c.lhs, &r.name, true),
                "quartic-ratio" if c.rhs > 0.0 => raise(&mut quartic, c.lhs / c.rhs, &r.name, true),
                _ => {}
            }
        }
    }
    let passed_entries = reports.iter().filter(|r| r.passed).count();
    Aggregate {
        entries: reports.len(),
        passed_entries,
        min_slack,
        max_forward_el: fwd,
        max_backward_el: bwd,
        max_oracle_deviation: oracle,
        max_quartic_ratio: quartic,
        skipped,
        failures,
        passed: passed_entries == reports.len(),
    }
}

/// Validates every entry, then solves and diagnoses them in parallel.
pub fn run(
    entries: Vec<BatteryEntry>,
    tol: &Tolerances,
    oracle_threshold: f64,
    seed: u64,
    enabled: &(dyn Fn(&str) -> bool + Sync),
) -> Result<Vec<EntryReport>, CliError> {
    let prepared = prepare(entries)?;
    Ok(prepared
        .par_iter()
        .map(|p| {
            let meta = ExperimentMeta {
                target: p.target.description().to_string(),
                dim: p.entry.dim,
                degree: p.entry.solver.degree,
                quadrature: p.space.describe(),
                seed,
            };
            let outcome = diagnose(
                &p.space,
                &p.target,
                &p.entry.solver,
                tol,
                meta,
                oracle_threshold,
                enabled,
            );
            entry_report(p, outcome)
        })
        .collect())
}

fn entry_report(p: &Prepared, outcome: Result<Diagnosed, brenier::Error>) -> EntryReport {
    let base = EntryReport {
        name: p.entry.name.clone(),
        target: p.target.description().to_string(),
        dim: p.entry.dim,
        degree: p.entry.solver.degree,
        quadrature: p.space.describe(),
        converged: false,
        iterations: 0,
        grad_norm: f64::NAN,
        w2sq: f64::NAN,
        checks: Vec::new(),
        error: None,
        passed: false,
    };
    match outcome {
        Ok(d) => EntryReport {
            converged: d.solved.converged,
            iterations: d.solved.iterations,
            grad_norm: d.solved.grad_norm,
            w2sq: d.solved.wasserstein2_sq,
            passed: d.solved.converged && d.report.all_passed(),
            checks: d.report.checks,
            ..base
        },
        Err(e) => EntryReport {
            error: Some(e.to_string()),
            ..base
        },
    }
}
