//! The four subcommands. Each writes its reports before deciding the exit
//! status, so a failed check still leaves a complete record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use brenier::backward::{self, DualPotential};
use brenier::diagnostics::{self, CheckKind, CheckRecord, DiagnosticsReport, ExperimentMeta, Tolerances, CHECK_NAMES};
use brenier::oracle1d::{self, MonotoneMap, OracleGrid};
use brenier::smoothing::{convergence_study, Level, ReferenceKind, StudyTable};
use brenier::{forward, GaussianSpace, PotentialField, ScalarTarget, SolveConfig, SolveResult};
use serde::Serialize;

use crate::battery::{self, Aggregate, EntryReport};
use crate::config::{self, Config, Loaded, StudyConfig, ORACLE_CHECK};
use crate::report::{check_table, csv_float, csv_line, sci, write_file, write_json, Provenance};
use crate::{CliError, Common, Status};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    /// One-line verdict printed on stdout.
    pub headline: String,
    pub files: Vec<PathBuf>,
}

/// Points per unit length when comparing against the oracle.
const ORACLE_SCAN_DENSITY: usize = 100;

/// `sup |T_oracle − (x + φ'(x))|` on a uniform scan of `[lo, hi]`.
pub fn oracle_deviation(map: &MonotoneMap, phi: &PotentialField, lo: f64, hi: f64) -> f64 {
    let steps = (((hi - lo) * ORACLE_SCAN_DENSITY as f64).ceil() as usize).max(1);
    (0..=steps)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / steps as f64;
            (x + phi.grad(&[x])[0] - map.map(x)).abs()
        })
        .fold(0.0, f64::max)
}

pub struct Diagnosed {
    pub solved: SolveResult,
    pub dual: Option<DualPotential>,
    pub report: DiagnosticsReport,
}

/// Forward solve, conjugate dual, every diagnostic and, in one dimension,
/// agreement with the monotone rearrangement on `[−3, 3]`.
pub fn diagnose(
    space: &GaussianSpace,
    target: &ScalarTarget,
    solver: &SolveConfig,
    tol: &Tolerances,
    meta: ExperimentMeta,
    oracle_threshold: f64,
    enabled: &(dyn Fn(&str) -> bool + Sync),
) -> Result<Diagnosed, brenier::Error> {
    let solved = forward::solve(space, target, solver)?;
    let (dual, mut checks) = match backward::conjugate(space, target, &solved.phi, solver.degree) {
        Ok(dual) => {
            let checks = diagnostics::run_all(space, target, &solved, &dual, tol, meta.seed);
            (Some(dual), checks)
        }
        Err(e) => {
            let checks = CHECK_NAMES
                .iter()
                .map(|name| {
                    CheckRecord::errored(*name, CheckKind::Identity, &e)
                        .with_note(format!("dual potential unavailable: {e}"))
                })
                .collect();
            (None, checks)
        }
    };
    if space.dim() == 1 {
        let rec = MonotoneMap::build(target, &OracleGrid::default())
            .map(|map| oracle_deviation(&map, &solved.phi, -3.0, 3.0))
            .map(|sup| {
                CheckRecord::new(ORACLE_CHECK, CheckKind::Identity, sup, 0.0, oracle_threshold)
                    .with_note("sup over [-3, 3] of |T_oracle - T_solver|")
            })
            .unwrap_or_else(|e| CheckRecord::errored(ORACLE_CHECK, CheckKind::Identity, &e));
        checks.push(rec);
    }
    checks.retain(|c| enabled(&c.name));
    Ok(Diagnosed {
        solved,
        dual,
        report: DiagnosticsReport::new(meta, checks),
    })
}

fn files(paths: impl IntoIterator<Item = Result<PathBuf, CliError>>) -> Result<Vec<PathBuf>, CliError> {
    paths.into_iter().collect()
}

#[derive(Serialize)]
struct SolveReport<'a> {
    provenance: &'a Provenance,
    target: &'a str,
    dim: usize,
    solver: &'a SolveConfig,
    status: Status,
    result: &'a SolveResult,
    dual: Option<&'a DualPotential>,
    diagnostics: &'a DiagnosticsReport,
}

pub fn solve(path: &Path, common: &Common) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, seed } = config::load(path, common.seed)?;
    let space = config.space("solve")?;
    let target = config.target(&space, "solve")?;
    let solver = config.solver("solve")?;
    let provenance = Provenance::new("solve", sha256, seed, space.describe());
    let meta = ExperimentMeta {
        target: target.description().to_string(),
        dim: space.dim(),
        degree: solver.degree,
        quadrature: space.describe(),
        seed,
    };
    let enabled = |name: &str| config.is_enabled(name);
    let d = diagnose(
        &space,
        &target,
        solver,
        &config.tolerances,
        meta,
        config::default_oracle_threshold(),
        &enabled,
    )?;
    let status = if !d.solved.converged {
        Status::NotConverged
    } else if !d.report.all_passed() {
        Status::CheckFailed
    } else {
        Status::Ok
    };
    let body = SolveReport {
        provenance: &provenance,
        target: target.description(),
        dim: space.dim(),
        solver,
        status,
        result: &d.solved,
        dual: d.dual.as_ref(),
        diagnostics: &d.report,
    };
    let failed = d.report.checks.iter().filter(|c| !c.passed()).count();
    let headline = match status {
        Status::Ok => format!("solve: ok, {} checks passed", d.report.checks.len()),
        Status::NotConverged => format!("solve: not converged (gradient norm {:e})", d.solved.grad_norm),
        Status::CheckFailed => format!("solve: {failed} of {} checks failed", d.report.checks.len()),
    };
    let mut text = provenance.header();
    let r = &d.solved;
    let _ = writeln!(text, "target: {}", target.description());
    let _ = writeln!(
        text,
        "dimension {}, degree {}, optimizer {:?}",
        space.dim(),
        solver.degree,
        solver.optimizer
    );
    let _ = writeln!(
        text,
        "iterations {}, converged {}, gradient norm {}",
        r.iterations,
        r.converged,
        sci(r.grad_norm)
    );
    let _ = writeln!(text, "objective J = {}", sci(r.objective));
    let _ = writeln!(text, "-log c      = {}", sci(r.variational_lhs));
    let _ = writeln!(text, "W2^2        = {}", sci(r.wasserstein2_sq));
    if let Some(dual) = &d.dual {
        let _ = writeln!(text, "dual fit residual {}", sci(dual.fit_residual));
    }
    let _ = writeln!(text, "checks:\n{}", check_table(&d.report.checks));
    let _ = writeln!(text, "{headline}");
    Ok(Outcome {
        status,
        headline,
        files: files([
            write_json(&common.out, "solve.json", &body),
            write_file(&common.out, "solve.txt", &text),
        ])?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyCriterion {
    /// `final-row-error` against a closed form, `cauchy` against the finest row.
    pub kind: &'static str,
    pub row: Option<Level>,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Final finite converged row against the threshold; with a finest-row
/// reference the last Cauchy increment must also pass.
pub fn study_criterion(table: &StudyTable, threshold: f64) -> Option<StudyCriterion> {
    let ok: Vec<_> = table.rows.iter().filter(|r| r.failure.is_none()).collect();
    let last = ok
        .iter()
        .rev()
        .find(|r| matches!(r.n, Level::Finite(_)))
        .or(ok.last())?;
    Some(match (table.reference, &table.cauchy) {
        (ReferenceKind::FinestRow, Some(c)) => StudyCriterion {
            kind: "cauchy",
            row: ok.iter().rev().nth(1).map(|r| r.n),
            value: c.last_error,
            threshold,
            passed: c.pass && c.last_error <= threshold,
        },
        _ => StudyCriterion {
            kind: "final-row-error",
            row: Some(last.n),
            value: last.grad_phi_err,
            threshold,
            passed: last.grad_phi_err <= threshold,
        },
    })
}

#[derive(Serialize)]
struct StudyReport<'a> {
    provenance: &'a Provenance,
    target: &'a str,
    solver: &'a SolveConfig,
    study: &'a StudyConfig,
    status: Status,
    criterion: Option<StudyCriterion>,
    table: &'a StudyTable,
}

pub fn study(path: &Path, common: &Common) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, seed } = config::load(path, common.seed)?;
    let space = config.space("study")?;
    let target = config.target(&space, "study")?;
    let solver = config.solver("study")?;
    let study = config.study("study")?;
    let provenance = Provenance::new("study", sha256, seed, space.describe());
    let table = convergence_study(&space, &target, study.scheme, &study.levels, solver)?;
    let criterion = study_criterion(&table, study.threshold);
    let status = match &criterion {
        None => Status::NotConverged,
        Some(c) if c.passed => Status::Ok,
        Some(_) => Status::CheckFailed,
    };
    let failed_rows = table.rows.iter().filter(|r| r.failure.is_some()).count();
    let headline = match &criterion {
        None => "study: no level converged".to_string(),
        Some(c) => format!(
            "study: {} {} = {} (threshold {}), {} of {} rows solved",
            c.kind,
            c.row.map(|n| format!("at n = {n}")).unwrap_or_default(),
            sci(c.value),
            sci(c.threshold),
            table.rows.len() - failed_rows,
            table.rows.len()
        ),
    };
    let mut text = provenance.header();
    let _ = writeln!(text, "target: {}", target.description());
    let _ = writeln!(
        text,
        "scheme {:?}, reference {:?}, degree {}",
        study.scheme, table.reference, solver.degree
    );
    let _ = writeln!(
        text,
        "{:>6}  {:>13}  {:>13}  {:>13}  {:>13}  status",
        "n", "grad_phi_err", "psi_err", "w2sq", "Q psi err"
    );
    for r in &table.rows {
        let _ = writeln!(
            text,
            "{:>6}  {:>13}  {:>13}  {:>13}  {:>13}  {}",
            r.n.to_string(),
            sci(r.grad_phi_err),
            sci(r.psi_err),
            sci(r.w2sq),
            r.smoothed_psi_err.map(sci).unwrap_or_else(|| "-".into()),
            r.failure
                .as_deref()
                .map(|f| format!("failed: {f}"))
                .unwrap_or_else(|| "ok".into())
        );
    }
    if let Some(c) = &table.cauchy {
        let _ = writeln!(
            text,
            "cauchy: last increment {}, previous {}, pass {}",
            sci(c.last_error),
            sci(c.self_distance),
            c.pass
        );
    }
    let _ = writeln!(text, "{headline}");
    let body = StudyReport {
        provenance: &provenance,
        target: target.description(),
        solver,
        study,
        status,
        criterion,
        table: &table,
    };
    Ok(Outcome {
        status,
        headline,
        files: files([
            write_json(&common.out, "study.json", &body),
            write_file(&common.out, "study.csv", &table.to_csv()),
            write_file(&common.out, "study.txt", &text),
        ])?,
    })
}

#[derive(Serialize)]
struct BatteryReport<'a> {
    provenance: &'a Provenance,
    status: Status,
    aggregate: &'a Aggregate,
    entries: &'a [EntryReport],
}

pub fn battery(path: Option<&Path>, common: &Common) -> Result<Outcome, CliError> {
    let (config, sha256, seed) = match path {
        Some(p) => {
            let l = config::load(p, common.seed)?;
            (l.config, l.sha256, l.seed)
        }
        None => {
            let c: Config = config::parse("").expect("empty config is valid");
            let seed = common.seed.unwrap_or(c.seed);
            (c, config::sha256_hex(b""), seed)
        }
    };
    let (entries, oracle_threshold) = battery::resolve(config.battery.as_ref())?;
    let provenance = Provenance::new("battery", sha256, seed, "per entry".into());
    let enabled = |name: &str| config.is_enabled(name);
    let reports = battery::run(entries, &config.tolerances, oracle_threshold, seed, &enabled)?;
    let agg = battery::aggregate(&reports);
    let status = if agg.passed { Status::Ok } else { Status::CheckFailed };
    let headline = format!(
        "battery: {} of {} entries passed, {} checks not applicable",
        agg.passed_entries,
        agg.entries,
        agg.skipped.len()
    );

    let mut text = provenance.header();
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &reports {
        let failed: Vec<&str> = r
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect();
        let verdict = match (&r.error, r.passed) {
            (Some(e), _) => format!("error: {e}"),
            (None, true) => "pass".into(),
            (None, false) if !r.converged => "not converged".into(),
            (None, false) => format!("FAIL {}", failed.join(" ")),
        };
        let _ = writeln!(
            text,
            "{:width$}  d={} p={:<2}  W2^2 {}  {verdict}",
            r.name,
            r.dim,
            r.degree,
            sci(r.w2sq)
        );
        let _ = writeln!(text, "{:width$}  {}", "", r.quadrature);
    }
    let _ = writeln!(text, "\nminimum slack per inequality:");
    for (name, e) in &agg.min_slack {
        let _ = writeln!(text, "  {name:28} {}  ({})", sci(e.value), e.entry);
    }
    for (label, e) in [
        ("max forward EL residual", &agg.max_forward_el),
        ("max backward EL residual", &agg.max_backward_el),
        ("max oracle deviation", &agg.max_oracle_deviation),
        ("max quartic ratio", &agg.max_quartic_ratio),
    ] {
        if let Some(e) = e {
            let _ = writeln!(text, "{label:30} {}  ({})", sci(e.value), e.entry);
        }
    }
    for s in &agg.skipped {
        let _ = writeln!(text, "skipped {} on {}: {}", s.check, s.entry, s.reason);
    }
    for f in &agg.failures {
        let _ = writeln!(text, "failed {} on {}: {}", f.check, f.entry, f.note);
    }
    let _ = writeln!(text, "{headline}");

    let mut csv = csv_line(
        &[
            "name",
            "dim",
            "degree",
            "converged",
            "w2sq",
            "forward_el",
            "backward_el",
            "oracle_sup",
            "min_inequality_slack",
            "passed",
        ]
        .map(String::from),
    );
    for r in &reports {
        let lhs = |name: &str| r.check(name).map(|c| csv_float(c.lhs)).unwrap_or_default();
        let min_slack = r
            .checks
            .iter()
            .filter(|c| c.kind == CheckKind::Inequality && c.slack.is_finite())
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min);
        csv.push_str(&csv_line(&[
            r.name.clone(),
            r.dim.to_string(),
            r.degree.to_string(),
            r.converged.to_string(),
            csv_float(r.w2sq),
            lhs("forward-el-residual"),
            lhs("backward-el-residual"),
            lhs(ORACLE_CHECK),
            if min_slack.is_finite() {
                csv_float(min_slack)
            } else {
                String::new()
            },
            r.passed.to_string(),
        ]));
    }

    let body = BatteryReport {
        provenance: &provenance,
        status,
        aggregate: &agg,
        entries: &reports,
    };
    Ok(Outcome {
        status,
        headline,
        files: files([
            write_json(&common.out, "battery.json", &body),
            write_file(&common.out, "battery.csv", &csv),
            write_file(&common.out, "battery.txt", &text),
        ])?,
    })
}

#[derive(Serialize)]
struct SolverComparison {
    degree: usize,
    converged: bool,
    w2sq: f64,
    sup_error: f64,
    threshold: f64,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    provenance: &'a Provenance,
    target: &'a str,
    status: Status,
    grid: OracleGrid,
    table_range: [f64; 2],
    log_normalizer: f64,
    w2sq: f64,
    pushforward_cdf_error: f64,
    solver: Option<SolverComparison>,
}

pub fn oracle(path: &Path, common: &Common) -> Result<Outcome, CliError> {
    let Loaded { config, sha256, seed } = config::load(path, common.seed)?;
    if let Some(s) = &config.space {
        if s.dim != 1 {
            return Err(CliError::config("space.dim", "the oracle is one-dimensional"));
        }
    }
    let space = match &config.space {
        Some(s) => config::build_space(s.dim, s.quadrature, "space")?,
        None => config::build_space(1, None, "space")?,
    };
    let target = config.target(&space, "oracle")?;
    let settings = config.oracle.clone().unwrap_or_default();
    let map = MonotoneMap::build(&target, &settings.grid)?;

    let solved = match &config.solver {
        Some(solver) => Some((solver, forward::solve(&space, &target, solver)?)),
        None => None,
    };
    let quadrature = match &solved {
        Some(_) => space.describe(),
        None => "none (rearrangement only)".into(),
    };
    let provenance = Provenance::new("oracle", sha256, seed, quadrature);

    let within = |x: f64| x >= settings.lo - 1e-12 && x <= settings.hi + 1e-12;
    let potential = map.potential();
    let mut header = vec!["x", "oracle_map", "oracle_slope", "oracle_potential"];
    if solved.is_some() {
        header.extend(["solver_map", "abs_diff"]);
    }
    let mut csv = csv_line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    let mut sup = 0.0f64;
    for (i, &x) in map.xs().iter().enumerate() {
        if !within(x) {
            continue;
        }
        let t = map.values()[i];
        let mut cells = vec![
            csv_float(x),
            csv_float(t),
            csv_float(map.slopes()[i]),
            csv_float(potential.values[i]),
        ];
        if let Some((_, r)) = &solved {
            let ts = x + r.phi.grad(&[x])[0];
            sup = sup.max((ts - t).abs());
            cells.extend([csv_float(ts), csv_float((ts - t).abs())]);
        }
        csv.push_str(&csv_line(&cells));
    }

    let comparison = solved.as_ref().map(|(solver, r)| SolverComparison {
        degree: solver.degree,
        converged: r.converged,
        w2sq: r.wasserstein2_sq,
        sup_error: sup,
        threshold: settings.threshold,
    });
    let status = match &comparison {
        Some(c) if !c.converged => Status::NotConverged,
        Some(c) if c.sup_error > c.threshold => Status::CheckFailed,
        _ => Status::Ok,
    };
    let headline = match &comparison {
        Some(c) => format!(
            "oracle: sup |T_oracle - T_solver| = {} (threshold {})",
            sci(c.sup_error),
            sci(c.threshold)
        ),
        None => format!("oracle: W2^2 = {}", sci(map.wasserstein2_sq())),
    };
    let body = OracleReport {
        provenance: &provenance,
        target: target.description(),
        status,
        grid: settings.grid,
        table_range: [settings.lo, settings.hi],
        log_normalizer: map.log_normalizer(),
        w2sq: map.wasserstein2_sq(),
        pushforward_cdf_error: oracle1d::pushforward_cdf_error(&target, &map)?,
        solver: comparison,
    };
    let mut text = provenance.header();
    let _ = writeln!(text, "target: {}", target.description());
    let _ = writeln!(
        text,
        "grid [{}, {}] with {} points, table on [{}, {}]",
        settings.grid.lo, settings.grid.hi, settings.grid.points, settings.lo, settings.hi
    );
    let _ = writeln!(text, "log E[e^-f] = {}", sci(body.log_normalizer));
    let _ = writeln!(text, "W2^2        = {}", sci(body.w2sq));
    let _ = writeln!(text, "max |Phi(x) - F(T(x))| = {}", sci(body.pushforward_cdf_error));
    let _ = writeln!(text, "{headline}");
    Ok(Outcome {
        status,
        headline,
        files: files([
            write_json(&common.out, "oracle.json", &body),
            write_file(&common.out, "oracle.csv", &csv),
            write_file(&common.out, "oracle.txt", &text),
        ])?,
    })
}
