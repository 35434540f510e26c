//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;

use brenier::backward::{backward_el_residual, gaussian_dual};
use brenier::diagnostics::{
    control_forward, div_second_moment_identity, dual_hessian_bound, forward_el_residual, forward_sobolev_bound,
    weight_polynomial, weighted_constant_identity, CheckRecord, Tolerances,
};
use brenier::forward::{objective, objective_coefficient_gradient, variational_gap};
use brenier::gaussian::{divergence, AffineField, ConstantField, VectorField};
use brenier::{solve, GaussianSpace, PotentialField, ScalarTarget, SolveConfig, TargetKind};
use brenier_cli::battery::{default_battery, run as run_battery, EntryReport};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Deterministic coefficients in `[-1, 1)`.
fn coefficients(len: usize, salt: u64) -> Vec<f64> {
    (0..len as u64)
        .map(|i| {
            let h = (i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

fn gaussian_cases() -> Vec<(usize, f64, f64)> {
    let mut cases = Vec::new();
    for dim in [1, 2] {
        for m in [0.0, 1.0, -0.5] {
            for s in [0.5, 1.0, 2.0] {
                cases.push((dim, m, s));
            }
        }
    }
    cases
}

fn gaussian_exactness() -> Verdict {
    let (mut worst_grad, mut worst_w2, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64);
    for (dim, m, s) in gaussian_cases() {
        let space = GaussianSpace::tensor_hermite(dim, 80).map_err(|e| e.to_string())?;
        let target = ScalarTarget::gaussian_iso(dim, m, s).map_err(|e| e.to_string())?;
        let solved = solve(&space, &target, &SolveConfig::new(2)).map_err(|e| e.to_string())?;
        let exact = PotentialField::gaussian_map(&vec![m; dim], &vec![s; dim], 2).map_err(|e| e.to_string())?;
        let grad_err = space
            .rule()
            .integrate(|x| Ok((solved.phi.grad(x) - exact.grad(x)).norm_squared()))
            .map_err(|e| e.to_string())?
            .sqrt();
        let w2 = dim as f64 * (m * m + (s - 1.0) * (s - 1.0));
        worst_grad = worst_grad.max(grad_err);
        worst_w2 = worst_w2.max((solved.wasserstein2_sq - w2).abs());
        worst_gap = worst_gap.max(
            variational_gap(&space, &target, &solved)
                .map_err(|e| e.to_string())?
                .abs(),
        );
    }
    ensure(
        worst_grad <= 1e-4 && worst_w2 <= 1e-6 && worst_gap <= 1e-6,
        format!(
            "{} targets: L2 grad err {worst_grad:.2e}, W2 err {worst_w2:.2e}, gap {worst_gap:.2e}",
            gaussian_cases().len()
        ),
    )
}

fn is_quartic(e: &EntryReport) -> bool {
    e.name.starts_with("quartic") && e.degree >= 6
}

fn worst_check(
    battery: &[EntryReport],
    select: impl Fn(&EntryReport) -> bool,
    name: &str,
    value: impl Fn(&CheckRecord) -> f64,
) -> Result<(f64, usize), String> {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for e in battery.iter().filter(|e| select(e)) {
        let c = e.check(name).ok_or_else(|| format!("{}: no {name}", e.name))?;
        worst = worst.max(value(c));
        count += 1;
    }
    Ok((worst, count))
}

fn forward_el(battery: &[EntryReport]) -> Verdict {
    let mut closed = 0.0f64;
    for (dim, m, s) in gaussian_cases() {
        let space = GaussianSpace::tensor_hermite(dim, 80).map_err(|e| e.to_string())?;
        let target = ScalarTarget::gaussian_iso(dim, m, s).map_err(|e| e.to_string())?;
        let phi = PotentialField::gaussian_map(&vec![m; dim], &vec![s; dim], 2).map_err(|e| e.to_string())?;
        closed = closed.max(forward_el_residual(&space, &target, &phi).map_err(|e| e.to_string())?);
    }
    let (solved, n) = worst_check(battery, is_quartic, "forward-el-residual", |c| c.lhs)?;
    ensure(
        closed <= 1e-8 && solved <= 1e-3 && n > 0,
        format!("closed form {closed:.2e}, {n} solved quartics {solved:.2e}"),
    )
}

fn backward_el(battery: &[EntryReport]) -> Verdict {
    let mut closed = 0.0f64;
    for (dim, m, s) in gaussian_cases() {
        let space = GaussianSpace::tensor_hermite(dim, 80).map_err(|e| e.to_string())?;
        let target = ScalarTarget::gaussian_iso(dim, m, s).map_err(|e| e.to_string())?;
        let dual = gaussian_dual(&vec![m; dim], &vec![s; dim], 2).map_err(|e| e.to_string())?;
        closed = closed.max(backward_el_residual(&space, &target, &dual).map_err(|e| e.to_string())?);
    }
    let (solved, n) = worst_check(battery, is_quartic, "backward-el-residual", |c| c.lhs)?;
    ensure(
        closed <= 1e-8 && solved <= 1e-3 && n > 0,
        format!("closed-form duals {closed:.2e}, {n} conjugated quartics {solved:.2e}"),
    )
}

fn divergence_identities() -> Verdict {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut record = |l: f64, r: f64| {
        worst = worst.max((l - r).abs() / (1.0 + r.abs()));
        pairs += 1;
    };
    let targets = [
        ScalarTarget::standard(1),
        ScalarTarget::gaussian_iso(1, 1.0, 2.0).map_err(|e| e.to_string())?,
        ScalarTarget::standard(2),
        ScalarTarget::new(
            2,
            TargetKind::Gaussian {
                mean: vec![0.5, -1.0],
                sigma: vec![0.7, 1.5],
            },
        )
        .map_err(|e| e.to_string())?,
    ];
    for (k, target) in targets.iter().enumerate() {
        let d = target.dim();
        let space = GaussianSpace::tensor_hermite(d, 60).map_err(|e| e.to_string())?;
        let a = coefficients(d * d, k as u64);
        let b = coefficients(d, 10 + k as u64);
        let affine = AffineField {
            matrix: DMatrix::from_row_slice(d, d, &a),
            offset: DVector::from_vec(b.clone()),
        };
        let (l, r) = div_second_moment_identity(&space, target, &affine).map_err(|e| e.to_string())?;
        record(l, r);
        let h = DVector::from_vec(b);
        let (l, r) =
            div_second_moment_identity(&space, target, &ConstantField(h.clone())).map_err(|e| e.to_string())?;
        record(l, r);
        let alpha = weight_polynomial(d).map_err(|e| e.to_string())?;
        let (l, r) = weighted_constant_identity(&space, target, &h, &alpha).map_err(|e| e.to_string())?;
        record(l, r);
    }
    let space = GaussianSpace::tensor_hermite(1, 80).map_err(|e| e.to_string())?;
    let n14 = ScalarTarget::gaussian_iso(1, 1.0, 2.0).map_err(|e| e.to_string())?;
    let (l, r) = div_second_moment_identity(&space, &n14, &ConstantField(DVector::from_element(1, 1.0)))
        .map_err(|e| e.to_string())?;
    let worked = (l - 0.25).abs().max((r - 0.25).abs());
    ensure(
        worst <= 1e-8 && worked <= 1e-8,
        format!("{pairs} polynomial pairs, worst relative {worst:.2e}; xi = 1 on N(1, 4): {l:.12} = {r:.12}"),
    )
}

const INEQUALITIES: [&str; 6] = [
    "control-forward",
    "dual-hessian-bound",
    "forward-sobolev-bound",
    "l2-ou-bound-eps-0.1",
    "l2-ou-bound-eps-0.5",
    "l2-ou-bound-eps-0.9",
];

fn inequalities(battery: &[EntryReport]) -> Verdict {
    let mut worst = f64::INFINITY;
    for name in INEQUALITIES {
        for e in battery {
            let c = e.check(name).ok_or_else(|| format!("{}: no {name}", e.name))?;
            if c.status != brenier::diagnostics::CheckStatus::NotApplicable {
                worst = worst.min(c.slack);
            }
        }
    }
    let space = GaussianSpace::tensor_hermite(1, 80).map_err(|e| e.to_string())?;
    let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).map_err(|e| e.to_string())?;
    let phi = PotentialField::gaussian_map(&[1.0], &[2.0], 2).map_err(|e| e.to_string())?;
    let dual = gaussian_dual(&[1.0], &[2.0], 2).map_err(|e| e.to_string())?;
    let cf = control_forward(&space, &target, &phi).map_err(|e| e.to_string())?;
    let dh = dual_hessian_bound(&space, &target, &phi, &dual).map_err(|e| e.to_string())?;
    let sb = forward_sobolev_bound(&space, &target, &phi).map_err(|e| e.to_string())?;
    let close = |got: (f64, f64), want: (f64, f64)| (got.0 - want.0).abs() <= 1e-9 && (got.1 - want.1).abs() <= 1e-9;
    let worked =
        close(cf, (0.25, 10.5)) && close((dh.lhs, dh.rhs), (0.25, 10.5)) && close((sb.lhs, sb.rhs), (0.25, 30.0));
    ensure(
        worst >= -1e-6 && worked,
        format!(
            "min slack {worst:.2e} over {} entries; N(1, 4): ({:.6}, {:.6}) ({:.6}, {:.6}) ({:.6}, {:.6})",
            battery.len(),
            cf.0,
            cf.1,
            dh.lhs,
            dh.rhs,
            sb.lhs,
            sb.rhs
        ),
    )
}

fn trace_positivity(battery: &[EntryReport]) -> Verdict {
    let (neg_worst, n) = worst_check(battery, |_| true, "trace-positivity", |c| -c.rhs)?;
    let worst = -neg_worst;
    ensure(worst >= -1e-12, format!("min trace {worst:.2e} over {n} entries"))
}

fn oracle_agreement(battery: &[EntryReport]) -> Verdict {
    let (worst, n) = worst_check(battery, |e| e.dim == 1, brenier_cli::config::ORACLE_CHECK, |c| c.lhs)?;
    ensure(
        worst <= 1e-3 && n > 0,
        format!("sup map error {worst:.2e} over {n} one-dimensional entries"),
    )
}

fn run_study(config: &str) -> Result<Value, String> {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_brenier"))
        .args(["study", "--config"])
        .arg(configs().join(config))
        .arg("--out")
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(dir.path().join("study.json"))
        .map_err(|e| format!("{config}: exit {:?}, {e}", status.status.code()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn studies() -> Verdict {
    let ou = run_study("study_ou.toml")?;
    let errors: Vec<f64> = ou["table"]["rows"]
        .as_array()
        .ok_or("no rows")?
        .iter()
        .filter(|r| r["n"].is_u64())
        .map(|r| r["grad_phi_err"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let last = errors.last().copied().unwrap_or(f64::NAN);
    let trunc = run_study("study_truncation.toml")?;
    let cauchy = &trunc["table"]["cauchy"];
    ensure(
        decreasing && last <= 1e-2 && cauchy["pass"] == true,
        format!(
            "OU: {} levels strictly decreasing {decreasing}, final {last:.2e}; truncation Cauchy {:.2e} vs previous {:.2e}",
            errors.len(),
            cauchy["last_error"].as_f64().unwrap_or(f64::NAN),
            cauchy["self_distance"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn read_dir(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).map_err(|e| e.to_string())?,
        ));
    }
    files.sort();
    Ok(files)
}

fn numerics_and_determinism() -> Verdict {
    let space = GaussianSpace::tensor_hermite(2, 10).map_err(|e| e.to_string())?;
    let mut adjoint = 0.0f64;
    for salt in 0..8 {
        let f = PotentialField::from_coeffs(2, 3, coefficients(9, 100 + salt)).map_err(|e| e.to_string())?;
        let xi = AffineField {
            matrix: DMatrix::from_row_slice(2, 2, &coefficients(4, 200 + salt)),
            offset: DVector::from_vec(coefficients(2, 300 + salt)),
        };
        let lhs = space
            .rule()
            .integrate(|x| Ok(f.grad(x).dot(&xi.value(x))))
            .map_err(|e| e.to_string())?;
        let rhs = space
            .rule()
            .integrate(|x| Ok(f.value(x) * divergence(&xi, x)?))
            .map_err(|e| e.to_string())?;
        adjoint = adjoint.max((lhs - rhs).abs());
    }

    let space = GaussianSpace::tensor_hermite(1, 16).map_err(|e| e.to_string())?;
    let target = ScalarTarget::quartic_well(1, 0.05, 0.25).map_err(|e| e.to_string())?;
    let c: Vec<f64> = coefficients(4, 7)
        .iter()
        .enumerate()
        .map(|(i, v)| 0.03 * v / brenier::hermite::factorial(i + 1))
        .collect();
    let phi = PotentialField::from_coeffs(1, 4, c.clone()).map_err(|e| e.to_string())?;
    let grad = objective_coefficient_gradient(&space, &target, &phi).map_err(|e| e.to_string())?;
    let mut fd_err = 0.0f64;
    for i in 0..c.len() {
        let h = 1e-5;
        let (mut up, mut down) = (c.clone(), c.clone());
        up[i] += h;
        down[i] -= h;
        let jp =
            objective(&space, &target, &phi.with_coeffs(up).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let jm = objective(&space, &target, &phi.with_coeffs(down).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        fd_err = fd_err.max(((jp - jm) / (2.0 * h) - grad[i]).abs() / grad[i].abs().max(1.0));
    }

    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        Command::new(env!("CARGO_BIN_EXE_brenier"))
            .args(["solve", "--config"])
            .arg(configs().join("quartic_1d.toml"))
            .arg("--out")
            .arg(&out)
            .args(["--seed", "13", "--threads", threads])
            .output()
            .map_err(|e| e.to_string())?;
        outputs.push(read_dir(&out)?);
    }
    let identical = !outputs[0].is_empty() && outputs[0] == outputs[1];
    ensure(
        adjoint <= 1e-10 && fd_err <= 1e-5 && identical,
        format!("adjointness {adjoint:.2e}, finite-difference relative {fd_err:.2e}, reports identical across thread counts {identical}"),
    )
}

fn main() {
    let battery = run_battery(default_battery(), &Tolerances::default(), 1e-3, 0, &|_| true);
    let battery = match battery {
        Ok(b) => b,
        Err(e) => {
            println!("FAIL default battery could not run: {e}");
            std::process::exit(1);
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("gaussian exactness", Box::new(gaussian_exactness)),
        ("forward Euler-Lagrange residual", Box::new(|| forward_el(&battery))),
        ("backward Euler-Lagrange residual", Box::new(|| backward_el(&battery))),
        ("divergence identities", Box::new(divergence_identities)),
        ("inequality slacks", Box::new(|| inequalities(&battery))),
        ("trace positivity", Box::new(|| trace_positivity(&battery))),
        (
            "one-dimensional oracle agreement",
            Box::new(|| oracle_agreement(&battery)),
        ),
        ("convergence studies", Box::new(studies)),
        (
            "adjointness, gradients, determinism",
            Box::new(numerics_and_determinism),
        ),
    ];
    let mut failed = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS {}. {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
