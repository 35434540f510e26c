//! Numerical checks of the Euler-Lagrange identities and regularity bounds
//! satisfied by Monge-Brenier potentials, reported as signed slacks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward::{self, DualPotential};
use crate::error::{Error, Result};
use crate::forward;
use crate::gaussian::{
    operator_divergence, weighted_divergence, GaussianSpace, ScalarTarget, TargetKind, TargetMeasure, VectorField,
};
use crate::potential::{min_eigenvalue, GradientField, PotentialField, ResolventField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// `|rhs − lhs| <= tolerance`
    Identity,
    /// `rhs − lhs >= −tolerance`
    Inequality,
    /// recorded only
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Info,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, kind: CheckKind, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        let status = match kind {
            CheckKind::Identity if slack.abs() <= tolerance => CheckStatus::Pass,
            CheckKind::Inequality if slack >= -tolerance => CheckStatus::Pass,
            CheckKind::Info => CheckStatus::Info,
            _ => CheckStatus::Fail,
        };
        Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            slack,
            tolerance,
            status,
            note: String::new(),
        }
    }

    pub fn not_applicable(name: impl Into<String>, kind: CheckKind, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack: f64::NAN,
            tolerance: 0.0,
            status: CheckStatus::NotApplicable,
            note: reason.into(),
        }
    }

    /// A check whose evaluation itself failed.
    pub fn errored(name: impl Into<String>, kind: CheckKind, err: &Error) -> Self {
        Self {
            status: CheckStatus::Fail,
            note: format!("evaluation failed: {err}"),
            ..Self::not_applicable(name, kind, "")
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub target: String,
    pub dim: usize,
    pub degree: usize,
    pub quadrature: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub meta: ExperimentMeta,
    /// ordered by name
    pub checks: Vec<CheckRecord>,
}

impl DiagnosticsReport {
    pub fn new(meta: ExperimentMeta, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        Self { meta, checks }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn transport(x: &[f64], phi: &PotentialField) -> Vec<f64> {
    x.iter().zip(phi.grad(x).iter()).map(|(a, b)| a + b).collect()
}

fn resolvent(hess: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = hess.nrows();
    crate::entropy::shifted_eigenvalues(hess, crate::entropy::EIG_FLOOR)?;
    (DMatrix::identity(d, d) + hess)
        .try_inverse()
        .ok_or(Error::SingularJacobian {
            eigenvalue: 0.0,
            floor: crate::entropy::EIG_FLOOR,
        })
}

/// `E_μ|∇φ + ∇f∘T − δ(K − I)|²`.
pub fn forward_el_residual(space: &GaussianSpace, target: &ScalarTarget, phi: &PotentialField) -> Result<f64> {
    let op = ResolventField(phi);
    space.rule().integrate(|x| {
        let jet = phi.jet(x, false);
        resolvent(&jet.hess)?;
        let t = transport(x, phi);
        let div = operator_divergence(&op, x)?;
        Ok((&jet.grad + target.grad(&t) - div).norm_squared())
    })
}

/// `min tr(K A K A)` with `A = ∇³φ(x)(K e)` over the given nodes and unit
/// directions.
pub fn trace_positivity<'a>(
    phi: &PotentialField,
    nodes: impl Iterator<Item = &'a [f64]>,
    directions: &[DVector<f64>],
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for x in nodes {
        let jet = phi.jet(x, true);
        let k = resolvent(&jet.hess)?;
        let third = jet.third.expect("third derivative requested");
        for e in directions {
            let ke = &k * e;
            let mut a = DMatrix::zeros(phi.dim(), phi.dim());
            for (i, t) in third.iter().enumerate() {
                a += ke[i] * t;
            }
            let kaka = &k * &a * &k * &a;
            worst = worst.min(kaka.trace());
        }
    }
    Ok(worst)
}

/// Up to `count` nodes of the rule spread evenly by index.
pub fn spread_nodes(space: &GaussianSpace, count: usize) -> Vec<&[f64]> {
    let n = space.rule().len();
    let count = count.min(n);
    (0..count).map(|k| space.rule().node(k * n / count)).collect()
}

pub fn unit_directions(dim: usize) -> Vec<DVector<f64>> {
    (0..dim)
        .map(|i| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 }))
        .collect()
}

fn grad_f_moment(nu: &TargetMeasure, target: &ScalarTarget, power: i32) -> Result<f64> {
    nu.expect(|y| Ok(target.grad(y).norm_squared().powi(power / 2)))
}

/// `(E‖K − I‖², 2E|∇φ|² + 2E_ν|∇f|²)`.
pub fn control_forward(space: &GaussianSpace, target: &ScalarTarget, phi: &PotentialField) -> Result<(f64, f64)> {
    let nu = space.target_measure(target)?;
    let lhs = space.rule().integrate(|x| {
        let k = resolvent(&phi.hess(x))?;
        let d = k.nrows();
        Ok((k - DMatrix::identity(d, d)).norm_squared())
    })?;
    let rhs = 2.0 * forward::transport_cost(space, phi)? + 2.0 * grad_f_moment(&nu, target, 2)?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualHessianBound {
    /// `E_ν‖∇²ψ‖²`
    pub lhs: f64,
    /// `2E_ν|∇f|² + 2E|∇φ|²`
    pub rhs: f64,
    /// `E_μ‖K − I‖²`, which equals `lhs` when `ψ` is the dual of `φ`
    pub forward_lhs: f64,
}

pub fn dual_hessian_bound(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
    dual: &DualPotential,
) -> Result<DualHessianBound> {
    let nu = space.target_measure(target)?;
    let lhs = nu.expect(|y| Ok(dual.psi.hess(y).norm_squared()))?;
    let (forward_lhs, rhs) = control_forward(space, target, phi)?;
    Ok(DualHessianBound { lhs, rhs, forward_lhs })
}

/// Largest `ε <= 1` with `(1 − ε)I + ∇²f >= 0` at every quadrature node and
/// on a uniform scan of `[−6, 6]^d`, so narrow concave wells between nodes
/// are not missed.
pub fn convexity_margin(space: &GaussianSpace, target: &ScalarTarget) -> f64 {
    let d = space.dim();
    let per_axis = ((SCAN_POINTS as f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let total = per_axis.pow(d as u32);
    let scan_low = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let i = k % per_axis;
                    k /= per_axis;
                    -SCAN_HALF_WIDTH + 2.0 * SCAN_HALF_WIDTH * i as f64 / (per_axis - 1) as f64
                })
                .collect();
            min_eigenvalue(&target.hess(&x))
        })
        .reduce(|| f64::INFINITY, f64::min);
    let node_low = space
        .rule()
        .nodes()
        .map(|x| min_eigenvalue(&target.hess(x)))
        .fold(f64::INFINITY, f64::min);
    (1.0 + scan_low.min(node_low)).min(1.0)
}

const SCAN_POINTS: usize = 20_000;
const SCAN_HALF_WIDTH: f64 = 6.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SobolevBound {
    pub eps: f64,
    /// `ε E‖∇²φ‖²`
    pub lhs: f64,
    /// `2E|∇φ|² + 8E_ν|∇f|²`
    pub rhs: f64,
}

/// Refuses with `NotApplicable` when no `ε > 0` is certified at the nodes.
pub fn forward_sobolev_bound(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
) -> Result<SobolevBound> {
    let eps = convexity_margin(space, target);
    if !(eps > 0.0) {
        return Err(Error::NotApplicable(format!(
            "target is not (1 − ε)-convex for any ε > 0 on the scanned region (margin {eps:.4})"
        )));
    }
    let nu = space.target_measure(target)?;
    let hess_sq = space.rule().integrate(|x| Ok(phi.hess(x).norm_squared()))?;
    let rhs = 2.0 * forward::transport_cost(space, phi)? + 8.0 * grad_f_moment(&nu, target, 2)?;
    Ok(SobolevBound {
        eps,
        lhs: eps * hess_sq,
        rhs,
    })
}

/// `(E_ν[(δ_ν ξ)²], E_ν[⟨(I + ∇²f)ξ, ξ⟩ + tr(∇ξ ∇ξ)])`.
pub fn div_second_moment_identity(
    space: &GaussianSpace,
    target: &ScalarTarget,
    xi: &dyn VectorField,
) -> Result<(f64, f64)> {
    let nu = space.target_measure(target)?;
    let lhs = nu.expect(|y| Ok(weighted_divergence(target, xi, y)?.powi(2)))?;
    let rhs = nu.expect(|y| {
        let v = xi.value(y);
        let jac = xi.jacobian(y);
        let d = v.len();
        let form = (DMatrix::identity(d, d) + target.hess(y)) * &v;
        Ok(form.dot(&v) + (&jac * &jac).trace())
    })?;
    Ok((lhs, rhs))
}

/// `(E_ν[α (δ_ν h)²], E_ν[⟨(α I + ∇²α + α ∇²f) h, h⟩])` for a constant `h`.
pub fn weighted_constant_identity(
    space: &GaussianSpace,
    target: &ScalarTarget,
    h: &DVector<f64>,
    alpha: &PotentialField,
) -> Result<(f64, f64)> {
    let nu = space.target_measure(target)?;
    let lhs = nu.expect(|y| {
        let delta = DVector::from_column_slice(y).dot(h) + target.grad(y).dot(h);
        Ok(alpha.value(y) * delta * delta)
    })?;
    let rhs = nu.expect(|y| {
        let jet = alpha.jet(y, false);
        let d = h.len();
        let form = DMatrix::identity(d, d) * jet.value + &jet.hess + jet.value * target.hess(y);
        Ok((form * h).dot(h))
    })?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuarticRatio {
    /// `E|∇φ|⁴`
    pub lhs: f64,
    /// `E_ν|∇f|⁴`
    pub rhs: f64,
    pub ratio: f64,
    /// set when `E_ν|∇f|⁴` vanishes and the ratio is reported as zero
    pub degenerate: bool,
}

pub fn quartic_ratio(space: &GaussianSpace, target: &ScalarTarget, phi: &PotentialField) -> Result<QuarticRatio> {
    let nu = space.target_measure(target)?;
    let lhs = space.rule().integrate(|x| Ok(phi.grad(x).norm_squared().powi(2)))?;
    let rhs = grad_f_moment(&nu, target, 4)?;
    let degenerate = rhs <= 1e-300;
    Ok(QuarticRatio {
        lhs,
        rhs,
        ratio: if degenerate { 0.0 } else { lhs / rhs },
        degenerate,
    })
}

/// `L_ν ψ = δ_ν ∇ψ`.
pub fn weighted_ou(target: &ScalarTarget, psi: &PotentialField, y: &[f64]) -> Result<f64> {
    weighted_divergence(target, &GradientField(psi), y)
}

/// `((1 − ε) E_ν[(L_ν ψ)²], sqrt(2E_ν|∇f|² + 2E_ν|∇ψ|²)(1 + E_ν|∇f|⁴) + E_ν|∇f|⁴/ε)`,
/// with `E_ν|∇ψ|²` standing in for `E|∇φ|²` (they agree for a matched pair).
pub fn l2_ou_bound(space: &GaussianSpace, target: &ScalarTarget, dual: &DualPotential, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1), got {eps}")));
    }
    let nu = space.target_measure(target)?;
    let l2 = nu.expect(|y| Ok(weighted_ou(target, &dual.psi, y)?.powi(2)))?;
    let g2 = grad_f_moment(&nu, target, 2)?;
    let g4 = grad_f_moment(&nu, target, 4)?;
    let cost = nu.expect(|y| Ok(dual.psi.grad(y).norm_squared()))?;
    let rhs = (2.0 * g2 + 2.0 * cost).sqrt() * (1.0 + g4) + g4 / eps;
    Ok(((1.0 - eps) * l2, rhs))
}

/// Tolerances used when assembling a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// EL residuals, inverse relation, duality and composition identities
    #[serde(default = "default_identity")]
    pub identity: f64,
    /// signed slack allowed on inequalities
    #[serde(default = "default_inequality")]
    pub inequality: f64,
    /// variational gap and Wasserstein reference agreement
    #[serde(default = "default_identity")]
    pub gap: f64,
    /// integration-by-parts identities under ν
    #[serde(default = "default_divergence")]
    pub divergence: f64,
    /// Young inequality on probe pairs
    #[serde(default = "default_identity")]
    pub young: f64,
    #[serde(default = "default_trace")]
    pub trace: f64,
}

fn default_identity() -> f64 {
    1e-3
}
fn default_inequality() -> f64 {
    1e-6
}
fn default_divergence() -> f64 {
    1e-8
}
fn default_trace() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: default_identity(),
            inequality: default_inequality(),
            gap: default_identity(),
            divergence: default_divergence(),
            young: default_identity(),
            trace: default_trace(),
        }
    }
}

pub const EPS_SWEEP: [f64; 3] = [0.1, 0.5, 0.9];

/// Names produced by [`run_all`], sorted.
pub const CHECK_NAMES: [&str; 20] = [
    "backward-el-residual",
    "backward-objective",
    "control-forward",
    "div-second-moment-constant",
    "div-second-moment-linear",
    "div-weighted-constant",
    "dual-hessian-bound",
    "dual-hessian-composition",
    "duality-cost",
    "forward-el-residual",
    "forward-sobolev-bound",
    "inverse-relation",
    "l2-ou-bound-eps-0.1",
    "l2-ou-bound-eps-0.5",
    "l2-ou-bound-eps-0.9",
    "quartic-ratio",
    "trace-positivity",
    "variational-gap",
    "wasserstein-reference",
    "young-inequality",
];

/// Runs every check on a solved pair `(φ, ψ)`.
pub fn run_all(
    space: &GaussianSpace,
    target: &ScalarTarget,
    solved: &forward::SolveResult,
    dual: &DualPotential,
    tol: &Tolerances,
    seed: u64,
) -> Vec<CheckRecord> {
    let phi = &solved.phi;
    let d = space.dim();
    let mut checks = Vec::new();
    let mut push = |name: &str, kind: CheckKind, rec: Result<CheckRecord>| {
        checks.push(match rec {
            Ok(r) => r,
            Err(Error::NotApplicable(reason)) => CheckRecord::not_applicable(name, kind, reason),
            Err(e) => CheckRecord::errored(name, kind, &e),
        })
    };
    use CheckKind::{Identity, Inequality, Info};

    push(
        "variational-gap",
        Identity,
        Ok(CheckRecord::new(
            "variational-gap",
            Identity,
            solved.objective,
            solved.variational_lhs,
            tol.gap,
        )),
    );
    push(
        "wasserstein-reference",
        Identity,
        forward::wasserstein_check(space, solved, target).and_then(|(w2, reference)| match reference {
            Some(r) => Ok(CheckRecord::new("wasserstein-reference", Identity, w2, r, tol.gap)),
            None => Err(Error::NotApplicable(
                "no independent reference in this dimension".into(),
            )),
        }),
    );
    push(
        "forward-el-residual",
        Identity,
        forward_el_residual(space, target, phi)
            .map(|el| CheckRecord::new("forward-el-residual", Identity, el, 0.0, tol.identity)),
    );
    push(
        "backward-el-residual",
        Identity,
        backward::backward_el_residual(space, target, dual).map(|bel| {
            CheckRecord::new("backward-el-residual", Identity, bel, 0.0, tol.identity)
                .with_note(format!("dual fit residual {:.3e}", dual.fit_residual))
        }),
    );
    push(
        "inverse-relation",
        Identity,
        backward::inverse_check(space, target, phi, dual)
            .map(|v| CheckRecord::new("inverse-relation", Identity, v, 0.0, tol.identity)),
    );
    push(
        "duality-cost",
        Identity,
        backward::dual_transport_cost(space, target, dual)
            .map(|c| CheckRecord::new("duality-cost", Identity, c, solved.wasserstein2_sq, tol.identity)),
    );

    let young = backward::young_check(phi, dual, 10_000, seed);
    push(
        "young-inequality",
        Inequality,
        Ok(
            CheckRecord::new("young-inequality", Inequality, -young.min_pair, 0.0, tol.young).with_note(format!(
                "{} probe pairs, max graph deviation {:.3e}",
                young.pairs, young.max_graph
            )),
        ),
    );
    push(
        "backward-objective",
        Inequality,
        backward::backward_objective(space, target, dual).and_then(|bj| {
            let bound = backward::backward_lower_bound(space, target)?;
            Ok(CheckRecord::new(
                "backward-objective",
                Inequality,
                bound,
                bj + tol.gap,
                0.0,
            ))
        }),
    );

    let directions = unit_directions(d);
    push(
        "trace-positivity",
        Inequality,
        trace_positivity(phi, spread_nodes(space, 100).into_iter(), &directions)
            .map(|tp| CheckRecord::new("trace-positivity", Inequality, 0.0, tp, tol.trace)),
    );
    push(
        "control-forward",
        Inequality,
        control_forward(space, target, phi)
            .map(|(l, r)| CheckRecord::new("control-forward", Inequality, l, r, tol.inequality)),
    );
    match dual_hessian_bound(space, target, phi, dual) {
        Ok(dh) => {
            push(
                "dual-hessian-bound",
                Inequality,
                Ok(CheckRecord::new(
                    "dual-hessian-bound",
                    Inequality,
                    dh.lhs,
                    dh.rhs,
                    tol.inequality,
                )),
            );
            push(
                "dual-hessian-composition",
                Identity,
                Ok(CheckRecord::new(
                    "dual-hessian-composition",
                    Identity,
                    dh.lhs,
                    dh.forward_lhs,
                    tol.identity,
                )),
            );
        }
        Err(e) => {
            push("dual-hessian-bound", Inequality, Err(e.clone()));
            push("dual-hessian-composition", Identity, Err(e));
        }
    }
    push(
        "forward-sobolev-bound",
        Inequality,
        forward_sobolev_bound(space, target, phi).map(|s| {
            CheckRecord::new("forward-sobolev-bound", Inequality, s.lhs, s.rhs, tol.inequality)
                .with_note(format!("ε = {:.6}", s.eps))
        }),
    );
    for eps in EPS_SWEEP {
        let name = format!("l2-ou-bound-eps-{eps}");
        let rec = l2_ou_bound(space, target, dual, eps)
            .map(|(l, r)| CheckRecord::new(name.clone(), Inequality, l, r, tol.inequality));
        push(&name, Inequality, rec);
    }
    push(
        "quartic-ratio",
        Info,
        quartic_ratio(space, target, phi).map(|q| {
            let note = if q.degenerate {
                "E_ν|∇f|⁴ vanishes; ratio reported as 0".to_string()
            } else {
                format!("ratio {:.6}", q.ratio)
            };
            CheckRecord::new("quartic-ratio", Info, q.lhs, q.rhs, 0.0).with_note(note)
        }),
    );

    // ν-quadrature is only near-exact when e^{−f} is Gaussian
    let div_tol = match target.kind() {
        Some(TargetKind::Gaussian { .. } | TargetKind::Affine { .. }) => tol.divergence,
        _ => tol.identity,
    };
    let identity_field = crate::gaussian::AffineField {
        matrix: DMatrix::identity(d, d),
        offset: DVector::zeros(d),
    };
    let scaled = |name: &'static str, r: Result<(f64, f64)>| {
        r.map(|(l, r)| CheckRecord::new(name, Identity, l, r, div_tol * r.abs().max(1.0)))
    };
    push(
        "div-second-moment-linear",
        Identity,
        scaled(
            "div-second-moment-linear",
            div_second_moment_identity(space, target, &identity_field),
        ),
    );
    let e1 = crate::gaussian::ConstantField(directions[0].clone());
    push(
        "div-second-moment-constant",
        Identity,
        scaled(
            "div-second-moment-constant",
            div_second_moment_identity(space, target, &e1),
        ),
    );
    let weighted =
        weight_polynomial(d).and_then(|alpha| weighted_constant_identity(space, target, &directions[0], &alpha));
    push(
        "div-weighted-constant",
        Identity,
        scaled("div-weighted-constant", weighted),
    );

    checks
}

/// `α(x) = 1 + ¼ He_2(x_1) + ½ x_1` (plus `x_1 x_2 / 4` in dimension ≥ 2),
/// a fixed test weight.
pub fn weight_polynomial(dim: usize) -> Result<PotentialField> {
    use crate::hermite::MultiIndex;
    let mut terms = vec![(MultiIndex::unit(dim, 0, 1), 0.5), (MultiIndex::unit(dim, 0, 2), 0.25)];
    if dim >= 2 {
        let mut v = vec![0; dim];
        v[0] = 1;
        v[1] = 1;
        terms.push((MultiIndex(v), 0.25));
    }
    Ok(PotentialField::from_terms(dim, 2, &terms)?.with_constant(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::gaussian_dual;

    fn n14() -> (GaussianSpace, ScalarTarget, PotentialField, DualPotential) {
        (
            GaussianSpace::tensor_hermite(1, 80).unwrap(),
            ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap(),
            PotentialField::gaussian_map(&[1.0], &[2.0], 2).unwrap(),
            gaussian_dual(&[1.0], &[2.0], 2).unwrap(),
        )
    }

    #[test]
    fn gaussian_worked_values() {
        let (space, target, phi, dual) = n14();
        assert!(forward_el_residual(&space, &target, &phi).unwrap() < 1e-20);
        let (l, r) = control_forward(&space, &target, &phi).unwrap();
        assert!((l - 0.25).abs() < 1e-12 && (r - 10.5).abs() < 1e-9);
        let dh = dual_hessian_bound(&space, &target, &phi, &dual).unwrap();
        assert!((dh.lhs - 0.25).abs() < 1e-12 && (dh.rhs - 10.5).abs() < 1e-9 && (dh.forward_lhs - 0.25).abs() < 1e-12);
        let s = forward_sobolev_bound(&space, &target, &phi).unwrap();
        assert!((s.eps - 0.25).abs() < 1e-12);
        assert!((s.lhs - 0.25).abs() < 1e-12 && (s.rhs - 30.0).abs() < 1e-9);
        let q = quartic_ratio(&space, &target, &phi).unwrap();
        assert!((q.lhs - 10.0).abs() < 1e-9 && (q.rhs - 29.6875).abs() < 1e-8);
        for eps in EPS_SWEEP {
            let (l, r) = l2_ou_bound(&space, &target, &dual, eps).unwrap();
            assert!(r >= l);
        }
    }

    #[test]
    fn trivial_target() {
        let space = GaussianSpace::tensor_hermite(2, 6).unwrap();
        let target = ScalarTarget::standard(2);
        let phi = PotentialField::zero(2, 3).unwrap();
        assert_eq!(forward_el_residual(&space, &target, &phi).unwrap(), 0.0);
        assert_eq!(control_forward(&space, &target, &phi).unwrap(), (0.0, 0.0));
        let s = forward_sobolev_bound(&space, &target, &phi).unwrap();
        assert_eq!((s.eps, s.lhs, s.rhs), (1.0, 0.0, 0.0));
        let q = quartic_ratio(&space, &target, &phi).unwrap();
        assert!(q.degenerate && q.ratio == 0.0);
        let h = DVector::from_vec(vec![0.3, -0.4]);
        let (l, r) = div_second_moment_identity(&space, &target, &crate::gaussian::ConstantField(h)).unwrap();
        assert!((l - 0.25).abs() < 1e-14 && (r - 0.25).abs() < 1e-14);
    }

    #[test]
    fn full_report_on_closed_form() {
        let (space, target, phi, dual) = n14();
        let solved = forward::SolveResult {
            objective: forward::objective(&space, &target, &phi).unwrap(),
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            wasserstein2_sq: 2.0,
            variational_lhs: -space.target_measure(&target).unwrap().log_normalizer(),
            history: vec![],
            phi,
        };
        let report = DiagnosticsReport::new(
            ExperimentMeta {
                target: "N(1, 4)".into(),
                dim: 1,
                degree: 2,
                quadrature: space.describe(),
                seed: 3,
            },
            run_all(&space, &target, &solved, &dual, &Tolerances::default(), 3),
        );
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, CHECK_NAMES);
        assert!(
            report.all_passed(),
            "{:?}",
            report.checks.iter().filter(|c| !c.passed()).collect::<Vec<_>>()
        );
        assert!(report.get("forward-el-residual").unwrap().lhs < 1e-16);
    }

    #[test]
    fn one_dimensional_divergence_moment() {
        let (space, target, _, _) = n14();
        let one = crate::gaussian::ConstantField(DVector::from_element(1, 1.0));
        let (l, r) = div_second_moment_identity(&space, &target, &one).unwrap();
        assert!((l - 0.25).abs() < 1e-12 && (r - 0.25).abs() < 1e-12);
        let alpha = weight_polynomial(1).unwrap();
        let (l, r) = weighted_constant_identity(&space, &target, &DVector::from_element(1, 1.0), &alpha).unwrap();
        assert!((l - r).abs() < 1e-10, "{l} vs {r}");
    }

    #[test]
    fn trace_positivity_scalar_case() {
        // φ'' = 1 + x and φ''' = 1
        let phi = PotentialField::from_terms(
            1,
            3,
            &[
                (crate::hermite::MultiIndex(vec![2]), 0.5),
                (crate::hermite::MultiIndex(vec![3]), 1.0 / 6.0),
            ],
        )
        .unwrap();
        let x = [0.0];
        let v = trace_positivity(&phi, std::iter::once(&x[..]), &unit_directions(1)).unwrap();
        // A = φ'''·K·e = ½, KAKA = (½·½)² = 1/16
        assert!((v - 0.0625).abs() < 1e-15);
        let quad = PotentialField::gaussian_map(&[0.3], &[1.4], 2).unwrap();
        assert_eq!(
            trace_positivity(&quad, std::iter::once(&x[..]), &unit_directions(1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn non_convex_mixture_is_not_applicable() {
        use crate::gaussian::{MixtureComponent, TargetKind};
        let space = GaussianSpace::tensor_hermite(1, 30).unwrap();
        let target = ScalarTarget::new(
            1,
            TargetKind::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: 0.5,
                        mean: vec![-2.0],
                        sigma: 0.5,
                    },
                    MixtureComponent {
                        weight: 0.5,
                        mean: vec![2.0],
                        sigma: 0.5,
                    },
                ],
            },
        )
        .unwrap();
        let phi = PotentialField::zero(1, 2).unwrap();
        let r = forward_sobolev_bound(&space, &target, &phi);
        assert!(matches!(r, Err(Error::NotApplicable(_))), "{r:?}");
    }
}
