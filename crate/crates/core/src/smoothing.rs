//! Regularized targets converging to a given one, and the studies that track
//! how the transport potentials follow them.
//!
//! Two schemes are provided. The Ornstein-Uhlenbeck scheme replaces `e^{-f}`
//! by `E[P_{1/n} e^{-f} | x_1..x_k]`, `k = min(n, d)`. The truncation scheme
//! replaces the density `L = c⁻¹e^{-f}` by `c_n κ_n(L)` where `κ_n` is a C²
//! clamp onto `[1/(2n), 2n]` that is the identity on `[1/n, n]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backward;
use crate::error::{invalid, Error, Result};
use crate::forward::{self, SolveConfig};
use crate::gaussian::{
    ou_semigroup, GaussianSpace, QuadratureRule, ScalarTarget, TargetFunction, TargetJet, TargetKind,
};
use crate::potential::PotentialField;

/// `f_n = −log E[P_t e^{-f} | x_1..x_k]`, integrated with a fixed rule so its
/// derivatives are exact derivatives of the quadrature sum.
struct OuSmoothed {
    inner: ScalarTarget,
    rule: QuadratureRule,
    block: usize,
    decay: f64,
    spread: f64,
}

impl fmt::Debug for OuSmoothed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OuSmoothed")
            .field("inner", &self.inner.description())
            .field("block", &self.block)
            .field("decay", &self.decay)
            .finish()
    }
}

impl OuSmoothed {
    fn argument(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = if i < self.block {
                self.decay * x[i] + self.spread * z[i]
            } else {
                z[i]
            };
        }
    }

    /// Log-weights `log w_k − f(arg_k)` and their log-sum-exp.
    fn log_terms(&self, x: &[f64], with_jets: bool) -> (Vec<f64>, f64, Vec<TargetJet>) {
        let d = x.len();
        let mut arg = vec![0.0; d];
        let mut logs = Vec::with_capacity(self.rule.len());
        let mut jets = Vec::new();
        for (k, &w) in self.rule.weights().iter().enumerate() {
            self.argument(x, self.rule.node(k), &mut arg);
            let value = if with_jets {
                let jet = self.inner.jet(&arg);
                let v = jet.value;
                jets.push(jet);
                v
            } else {
                self.inner.value(&arg)
            };
            logs.push(if w > 0.0 { w.ln() - value } else { f64::NEG_INFINITY });
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = if top.is_finite() {
            top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
        } else {
            top
        };
        (logs, lse, jets)
    }
}

impl TargetFunction for OuSmoothed {
    fn value(&self, x: &[f64]) -> f64 {
        -self.log_terms(x, false).1
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let d = x.len();
        let (logs, lse, jets) = self.log_terms(x, true);
        // with p_k ∝ w_k e^{-f(arg_k)}: ∇f_n = e^{-t} E_p[∇f], ∇²f_n = e^{-2t}(E_p[∇²f] − Cov_p[∇f])
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        let mut outer = DMatrix::zeros(d, d);
        for (l, jet) in logs.iter().zip(&jets) {
            let p = (l - lse).exp();
            if p == 0.0 {
                continue;
            }
            mean.axpy(p, &jet.grad, 1.0);
            second += p * &jet.hess;
            outer += p * &jet.grad * jet.grad.transpose();
        }
        let cov = outer - &mean * mean.transpose();
        let mask = DVector::from_fn(d, |i, _| if i < self.block { self.decay } else { 0.0 });
        let grad = mean.component_mul(&mask);
        let hess = DMatrix::from_fn(d, d, |i, j| mask[i] * mask[j] * (second[(i, j)] - cov[(i, j)]));
        TargetJet {
            value: -lse,
            grad,
            hess: 0.5 * (&hess + hess.transpose()),
        }
    }
}

/// `f_n` of the Ornstein-Uhlenbeck scheme at time `1/n`, conditioned on the
/// first `min(n, d)` coordinates.
pub fn smooth_target(space: &GaussianSpace, target: &ScalarTarget, n: usize) -> Result<ScalarTarget> {
    if n == 0 {
        return Err(invalid("smoothing index n must be at least 1"));
    }
    let d = space.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: target.dim(),
        });
    }
    let t = 1.0 / n as f64;
    let func = OuSmoothed {
        inner: target.clone(),
        rule: space.rule().clone(),
        block: n.min(d),
        decay: (-t).exp(),
        spread: (-(-2.0 * t).exp_m1()).sqrt(),
    };
    for x in space.rule().nodes() {
        let v = func.value(x);
        if !v.is_finite() {
            return Err(Error::DegenerateWeight { normalizer: (-v).exp() });
        }
    }
    ScalarTarget::custom(
        d,
        format!("ou-smoothed[n={n}]({})", target.description()),
        Arc::new(func),
    )
}

/// C² clamp: identity on `[1/n, n]`, values in `[1/(2n), 2n]`.
#[derive(Debug, Clone, Copy)]
pub struct Clamp {
    n: f64,
}

/// `3r² − 2r³` and its first two derivatives.
fn smoothstep(r: f64) -> (f64, f64, f64) {
    if r <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if r >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        (r * r * (3.0 - 2.0 * r), 6.0 * r * (1.0 - r), 6.0 - 12.0 * r)
    }
}

impl Clamp {
    pub fn new(n: usize) -> Self {
        Self { n: n as f64 }
    }

    /// `(κ(L), κ'(L), κ''(L))`.
    pub fn eval(&self, l: f64) -> (f64, f64, f64) {
        let n = self.n;
        let low = 1.0 / n;
        if l < low {
            // κ' = S(nL), κ(0) = 1/(2n)
            let r = (n * l).max(0.0);
            let (s, ds, _) = smoothstep(r);
            let integral = r.powi(3) - 0.5 * r.powi(4);
            (0.5 / n + integral / n, s, n * ds)
        } else if l <= n {
            (l, 1.0, 0.0)
        } else {
            // κ' = 1 − S((L − n)/(2n)), plateau at 2n
            let r = ((l - n) / (2.0 * n)).min(1.0);
            let (s, ds, _) = smoothstep(r);
            let integral = r - (r.powi(3) - 0.5 * r.powi(4));
            (n + 2.0 * n * integral, 1.0 - s, -ds / (2.0 * n))
        }
    }
}

/// `f_n = −log c_n − log κ_n(L)` with `L = e^{-f − log c}`.
struct Truncated {
    inner: ScalarTarget,
    clamp: Clamp,
    log_c: f64,
    log_cn: f64,
}

impl fmt::Debug for Truncated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Truncated")
            .field("inner", &self.inner.description())
            .field("n", &self.clamp.n)
            .field("log_cn", &self.log_cn)
            .finish()
    }
}

impl Truncated {
    fn density(&self, f: f64) -> f64 {
        (-f - self.log_c).exp()
    }
}

impl TargetFunction for Truncated {
    fn value(&self, x: &[f64]) -> f64 {
        let (k, _, _) = self.clamp.eval(self.density(self.inner.value(x)));
        -self.log_cn - k.ln()
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let TargetJet { value, grad, hess } = self.inner.jet(x);
        let l = self.density(value);
        let (k, dk, ddk) = self.clamp.eval(l);
        // with ∇L = −L∇f: ∇f_n = a₁∇f, ∇²f_n = a₁∇²f + (a₁² − a₁ − a₂)∇f∇fᵀ,
        // a₁ = Lκ'/κ, a₂ = L²κ''/κ; zero derivatives win over overflowing L
        let a1 = if dk == 0.0 { 0.0 } else { l * dk / k };
        let a2 = if ddk == 0.0 { 0.0 } else { l * l * ddk / k };
        let outer = &grad * grad.transpose();
        let h = a1 * &hess + (a1 * a1 - a1 - a2) * outer;
        TargetJet {
            value: -self.log_cn - k.ln(),
            grad: a1 * grad,
            hess: 0.5 * (&h + h.transpose()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Truncation {
    pub target: ScalarTarget,
    /// `c_n = 1 / E_μ[κ_n(L)]`
    pub normalizer: f64,
    /// `E_μ|κ_n(L) − L|`
    pub mass_gap: f64,
}

pub fn truncate_density(space: &GaussianSpace, target: &ScalarTarget, n: usize) -> Result<Truncation> {
    if n == 0 {
        return Err(invalid("truncation index n must be at least 1"));
    }
    let log_c = space.target_measure(target)?.log_normalizer();
    let clamp = Clamp::new(n);
    let sums = space.rule().accumulate(2, |x, w, out| {
        let l = (-target.value(x) - log_c).exp();
        let k = clamp.eval(l).0;
        out[0] += w * k;
        out[1] += w * (k - l).abs();
        Ok(())
    })?;
    let mass = sums[0];
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateWeight { normalizer: mass });
    }
    let func = Truncated {
        inner: target.clone(),
        clamp,
        log_c,
        log_cn: -mass.ln(),
    };
    let truncated = ScalarTarget::custom(
        target.dim(),
        format!("truncated[n={n}]({})", target.description()),
        Arc::new(func),
    )?;
    Ok(Truncation {
        target: truncated,
        normalizer: 1.0 / mass,
        mass_gap: sums[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Ou,
    Truncation,
}

/// A study index: a finite `n` or the unregularized target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Finite(n) => write!(f, "{n}"),
            Level::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Level::Finite(n) => s.serialize_u64(*n as u64),
            Level::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("study levels start at 1")),
            Raw::Int(n) => Ok(Level::Finite(n as usize)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(Level::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a positive integer or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Regularized target at `level` under `scheme`.
pub fn regularize(space: &GaussianSpace, target: &ScalarTarget, scheme: Scheme, level: Level) -> Result<ScalarTarget> {
    match (scheme, level) {
        (_, Level::Infinite) => Ok(target.clone()),
        (Scheme::Ou, Level::Finite(n)) => smooth_target(space, target, n),
        (Scheme::Truncation, Level::Finite(n)) => Ok(truncate_density(space, target, n)?.target),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    ClosedForm,
    FinestRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: Level,
    /// `‖∇φ_n − ∇φ‖_{L²(μ)}`
    pub grad_phi_err: f64,
    /// `‖ψ_n − ψ‖_{L¹(ν)}`
    pub psi_err: f64,
    /// `E_μ|∇φ_n|²`
    pub w2sq: f64,
    /// `‖Q_{1/n}ψ_n − ψ‖_{L¹(ν)}` with `Q` the Mehler semigroup; OU scheme only
    pub smoothed_psi_err: Option<f64>,
    /// set when this row's solve failed
    pub failure: Option<String>,
}

/// Increments below this count as converged to quadrature noise.
pub const CAUCHY_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cauchy {
    /// `‖∇φ_b − ∇φ_c‖` for the two finest converged rows `b < c`
    pub last_error: f64,
    /// `‖∇φ_a − ∇φ_b‖` for the converged row `a` just before `b`
    pub self_distance: f64,
    /// `last_error <= max(2 · self_distance, CAUCHY_FLOOR)`
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub scheme: Scheme,
    pub reference: ReferenceKind,
    /// `d₂(μ, ν)²` of the reference
    pub reference_w2sq: f64,
    pub rows: Vec<StudyRow>,
    pub cauchy: Option<Cauchy>,
}

impl StudyTable {
    /// Grad errors of the rows that solved, in table order.
    pub fn grad_errors(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.failure.is_none())
            .map(|r| r.grad_phi_err)
            .collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.grad_errors().windows(2).all(|w| w[1] < w[0])
    }

    /// `|w2sq_n − d₂²|` is nonincreasing up to `noise`.
    pub fn w2_monotone(&self, noise: f64) -> bool {
        let gaps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.failure.is_none())
            .map(|r| (r.w2sq - self.reference_w2sq).abs())
            .collect();
        gaps.windows(2).all(|w| w[1] <= w[0] + noise)
    }

    /// `n,grad_phi_err,psi_err,w2sq,smoothed_psi_err,status` with one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,grad_phi_err,psi_err,w2sq,smoothed_psi_err,status\n");
        for r in &self.rows {
            let q = r.smoothed_psi_err.map(fmt_float).unwrap_or_default();
            let status = match &r.failure {
                None => "ok".to_string(),
                Some(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                fmt_float(r.grad_phi_err),
                fmt_float(r.psi_err),
                fmt_float(r.w2sq),
                q,
                status
            ));
        }
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

struct Solved {
    phi: PotentialField,
    psi: PotentialField,
    w2sq: f64,
}

fn solve_pair(space: &GaussianSpace, target: &ScalarTarget, config: &SolveConfig) -> Result<Solved> {
    let result = forward::solve(space, target, config)?;
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
            grad_norm: result.grad_norm,
        });
    }
    let dual = backward::conjugate(space, target, &result.phi, config.degree)?;
    Ok(Solved {
        phi: result.phi,
        psi: dual.psi,
        w2sq: result.wasserstein2_sq,
    })
}

fn closed_form(target: &ScalarTarget, degree: usize) -> Result<Option<Solved>> {
    let Some(TargetKind::Gaussian { mean, sigma }) = target.kind() else {
        return Ok(None);
    };
    let degree = degree.max(2);
    let phi = PotentialField::gaussian_map(mean, sigma, degree)?;
    let psi = backward::gaussian_dual(mean, sigma, degree)?.psi;
    let w2sq = mean.iter().map(|m| m * m).sum::<f64>() + sigma.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>();
    Ok(Some(Solved { phi, psi, w2sq }))
}

fn grad_distance(space: &GaussianSpace, a: &PotentialField, b: &PotentialField) -> Result<f64> {
    Ok(space
        .rule()
        .integrate(|x| Ok((a.grad(x) - b.grad(x)).norm_squared()))?
        .sqrt())
}

/// Solves every level (in parallel), measures each against a reference and
/// reports a table ordered by `n`; failed solves are flagged, not fatal.
pub fn convergence_study(
    space: &GaussianSpace,
    target: &ScalarTarget,
    scheme: Scheme,
    levels: &[Level],
    config: &SolveConfig,
) -> Result<StudyTable> {
    if levels.is_empty() {
        return Err(invalid("a study needs at least one level"));
    }
    config.validate()?;
    let mut levels = levels.to_vec();
    levels.sort();
    levels.dedup();

    let solved: Vec<Result<Solved>> = levels
        .par_iter()
        .map(|&level| solve_pair(space, &regularize(space, target, scheme, level)?, config))
        .collect();

    let (reference, kind) = match closed_form(target, config.degree)? {
        Some(exact) => (Some(exact), ReferenceKind::ClosedForm),
        None => (
            solved.iter().rev().find_map(|s| s.as_ref().ok()).map(|finest| Solved {
                phi: finest.phi.clone(),
                psi: finest.psi.clone(),
                w2sq: finest.w2sq,
            }),
            ReferenceKind::FinestRow,
        ),
    };

    let nu = space.target_measure(target)?;
    let mut rows = Vec::with_capacity(levels.len());
    for (&level, outcome) in levels.iter().zip(&solved) {
        let row = match (outcome, &reference) {
            (Ok(s), Some(reference)) => {
                let grad_phi_err = grad_distance(space, &s.phi, &reference.phi)?;
                let psi_err = nu.expect(|y| Ok((s.psi.value(y) - reference.psi.value(y)).abs()))?;
                let smoothed_psi_err = match (scheme, level) {
                    (Scheme::Ou, Level::Finite(n)) => {
                        let q = ou_semigroup(space, |y| s.psi.value(y), 1.0 / n as f64)?;
                        Some(nu.expect(|y| Ok((q(y)? - reference.psi.value(y)).abs()))?)
                    }
                    (Scheme::Ou, Level::Infinite) => Some(psi_err),
                    _ => None,
                };
                StudyRow {
                    n: level,
                    grad_phi_err,
                    psi_err,
                    w2sq: s.w2sq,
                    smoothed_psi_err,
                    failure: None,
                }
            }
            (Err(e), _) => StudyRow {
                n: level,
                grad_phi_err: f64::NAN,
                psi_err: f64::NAN,
                w2sq: f64::NAN,
                smoothed_psi_err: None,
                failure: Some(e.to_string()),
            },
            (Ok(_), None) => unreachable!("a solved row is its own reference"),
        };
        rows.push(row);
    }

    let good: Vec<&Solved> = solved.iter().filter_map(|s| s.as_ref().ok()).collect();
    let cauchy = match good[..] {
        [.., a, b, c] => {
            let last_error = grad_distance(space, &b.phi, &c.phi)?;
            let self_distance = grad_distance(space, &a.phi, &b.phi)?;
            Some(Cauchy {
                last_error,
                self_distance,
                pass: last_error <= (2.0 * self_distance).max(CAUCHY_FLOOR),
            })
        }
        _ => None,
    };

    Ok(StudyTable {
        scheme,
        reference: kind,
        reference_w2sq: reference.map_or(f64::NAN, |r| r.w2sq),
        rows,
        cauchy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_target_is_fixed() {
        let space = GaussianSpace::tensor_hermite(2, 8).unwrap();
        let zero = ScalarTarget::standard(2);
        let smooth = smooth_target(&space, &zero, 1).unwrap();
        let jet = smooth.jet(&[0.4, -1.3]);
        assert!(jet.value.abs() < 1e-14 && jet.grad.norm() == 0.0 && jet.hess.norm() == 0.0);
        let cut = truncate_density(&space, &zero, 1).unwrap();
        assert!((cut.normalizer - 1.0).abs() < 1e-14 && cut.mass_gap == 0.0);
        assert!(cut.target.value(&[0.7, 0.2]).abs() < 1e-14);
    }

    #[test]
    fn linear_potential_is_damped() {
        let space = GaussianSpace::tensor_hermite(1, 40).unwrap();
        let beta = 0.8;
        let target = ScalarTarget::new(
            1,
            TargetKind::Affine {
                slope: vec![beta],
                offset: 0.0,
            },
        )
        .unwrap();
        for n in [1, 3, 10] {
            let t = 1.0 / n as f64;
            let s2 = 1.0 - (-2.0 * t).exp();
            let smooth = smooth_target(&space, &target, n).unwrap();
            for x in [-2.0, 0.0, 1.5] {
                let expected = (-t).exp() * beta * x - 0.5 * beta * beta * s2;
                let jet = smooth.jet(&[x]);
                assert!((jet.value - expected).abs() < 1e-12, "n={n} x={x}");
                assert!((jet.grad[0] - (-t).exp() * beta).abs() < 1e-12);
                assert!(jet.hess[(0, 0)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_smoothing_is_gaussian_and_log_concavity_is_kept() {
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let low = target.hess(&[0.0])[(0, 0)];
        let t: f64 = 0.25;
        // e^{-f} ∝ exp(a x² + b x) with a = 3/8, b = 1/4; P_t keeps the form
        let a = 0.375;
        let s2 = 1.0 - (-2.0 * t).exp();
        let a_t = a * (-2.0 * t).exp() / (1.0 - 2.0 * a * s2);
        let smooth = smooth_target(&space, &target, 4).unwrap();
        for x in [-3.0, -1.0, 0.0, 2.0, 4.0] {
            let h = smooth.hess(&[x])[(0, 0)];
            assert!((h + 2.0 * a_t).abs() < 1e-9, "{h} vs {}", -2.0 * a_t);
            assert!(h >= low.min(0.0) - 1e-8);
        }
    }

    #[test]
    fn clamp_is_c2() {
        for n in [1usize, 2, 5] {
            let c = Clamp::new(n);
            let nf = n as f64;
            assert!((c.eval(0.0).0 - 0.5 / nf).abs() < 1e-15);
            assert!((c.eval(10.0 * nf).0 - 2.0 * nf).abs() < 1e-12);
            for l in [1.0 / nf, nf, 3.0 * nf, 0.3 / nf, 1.7 * nf] {
                let h = 1e-6 * l;
                let (v, d1, d2) = c.eval(l);
                let (vp, d1p, _) = c.eval(l + h);
                let (vm, d1m, _) = c.eval(l - h);
                assert!(((vp - vm) / (2.0 * h) - d1).abs() < 1e-6);
                assert!(((d1p - d1m) / (2.0 * h) - d2).abs() < 1e-4 * (1.0 + d2.abs()));
                assert!(vp >= v && v >= vm);
            }
        }
    }

    #[test]
    fn truncation_of_wide_gaussian() {
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let cut = truncate_density(&space, &target, 2).unwrap();
        assert!(cut.normalizer > 1.0);
        let nu = space.target_measure(&cut.target).unwrap();
        assert!((nu.log_normalizer()).abs() < 1e-12);
        let gaps: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&n| truncate_density(&space, &target, n).unwrap().mass_gap)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn level_parsing() {
        #[derive(Deserialize)]
        struct Wrap {
            n: Vec<Level>,
        }
        let w: Wrap = serde_json::from_str(r#"{"n": [1, 4, "inf"]}"#).unwrap();
        assert_eq!(w.n, vec![Level::Finite(1), Level::Finite(4), Level::Infinite]);
        assert!(serde_json::from_str::<Wrap>(r#"{"n": [0]}"#).is_err());
        assert!(serde_json::from_str::<Wrap>(r#"{"n": ["big"]}"#).is_err());
    }
}
