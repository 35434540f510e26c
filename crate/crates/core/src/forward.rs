//! Forward problem: minimize `J_f(∇φ) = E[f∘(I+∇φ) + ½|∇φ|² − log det₂(I+∇²φ)]`
//! over Hermite coefficients of `φ`.
//!
//! The optimizer works in scaled coordinates `u_α = c_α sqrt(|α| α!)`, in
//! which the quadratic part `E|∇φ|²` of the objective is `|u|²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::entropy::{relative_entropy, EIG_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianSpace, ScalarTarget, TargetKind};
use crate::optimize::{minimize, Evaluation, Method, Objective, Options, Order};
use crate::oracle1d::{MonotoneMap, OracleGrid};
use crate::potential::PotentialField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub degree: usize,
    #[serde(default)]
    pub optimizer: Method,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_eig_floor")]
    pub eig_floor: f64,
}

fn default_max_iters() -> usize {
    200
}

fn default_grad_tol() -> f64 {
    1e-8
}

fn default_eig_floor() -> f64 {
    EIG_FLOOR
}

impl SolveConfig {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            optimizer: Method::default(),
            max_iters: default_max_iters(),
            grad_tol: default_grad_tol(),
            eig_floor: default_eig_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(invalid("degree must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(invalid("grad_tol must be positive"));
        }
        if !(self.eig_floor > 0.0) || self.eig_floor >= 1.0 {
            return Err(invalid("eig_floor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub phi: PotentialField,
    /// `J*`, the objective at the returned potential.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the objective gradient in scaled coordinates.
    pub grad_norm: f64,
    /// `E_μ|∇φ|²`.
    pub wasserstein2_sq: f64,
    /// `−log E_μ[e^{−f}]`.
    pub variational_lhs: f64,
    pub history: Vec<f64>,
}

/// The forward objective for a fixed space, target and basis.
pub struct ForwardProblem<'a> {
    space: &'a GaussianSpace,
    target: &'a ScalarTarget,
    template: PotentialField,
    scales: Vec<f64>,
    floor: f64,
}

/// Per-node quantities shared by value, gradient and Hessian.
struct NodeState {
    grad_phi: DVector<f64>,
    /// `K = (I + ∇²φ)⁻¹`
    inverse: DMatrix<f64>,
    logdet2: f64,
}

fn node_state(grad_phi: DVector<f64>, hess_phi: &DMatrix<f64>, floor: f64) -> Result<NodeState> {
    let d = grad_phi.len();
    let (kappa, vectors) = if d == 1 {
        (vec![hess_phi[(0, 0)]], DMatrix::identity(1, 1))
    } else {
        let eig = SymmetricEigen::new(hess_phi.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut logdet2 = 0.0;
    for &k in &kappa {
        if !k.is_finite() {
            return Err(crate::error::non_finite("hessian of the potential"));
        }
        if 1.0 + k <= floor {
            return Err(Error::SingularJacobian {
                eigenvalue: 1.0 + k,
                floor,
            });
        }
        logdet2 += k.ln_1p() - k;
    }
    let inv_diag = DVector::from_iterator(d, kappa.iter().map(|k| 1.0 / (1.0 + k)));
    let inverse = &vectors * DMatrix::from_diagonal(&inv_diag) * vectors.transpose();
    Ok(NodeState {
        grad_phi,
        inverse,
        logdet2,
    })
}

impl<'a> ForwardProblem<'a> {
    pub fn new(space: &'a GaussianSpace, target: &'a ScalarTarget, degree: usize, floor: f64) -> Result<Self> {
        if target.dim() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: target.dim(),
            });
        }
        let template = PotentialField::zero(space.dim(), degree)?;
        let scales = template
            .basis()
            .iter()
            .map(|a| (a.order() as f64 * a.factorial()).sqrt())
            .collect();
        Ok(Self {
            space,
            target,
            template,
            scales,
            floor,
        })
    }

    pub fn potential(&self, scaled: &DVector<f64>) -> Result<PotentialField> {
        let coeffs = scaled.iter().zip(&self.scales).map(|(u, s)| u / s).collect();
        self.template.with_coeffs(coeffs)
    }

    pub fn scaled(&self, phi: &PotentialField) -> DVector<f64> {
        DVector::from_iterator(
            self.scales.len(),
            phi.coeffs().iter().zip(&self.scales).map(|(c, s)| c * s),
        )
    }

    /// Objective, raw coefficient gradient and Hessian at `phi`.
    pub fn evaluate_potential(&self, phi: &PotentialField, order: Order) -> Result<Evaluation> {
        if phi.basis() != self.template.basis() {
            return Err(invalid("potential basis does not match the problem"));
        }
        let n = phi.coeffs().len();
        let d = self.space.dim();
        let len = match order {
            Order::Value => 1,
            Order::Gradient => 1 + n,
            Order::Hessian => 1 + n + n * n,
        };
        let coeffs = phi.coeffs();
        let sums = self.space.rule().accumulate(len, |x, w, out| {
            let jets = phi.basis_jets(x);
            let mut grad_phi = DVector::zeros(d);
            let mut hess_phi = DMatrix::zeros(d, d);
            for k in 0..n {
                if coeffs[k] != 0.0 {
                    grad_phi.axpy(coeffs[k], &jets.grads[k], 1.0);
                    hess_phi += coeffs[k] * &jets.hessians[k];
                }
            }
            let state = node_state(grad_phi, &hess_phi, self.floor)?;
            let t: Vec<f64> = x.iter().zip(state.grad_phi.iter()).map(|(a, b)| a + b).collect();
            if order == Order::Value {
                let value = self.target.value(&t) + 0.5 * state.grad_phi.norm_squared() - state.logdet2;
                out[0] += w * value;
                return Ok(());
            }
            let f = self.target.jet(&t);
            out[0] += w * (f.value + 0.5 * state.grad_phi.norm_squared() - state.logdet2);
            let pull = &state.grad_phi + &f.grad;
            let k_minus_i = &state.inverse - DMatrix::identity(d, d);
            for a in 0..n {
                let g = pull.dot(&jets.grads[a]) - k_minus_i.component_mul(&jets.hessians[a]).sum();
                out[1 + a] += w * g;
            }
            if order == Order::Hessian {
                let kh: Vec<DMatrix<f64>> = jets.hessians.iter().map(|h| &state.inverse * h).collect();
                let fg: Vec<DVector<f64>> = jets.grads.iter().map(|g| &f.hess * g).collect();
                for a in 0..n {
                    for b in a..n {
                        let trace = kh[a].component_mul(&kh[b].transpose()).sum();
                        let v = jets.grads[a].dot(&jets.grads[b]) + jets.grads[a].dot(&fg[b]) + trace;
                        out[1 + n + a * n + b] += w * v;
                    }
                }
            }
            Ok(())
        })?;
        let grad = (order != Order::Value).then(|| DVector::from_column_slice(&sums[1..1 + n]));
        let hess = (order == Order::Hessian).then(|| {
            let mut h = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    h[(a, b)] = sums[1 + n + a * n + b];
                    h[(b, a)] = h[(a, b)];
                }
            }
            h
        });
        Ok(Evaluation {
            value: sums[0],
            grad,
            hess,
        })
    }
}

impl Objective for ForwardProblem<'_> {
    fn len(&self) -> usize {
        self.scales.len()
    }

    fn evaluate(&self, u: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let phi = self.potential(u)?;
        let mut e = self.evaluate_potential(&phi, order)?;
        if let Some(g) = e.grad.as_mut() {
            g.iter_mut().zip(&self.scales).for_each(|(g, s)| *g /= s);
        }
        if let Some(h) = e.hess.as_mut() {
            for a in 0..self.scales.len() {
                for b in 0..self.scales.len() {
                    h[(a, b)] /= self.scales[a] * self.scales[b];
                }
            }
        }
        Ok(e)
    }
}

/// `J_f(∇φ)`.
pub fn objective(space: &GaussianSpace, target: &ScalarTarget, phi: &PotentialField) -> Result<f64> {
    let problem = ForwardProblem::new(space, target, phi.degree(), EIG_FLOOR)?;
    Ok(problem.evaluate_potential(phi, Order::Value)?.value)
}

/// `∂J/∂c_α = E[⟨∇φ + ∇f∘T, ∇He_α⟩ − tr((K − I)∇²He_α)]`.
pub fn objective_coefficient_gradient(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
) -> Result<DVector<f64>> {
    let problem = ForwardProblem::new(space, target, phi.degree(), EIG_FLOOR)?;
    Ok(problem
        .evaluate_potential(phi, Order::Gradient)?
        .grad
        .expect("gradient requested"))
}

/// `t ↦ J_f(t∇φ)` on the given grid of `t`.
pub fn objective_path(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
    ts: &[f64],
) -> Result<Vec<(f64, f64)>> {
    ts.iter()
        .map(|&t| {
            let scaled = phi.with_coeffs(phi.coeffs().iter().map(|c| t * c).collect())?;
            Ok((t, objective(space, target, &scaled)?))
        })
        .collect()
}

pub fn solve(space: &GaussianSpace, target: &ScalarTarget, config: &SolveConfig) -> Result<SolveResult> {
    config.validate()?;
    let entropy = relative_entropy(space, target)?;
    if !entropy.is_finite() {
        return Err(Error::NonIntegrableDensity("relative entropy is not finite".into()));
    }
    let problem = ForwardProblem::new(space, target, config.degree, config.eig_floor)?;
    let outcome = minimize(
        &problem,
        DVector::zeros(problem.len()),
        Options {
            method: config.optimizer,
            max_iters: config.max_iters,
            grad_tol: config.grad_tol,
        },
    )?;
    let phi = problem.potential(&outcome.x)?;
    let wasserstein2_sq = transport_cost(space, &phi)?;
    let variational_lhs = -space.target_measure(target)?.log_normalizer();
    Ok(SolveResult {
        phi,
        objective: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        grad_norm: outcome.grad_norm,
        wasserstein2_sq,
        variational_lhs,
        history: outcome.history,
    })
}

/// `E_μ|∇φ|²`.
pub fn transport_cost(space: &GaussianSpace, phi: &PotentialField) -> Result<f64> {
    space.rule().integrate(|x| Ok(phi.grad(x).norm_squared()))
}

/// `d₂(μ, ν)²` when it is known independently of the solver: closed form
/// for Gaussian and affine targets, the monotone rearrangement in 1D.
pub fn reference_wasserstein(target: &ScalarTarget) -> Result<Option<f64>> {
    match target.kind() {
        Some(TargetKind::Gaussian { mean, sigma }) => Ok(Some(
            mean.iter().map(|m| m * m).sum::<f64>() + sigma.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>(),
        )),
        // e^{−⟨s,x⟩} μ is N(−s, I)
        Some(TargetKind::Affine { slope, .. }) => Ok(Some(slope.iter().map(|s| s * s).sum())),
        _ if target.dim() == 1 => {
            let map = MonotoneMap::build(target, &OracleGrid::default())?;
            Ok(Some(map.wasserstein2_sq()))
        }
        _ => Ok(None),
    }
}

/// `(E_μ|∇φ|², reference d₂²)`.
pub fn wasserstein_check(
    space: &GaussianSpace,
    result: &SolveResult,
    target: &ScalarTarget,
) -> Result<(f64, Option<f64>)> {
    Ok((transport_cost(space, &result.phi)?, reference_wasserstein(target)?))
}

/// `J* − (−log E[e^{−f}])`, nonnegative up to quadrature error.
pub fn variational_gap(space: &GaussianSpace, target: &ScalarTarget, result: &SolveResult) -> Result<f64> {
    Ok(result.objective + space.target_measure(target)?.log_normalizer())
}

/// Mean and covariance of `T_#μ` by quadrature.
pub fn pushforward_moments(space: &GaussianSpace, phi: &PotentialField) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = space.dim();
    let sums = space.rule().accumulate(d + d * d, |x, w, out| {
        let t = DVector::from_column_slice(x) + phi.grad(x);
        for i in 0..d {
            out[i] += w * t[i];
            for j in 0..d {
                out[d + i * d + j] += w * t[i] * t[j];
            }
        }
        Ok(())
    })?;
    let mean = DVector::from_column_slice(&sums[..d]);
    let second = DMatrix::from_row_slice(d, d, &sums[d..]);
    Ok((mean.clone(), second - &mean * mean.transpose()))
}
