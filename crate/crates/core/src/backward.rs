//! Dual potentials: `ψ(y) = −min_x [φ(x) + ½|x − y|²]`, so that
//! `S = I + ∇ψ` inverts `T = I + ∇φ`, plus the backward functional
//! `J_b(ψ) = −E_ν[f] − E_ν[log Λ_ψ]` whose minimum is `log E_μ[e^{−f}]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{logdet2, shifted_eigenvalues, EIG_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{weighted_operator_divergence, GaussianSpace, ScalarTarget, TargetMeasure};
use crate::optimize::{minimize, Evaluation, Method, Objective, Options, Order};
use crate::potential::{PotentialField, ResolventField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Conjugacy,
    Variational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualPotential {
    pub psi: PotentialField,
    pub provenance: Provenance,
    /// Root-mean-square misfit of the basis fit (value, gradient and Hessian
    /// jointly) under `ν`; zero for variational duals.
    pub fit_residual: f64,
}

/// `ψ`, `∇ψ` and `∇²ψ` at one grid point, from the inner minimizer `x*`.
#[derive(Debug, Clone)]
pub struct ConjugatePoint {
    pub y: Vec<f64>,
    pub minimizer: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub converged: bool,
}

const INNER_TOL: f64 = 1e-12;
const INNER_ITERS: usize = 100;

/// Damped Newton on `x ↦ φ(x) + ½|x − y|²` from `start`.
fn inner_minimize(phi: &PotentialField, y: &[f64], start: DVector<f64>) -> (DVector<f64>, bool) {
    let d = y.len();
    let yv = DVector::from_column_slice(y);
    let h = |x: &DVector<f64>| phi.value(x.as_slice()) + 0.5 * (x - &yv).norm_squared();
    let mut x = start;
    let mut hx = h(&x);
    for _ in 0..INNER_ITERS {
        let jet = phi.jet(x.as_slice(), false);
        let g = &jet.grad + &x - &yv;
        if g.norm() <= INNER_TOL * yv.norm().max(1.0) {
            return (x, true);
        }
        let hess = DMatrix::identity(d, d) + &jet.hess;
        let eig = SymmetricEigen::new(hess);
        let coords = eig.eigenvectors.tr_mul(&g);
        let step = -(&eig.eigenvectors * DVector::from_fn(d, |i, _| coords[i] / eig.eigenvalues[i].abs().max(1e-8)));
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = &x + t * &step;
            let ht = h(&trial);
            if ht.is_finite() && ht <= hx + 1e-4 * t * step.dot(&g) {
                x = trial;
                hx = ht;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // no descent left at machine precision; accept if nearly stationary
            let g = phi.grad(x.as_slice()) + &x - &yv;
            return (x, g.norm() <= 1e-9 * yv.norm().max(1.0));
        }
    }
    let g = phi.grad(x.as_slice()) + &x - &yv;
    let ok = g.norm() <= 1e-9 * yv.norm().max(1.0);
    (x, ok)
}

/// The conjugate at each grid point, warm-starting each inner solve from
/// the previous point's minimizer. Points are split into fixed blocks that
/// run in parallel; within a block the warm start chains sequentially.
pub fn conjugate_on_grid(phi: &PotentialField, grid: &[Vec<f64>]) -> Result<Vec<ConjugatePoint>> {
    const BLOCK: usize = 256;
    let d = phi.dim();
    if let Some(bad) = grid.iter().find(|y| y.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let blocks: Vec<Vec<ConjugatePoint>> = grid
        .par_chunks(BLOCK)
        .map(|block| {
            let mut out = Vec::with_capacity(block.len());
            let mut warm: Option<DVector<f64>> = None;
            for y in block {
                let start = match &warm {
                    Some(w) => w.clone(),
                    // S(y) ≈ y − ∇φ(y) to first order
                    None => DVector::from_column_slice(y) - phi.grad(y),
                };
                let (mut x, mut ok) = inner_minimize(phi, y, start);
                if !ok {
                    let (x2, ok2) = inner_minimize(phi, y, DVector::from_column_slice(y));
                    x = x2;
                    ok = ok2;
                }
                let jet = phi.jet(x.as_slice(), false);
                let yv = DVector::from_column_slice(y);
                let value = -(jet.value + 0.5 * (&x - &yv).norm_squared());
                let k = (DMatrix::identity(d, d) + &jet.hess)
                    .try_inverse()
                    .unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
                let hess = k - DMatrix::identity(d, d);
                out.push(ConjugatePoint {
                    y: y.clone(),
                    grad: &x - &yv,
                    minimizer: x.clone(),
                    value,
                    hess,
                    converged: ok,
                });
                if ok {
                    warm = Some(x);
                }
            }
            out
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// `ψ` by conjugacy at the `ν`-quadrature nodes, then fit to the Hermite
/// basis of the given degree (plus a constant) by least squares on values,
/// gradients and Hessians weighted by `ν`.
pub fn conjugate(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
    degree: usize,
) -> Result<DualPotential> {
    let nu = space.target_measure(target)?;
    let rule = nu.rule();
    let grid: Vec<Vec<f64>> = rule.nodes().map(|y| y.to_vec()).collect();
    let points = conjugate_on_grid(phi, &grid)?;
    let failed = points
        .iter()
        .zip(rule.weights())
        .filter(|(p, w)| !p.converged && **w > 1e-14)
        .count();
    if failed > 0 {
        return Err(Error::NonConvergent {
            failed,
            total: points.len(),
        });
    }
    let template = PotentialField::zero(space.dim(), degree)?;
    let (psi, fit_residual) = fit_sobolev(&template, &points, rule.weights())?;
    Ok(DualPotential {
        psi,
        provenance: Provenance::Conjugacy,
        fit_residual,
    })
}

/// Weighted least squares for `(constant, c_α)` matching `ψ`, `∇ψ`, `∇²ψ`.
fn fit_sobolev(template: &PotentialField, points: &[ConjugatePoint], weights: &[f64]) -> Result<(PotentialField, f64)> {
    let n = template.basis().len() + 1;
    let d = template.dim();
    // rows of the design matrix scaled by sqrt(weight), in node order
    let mut design: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut total_weight = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        if w <= 0.0 || !p.converged {
            continue;
        }
        total_weight += w;
        let sw = w.sqrt();
        let jets = template.basis_jets(&p.y);
        design.push(sw);
        design.extend(jets.values.iter().map(|v| sw * v));
        rhs.push(sw * p.value);
        for i in 0..d {
            design.push(0.0);
            design.extend(jets.grads.iter().map(|g| sw * g[i]));
            rhs.push(sw * p.grad[i]);
            for j in i..d {
                design.push(0.0);
                design.extend(jets.hessians.iter().map(|h| sw * h[(i, j)]));
                rhs.push(sw * p.hess[(i, j)]);
            }
        }
    }
    if total_weight <= 0.0 {
        return Err(invalid("no usable points for the dual fit"));
    }
    let a = DMatrix::from_row_slice(rhs.len(), n, &design);
    let b = DVector::from_vec(rhs);
    let solution = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| invalid(format!("dual fit failed: {e}")))?;
    let psi = template
        .with_coeffs(solution.iter().skip(1).copied().collect())?
        .with_constant(solution[0]);
    // misfit
    let mut misfit = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        if w <= 0.0 || !p.converged {
            continue;
        }
        let jet = psi.jet(&p.y, false);
        let e =
            (jet.value - p.value).powi(2) + (&jet.grad - &p.grad).norm_squared() + (&jet.hess - &p.hess).norm_squared();
        misfit += w * e;
    }
    Ok((psi, (misfit / total_weight).sqrt()))
}

/// The closed-form dual of the Gaussian map `∇φ = (σ − 1)x + m`:
/// `∇ψ(y) = (y − m)/σ − y`, with the constant making `E_ν[ψ] = −½ d₂²`.
pub fn gaussian_dual(mean: &[f64], sigma: &[f64], degree: usize) -> Result<DualPotential> {
    let dim = mean.len();
    let mut terms = Vec::new();
    let mut constant = 0.0;
    for i in 0..dim {
        let (m, s) = (mean[i], sigma[i]);
        // ψ_i(y) = (1/σ − 1)(y² − 1)/2 − m y/σ + κ_i  (He basis)
        terms.push((crate::hermite::MultiIndex::unit(dim, i, 1), -m / s));
        if degree >= 2 {
            terms.push((crate::hermite::MultiIndex::unit(dim, i, 2), 0.5 * (1.0 / s - 1.0)));
        } else if s != 1.0 {
            return Err(invalid("a non-unit scale needs degree at least 2"));
        }
        // E_ν over y ~ N(m, s²): He_2 mean is m² + s² − 1, He_1 mean is m
        let mean_without_constant = 0.5 * (1.0 / s - 1.0) * (m * m + s * s - 1.0) - m * m / s;
        constant += -0.5 * (m * m + (s - 1.0).powi(2)) - mean_without_constant;
    }
    let psi = PotentialField::from_terms(dim, degree, &terms)?.with_constant(constant);
    Ok(DualPotential {
        psi,
        provenance: Provenance::Conjugacy,
        fit_residual: 0.0,
    })
}

/// `E_ν|T(S(y)) − y|²`, weighted by the target so polynomial blow-up of
/// either map far in the Gaussian tails is suppressed.
pub fn inverse_check(
    space: &GaussianSpace,
    target: &ScalarTarget,
    phi: &PotentialField,
    dual: &DualPotential,
) -> Result<f64> {
    let nu = space.target_measure(target)?;
    nu.expect(|y| {
        let s = DVector::from_column_slice(y) + dual.psi.grad(y);
        let t = &s + phi.grad(s.as_slice());
        Ok((t - DVector::from_column_slice(y)).norm_squared())
    })
}

/// `F(x, y) = φ(x) + ψ(y) + ½|x − y|²`.
pub fn young_gap(phi: &PotentialField, dual: &DualPotential, x: &[f64], y: &[f64]) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    phi.value(x) + dual.psi.value(y) + 0.5 * sq
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct YoungSummary {
    /// `min F` over independent probe pairs `(x, T(x'))`, `x, x' ~ μ`.
    pub min_pair: f64,
    /// `max |F(x, T(x))|` over the same `x` probes.
    pub max_graph: f64,
    pub pairs: usize,
}

/// Probes the Young inequality on `pairs` seeded pairs.
pub fn young_check(phi: &PotentialField, dual: &DualPotential, pairs: usize, seed: u64) -> YoungSummary {
    let d = phi.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs).map(|_| (draw(), draw())).collect();
    let results: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|(x, x2)| {
            let t2: Vec<f64> = x2.iter().zip(phi.grad(x2).iter()).map(|(a, b)| a + b).collect();
            let tx: Vec<f64> = x.iter().zip(phi.grad(x).iter()).map(|(a, b)| a + b).collect();
            (young_gap(phi, dual, x, &t2), young_gap(phi, dual, x, &tx).abs())
        })
        .collect();
    YoungSummary {
        min_pair: results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        max_graph: results.iter().map(|r| r.1).fold(0.0, f64::max),
        pairs,
    }
}

/// `E_ν|δ_ν((I + ∇²ψ)⁻¹ − I) − ∇ψ + ∇f|²`, which vanishes at the true dual.
pub fn backward_el_residual(space: &GaussianSpace, target: &ScalarTarget, dual: &DualPotential) -> Result<f64> {
    let nu = space.target_measure(target)?;
    backward_el_residual_with(&nu, target, &dual.psi)
}

pub(crate) fn backward_el_residual_with(
    nu: &TargetMeasure,
    target: &ScalarTarget,
    psi: &PotentialField,
) -> Result<f64> {
    let op = ResolventField(psi);
    nu.expect(|y| {
        shifted_eigenvalues(&psi.hess(y), EIG_FLOOR)?;
        let div = weighted_operator_divergence(target, &op, y)?;
        Ok((div - psi.grad(y) + target.grad(y)).norm_squared())
    })
}

/// `J_b(ψ) = −E_ν[f] − E_ν[log Λ_ψ]`, `log Λ_ψ = log det₂(I + ∇²ψ) − Lψ − ½|∇ψ|²`.
pub fn backward_objective(space: &GaussianSpace, target: &ScalarTarget, dual: &DualPotential) -> Result<f64> {
    let nu = space.target_measure(target)?;
    let psi = &dual.psi;
    nu.expect(|y| {
        let jet = psi.jet(y, false);
        let log_lambda = logdet2(&jet.hess)? - psi.ou_generator(y) - 0.5 * jet.grad.norm_squared();
        Ok(-target.value(y) - log_lambda)
    })
}

/// `−log ν(e^f) = log E_μ[e^{−f}]`, the infimum of `J_b`.
pub fn backward_lower_bound(space: &GaussianSpace, target: &ScalarTarget) -> Result<f64> {
    Ok(space.target_measure(target)?.log_normalizer())
}

struct BackwardProblem<'a> {
    nu: TargetMeasure,
    target: &'a ScalarTarget,
    template: PotentialField,
    scales: Vec<f64>,
    floor: f64,
}

impl BackwardProblem<'_> {
    fn potential(&self, u: &DVector<f64>) -> Result<PotentialField> {
        self.template
            .with_coeffs(u.iter().zip(&self.scales).map(|(u, s)| u / s).collect())
    }
}

impl Objective for BackwardProblem<'_> {
    fn len(&self) -> usize {
        self.scales.len()
    }

    fn evaluate(&self, u: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let psi = self.potential(u)?;
        let n = self.scales.len();
        let d = psi.dim();
        let len = match order {
            Order::Value => 1,
            Order::Gradient => 1 + n,
            Order::Hessian => 1 + n + n * n,
        };
        let coeffs = psi.coeffs();
        let orders: Vec<f64> = psi.basis().iter().map(|a| a.order() as f64).collect();
        let sums = self.nu.rule().accumulate(len, |y, w, out| {
            let jets = psi.basis_jets(y);
            let mut grad = DVector::zeros(d);
            let mut hess = DMatrix::zeros(d, d);
            let mut lpsi = 0.0;
            for k in 0..n {
                grad.axpy(coeffs[k], &jets.grads[k], 1.0);
                hess += coeffs[k] * &jets.hessians[k];
                lpsi += coeffs[k] * orders[k] * jets.values[k];
            }
            let kappa = shifted_eigenvalues(&hess, self.floor)?;
            let ld: f64 = kappa.iter().map(|k| k.ln_1p() - k).sum();
            out[0] += w * (-self.target.value(y) - ld + lpsi + 0.5 * grad.norm_squared());
            if order == Order::Value {
                return Ok(());
            }
            let inv = (DMatrix::identity(d, d) + &hess)
                .try_inverse()
                .ok_or(Error::SingularJacobian {
                    eigenvalue: 0.0,
                    floor: self.floor,
                })?;
            let k_minus_i = &inv - DMatrix::identity(d, d);
            for a in 0..n {
                let g = -k_minus_i.component_mul(&jets.hessians[a]).sum()
                    + orders[a] * jets.values[a]
                    + grad.dot(&jets.grads[a]);
                out[1 + a] += w * g;
            }
            if order == Order::Hessian {
                let kh: Vec<DMatrix<f64>> = jets.hessians.iter().map(|h| &inv * h).collect();
                for a in 0..n {
                    for b in a..n {
                        let v = kh[a].component_mul(&kh[b].transpose()).sum() + jets.grads[a].dot(&jets.grads[b]);
                        out[1 + n + a * n + b] += w * v;
                    }
                }
            }
            Ok(())
        })?;
        let grad =
            (order != Order::Value).then(|| DVector::from_iterator(n, (0..n).map(|a| sums[1 + a] / self.scales[a])));
        let hess = (order == Order::Hessian).then(|| {
            let mut h = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    h[(a, b)] = sums[1 + n + a * n + b] / (self.scales[a] * self.scales[b]);
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

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalDual {
    pub dual: DualPotential,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Minimizes `J_b` over the Hermite basis of the given degree. The additive
/// constant, invisible to `J_b`, is set so that `E_ν[ψ] = −½ E_ν|∇ψ|²`.
pub fn solve_variational(
    space: &GaussianSpace,
    target: &ScalarTarget,
    degree: usize,
    method: Method,
    max_iters: usize,
    grad_tol: f64,
) -> Result<VariationalDual> {
    let nu = space.target_measure(target)?;
    let template = PotentialField::zero(space.dim(), degree)?;
    let scales = template
        .basis()
        .iter()
        .map(|a| (a.order() as f64 * a.factorial()).sqrt())
        .collect();
    let problem = BackwardProblem {
        nu,
        target,
        template,
        scales,
        floor: EIG_FLOOR,
    };
    let outcome = minimize(
        &problem,
        DVector::zeros(problem.len()),
        Options {
            method,
            max_iters,
            grad_tol,
        },
    )?;
    let psi = problem.potential(&outcome.x)?;
    let mean_psi = problem.nu.expect(|y| Ok(psi.value(y)))?;
    let cost = problem.nu.expect(|y| Ok(psi.grad(y).norm_squared()))?;
    let psi = psi.with_constant(-0.5 * cost - mean_psi);
    Ok(VariationalDual {
        dual: DualPotential {
            psi,
            provenance: Provenance::Variational,
            fit_residual: 0.0,
        },
        objective: outcome.value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        grad_norm: outcome.grad_norm,
    })
}

/// `E_ν|∇ψ|²`, which equals `E_μ|∇φ|² = d₂²` for a matched pair.
pub fn dual_transport_cost(space: &GaussianSpace, target: &ScalarTarget, dual: &DualPotential) -> Result<f64> {
    space
        .target_measure(target)?
        .expect(|y| Ok(dual.psi.grad(y).norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::MultiIndex;

    #[test]
    fn conjugate_of_gaussian_map() {
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let phi = PotentialField::gaussian_map(&[1.0], &[2.0], 2).unwrap();
        let dual = conjugate(&space, &target, &phi, 2).unwrap();
        let exact = gaussian_dual(&[1.0], &[2.0], 2).unwrap();
        for y in [-3.0, 0.0, 1.0, 4.5] {
            assert!((dual.psi.grad(&[y])[0] - ((y - 1.0) / 2.0 - y)).abs() < 1e-9);
            assert!((dual.psi.value(&[y]) - exact.psi.value(&[y])).abs() < 1e-9);
        }
        assert!(inverse_check(&space, &target, &phi, &exact).unwrap() < 1e-20);
        assert!(backward_el_residual(&space, &target, &exact).unwrap() < 1e-20);
        assert!(backward_objective(&space, &target, &exact).unwrap().abs() < 1e-10);
        let y = young_check(&phi, &exact, 2000, 1);
        assert!(y.min_pair >= -1e-12 && y.max_graph < 1e-12);
        let cost = dual_transport_cost(&space, &target, &exact).unwrap();
        assert!((cost - 2.0).abs() < 1e-10);
    }

    #[test]
    fn mean_shift_dual() {
        let space = GaussianSpace::tensor_hermite(2, 10).unwrap();
        let m = [0.4, -0.9];
        let target = ScalarTarget::new(
            2,
            crate::gaussian::TargetKind::Gaussian {
                mean: m.to_vec(),
                sigma: vec![1.0, 1.0],
            },
        )
        .unwrap();
        let phi = PotentialField::gaussian_map(&m, &[1.0, 1.0], 1).unwrap();
        let dual = conjugate(&space, &target, &phi, 1).unwrap();
        // ψ(y) = −⟨m, y⟩ + ½|m|²
        let y = [0.3, 1.1];
        let expected = -(m[0] * y[0] + m[1] * y[1]) + 0.5 * (m[0] * m[0] + m[1] * m[1]);
        assert!((dual.psi.value(&y) - expected).abs() < 1e-10);
    }

    #[test]
    fn perturbed_dual_has_positive_residual() {
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let exact = gaussian_dual(&[1.0], &[2.0], 3).unwrap();
        let k = exact.psi.index_of(&MultiIndex(vec![2])).unwrap();
        let mut coeffs = exact.psi.coeffs().to_vec();
        coeffs[k] += 0.1;
        let perturbed = DualPotential {
            psi: exact.psi.with_coeffs(coeffs).unwrap(),
            ..exact.clone()
        };
        assert!(backward_el_residual(&space, &target, &perturbed).unwrap() > 1e-3);
        let zero = DualPotential {
            psi: PotentialField::zero(1, 3).unwrap(),
            ..exact
        };
        let bound = backward_lower_bound(&space, &target).unwrap();
        assert!(backward_objective(&space, &target, &zero).unwrap() > bound + 1e-3);
    }

    #[test]
    fn variational_dual_matches_closed_form() {
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let v = solve_variational(&space, &target, 2, Method::Newton, 100, 1e-10).unwrap();
        assert!(v.converged);
        let exact = gaussian_dual(&[1.0], &[2.0], 2).unwrap();
        for y in [-2.0, 0.5, 3.0] {
            assert!((v.dual.psi.value(&[y]) - exact.psi.value(&[y])).abs() < 1e-7);
        }
        assert!(v.objective.abs() < 1e-10);
    }
}
