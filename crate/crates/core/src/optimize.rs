//! Small unconstrained minimizers with a feasibility-aware backtracking line
//! search. Trial points where the objective reports a singular Jacobian or a
//! non-finite value are treated as outside the domain and the step shrinks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradientDescent,
    QuasiNewton,
    #[default]
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Option<DVector<f64>>,
    pub hess: Option<DMatrix<f64>>,
}

pub trait Objective {
    fn len(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>, order: Order) -> Result<Evaluation>;
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub method: Method,
    pub max_iters: usize,
    pub grad_tol: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const VALUE_NOISE: f64 = 1e-12;

fn is_infeasible(e: &Error) -> bool {
    matches!(e, Error::SingularJacobian { .. } | Error::NonFiniteValue { .. })
}

pub fn minimize(obj: &dyn Objective, x0: DVector<f64>, opts: Options) -> Result<Outcome> {
    let need_hess = opts.method == Method::Newton;
    let order = if need_hess { Order::Hessian } else { Order::Gradient };
    let mut x = x0;
    let mut cur = obj.evaluate(&x, order)?;
    let mut grad = cur.grad.take().expect("gradient requested");
    let mut history = vec![cur.value];
    let mut inv_hess = DMatrix::<f64>::identity(obj.len(), obj.len());
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let gnorm = grad.norm();
        if gnorm <= opts.grad_tol {
            break;
        }
        let direction = match opts.method {
            Method::GradientDescent => -&grad,
            Method::QuasiNewton => {
                let p = -(&inv_hess * &grad);
                if p.dot(&grad) < 0.0 {
                    p
                } else {
                    inv_hess.fill_with_identity();
                    -&grad
                }
            }
            Method::Newton => newton_direction(cur.hess.as_ref().expect("hessian requested"), &grad),
        };
        let slope = direction.dot(&grad);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + t * &direction;
            match obj.evaluate(&trial, Order::Gradient) {
                Ok(eval) => {
                    let g_new = eval.grad.as_ref().expect("gradient requested");
                    let armijo = eval.value <= cur.value + ARMIJO * t * slope;
                    // near the optimum J is flat to roundoff and only the gradient still informs
                    let flat = eval.value <= cur.value + VALUE_NOISE * (1.0 + cur.value.abs()) && g_new.norm() < gnorm;
                    if armijo || flat {
                        accepted = Some((trial, eval));
                        break;
                    }
                }
                Err(e) if is_infeasible(&e) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some((x_new, eval)) = accepted else {
            break;
        };
        iterations += 1;
        let g_new = eval.grad.clone().expect("gradient requested");
        if opts.method == Method::QuasiNewton {
            let s = &x_new - &x;
            let y = &g_new - &grad;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let n = obj.len();
                let left = DMatrix::identity(n, n) - rho * &s * y.transpose();
                let right = DMatrix::identity(n, n) - rho * &y * s.transpose();
                inv_hess = &left * &inv_hess * &right + rho * &s * s.transpose();
            } else {
                inv_hess.fill_with_identity();
            }
        }
        x = x_new;
        cur = if need_hess {
            obj.evaluate(&x, Order::Hessian)?
        } else {
            eval
        };
        grad = cur.grad.take().unwrap_or(g_new);
        history.push(cur.value);
    }

    let grad_norm = grad.norm();
    Ok(Outcome {
        x,
        value: cur.value,
        grad_norm,
        iterations,
        converged: grad_norm <= opts.grad_tol,
        history,
    })
}

/// Newton step with the Hessian's eigenvalues replaced by their absolute
/// values (bounded away from zero), which keeps it a descent direction.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(0.5 * (hess + hess.transpose()));
    let top = eig.eigenvalues.amax().max(1e-300);
    let floor = (1e-10 * top).max(1e-14);
    let coords = eig.eigenvectors.tr_mul(grad);
    let scaled = DVector::from_fn(coords.len(), |i, _| coords[i] / eig.eigenvalues[i].abs().max(floor));
    -(&eig.eigenvectors * scaled)
}
