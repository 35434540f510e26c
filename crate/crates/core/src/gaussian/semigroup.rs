//! Ornstein-Uhlenbeck semigroup (Mehler form) and conditioning on the
//! leading coordinates, both realized with quadrature in the inner variable.

use crate::error::{invalid, non_finite, Result};

use super::quadrature::{monte_carlo, tensor_hermite, QuadratureRule};
use super::{GaussianSpace, QuadraturePolicy};

/// `P_t g(x) = E[g(e^{-t} x + sqrt(1 - e^{-2t}) Y)]`, `Y ~ μ`, with the
/// space's own rule as the inner rule. `P_0 g = g` exactly.
pub fn ou_semigroup<'a, G>(space: &'a GaussianSpace, g: G, t: f64) -> Result<impl Fn(&[f64]) -> Result<f64> + Sync + 'a>
where
    G: Fn(&[f64]) -> f64 + Sync + 'a,
{
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!(
            "semigroup time must be finite and nonnegative, got {t}"
        )));
    }
    let decay = (-t).exp();
    let spread = (-(-2.0 * t).exp_m1()).sqrt();
    Ok(move |x: &[f64]| -> Result<f64> {
        if t == 0.0 {
            let v = g(x);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(non_finite("semigroup integrand"))
            };
        }
        let rule = space.rule();
        let mut point = vec![0.0; x.len()];
        let values: Vec<f64> = rule
            .nodes()
            .map(|y| {
                for k in 0..x.len() {
                    point[k] = decay * x[k] + spread * y[k];
                }
                g(&point)
            })
            .collect();
        weighted_sum(rule, &values, "semigroup integrand")
    })
}

/// `E[g | x_1..x_n]`: the trailing `d - n` coordinates are integrated out
/// against a rule of the same kind as the space's. `n = d` returns `g`.
pub fn condition_first_n<'a, G>(
    space: &GaussianSpace,
    g: G,
    n: usize,
) -> Result<impl Fn(&[f64]) -> Result<f64> + Sync + 'a>
where
    G: Fn(&[f64]) -> f64 + Sync + 'a,
{
    let d = space.dim();
    if n > d {
        return Err(invalid(format!("cannot condition on {n} of {d} coordinates")));
    }
    let inner = if n == d {
        None
    } else {
        Some(match space.policy() {
            QuadraturePolicy::TensorHermite { level } => tensor_hermite(d - n, level),
            QuadraturePolicy::MonteCarlo { samples, seed } => monte_carlo(d - n, samples, seed),
        })
    };
    Ok(move |x: &[f64]| -> Result<f64> {
        let Some(rule) = &inner else {
            let v = g(x);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(non_finite("conditioned integrand"))
            };
        };
        let mut point = x.to_vec();
        let values: Vec<f64> = rule
            .nodes()
            .map(|z| {
                point[n..].copy_from_slice(z);
                g(&point)
            })
            .collect();
        weighted_sum(rule, &values, "conditioned integrand")
    })
}

fn weighted_sum(rule: &QuadratureRule, values: &[f64], context: &str) -> Result<f64> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(non_finite(context));
    }
    let terms: Vec<f64> = values.iter().zip(rule.weights()).map(|(v, w)| v * w).collect();
    Ok(super::pairwise_sum(&terms))
}
