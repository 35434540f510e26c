//! The standard Gaussian reference measure on `R^d`: quadrature,
//! expectations, the Ornstein-Uhlenbeck semigroup and the divergence
//! operators adjoint to the gradient.
//!
//! Conventions: the Cameron-Martin norm is the Euclidean norm, Jacobians are
//! laid out as `(∇ξ)_ij = ∂_i ξ_j`, and every expectation under a target
//! `dν = c⁻¹ e^{-f} dμ` is a self-normalized μ-expectation with weight
//! `e^{-f}`.

mod divergence;
pub mod quadrature;
mod semigroup;
mod target;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use divergence::{
    divergence, operator_divergence, weighted_divergence, weighted_operator_divergence, AffineField, ConstantField,
    ConstantOperator, FnField, OperatorField, VectorField,
};
pub use quadrature::{gauss_hermite, pairwise_sum, QuadratureRule};
pub use semigroup::{condition_first_n, ou_semigroup};
pub use target::{MixtureComponent, ScalarTarget, TargetFunction, TargetJet, TargetKind};

/// Largest tensor rule we are willing to build.
pub const MAX_TENSOR_NODES: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadraturePolicy {
    TensorHermite { level: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadraturePolicy {
    pub fn describe(&self, dim: usize) -> String {
        match self {
            QuadraturePolicy::TensorHermite { level } => format!(
                "tensor Gauss-Hermite, level {level}, dimension {dim}, {} nodes",
                level.pow(dim as u32)
            ),
            QuadraturePolicy::MonteCarlo { samples, seed } => {
                format!("Monte Carlo, {samples} samples, seed {seed}, dimension {dim}")
            }
        }
    }
}

/// `R^d` with the standard Gaussian `μ` and a fixed quadrature rule.
#[derive(Debug, Clone)]
pub struct GaussianSpace {
    dim: usize,
    policy: QuadraturePolicy,
    rule: QuadratureRule,
}

impl GaussianSpace {
    pub fn new(dim: usize, policy: QuadraturePolicy) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let rule = match policy {
            QuadraturePolicy::TensorHermite { level } => {
                if level == 0 {
                    return Err(invalid("tensor-hermite level must be at least 1"));
                }
                if dim > 4 {
                    return Err(invalid(format!("tensor-hermite is limited to dimension 4, got {dim}")));
                }
                let count = (level as f64).powi(dim as i32);
                if count > MAX_TENSOR_NODES as f64 {
                    return Err(invalid(format!(
                        "tensor rule with {count} nodes exceeds {MAX_TENSOR_NODES}"
                    )));
                }
                quadrature::tensor_hermite(dim, level)
            }
            QuadraturePolicy::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(invalid("monte-carlo sample count must be positive"));
                }
                quadrature::monte_carlo(dim, samples, seed)
            }
        };
        Ok(Self { dim, policy, rule })
    }

    pub fn tensor_hermite(dim: usize, level: usize) -> Result<Self> {
        Self::new(dim, QuadraturePolicy::TensorHermite { level })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn policy(&self) -> QuadraturePolicy {
        self.policy
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn describe(&self) -> String {
        self.policy.describe(self.dim)
    }

    /// Polynomial degree integrated exactly, if any.
    pub fn exact_degree(&self) -> Option<usize> {
        match self.policy {
            QuadraturePolicy::TensorHermite { level } => Some(2 * level - 1),
            QuadraturePolicy::MonteCarlo { .. } => None,
        }
    }

    /// `E_μ[g]`, or `E_μ[g ω] / E_μ[ω]` when a weight `ω` is given.
    pub fn expectation<G>(&self, g: G, weight: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>) -> Result<f64>
    where
        G: Fn(&[f64]) -> f64 + Sync,
    {
        match weight {
            None => self.rule.integrate(|x| Ok(g(x))),
            Some(weight) => {
                let omega = self.rule.evaluate(&|x: &[f64]| Ok(weight(x)))?;
                if let Some(i) = omega.iter().position(|w| *w < 0.0) {
                    return Err(invalid(format!("weight is negative at node {i}")));
                }
                let values = self.rule.evaluate(&|x: &[f64]| Ok(g(x)))?;
                let num: Vec<f64> = values
                    .iter()
                    .zip(&omega)
                    .zip(self.rule.weights())
                    .map(|((v, o), w)| v * o * w)
                    .collect();
                let den: Vec<f64> = omega.iter().zip(self.rule.weights()).map(|(o, w)| o * w).collect();
                let normalizer = pairwise_sum(&den);
                if normalizer < 1e-300 {
                    return Err(Error::DegenerateWeight { normalizer });
                }
                Ok(pairwise_sum(&num) / normalizer)
            }
        }
    }

    /// The self-normalized rule for `ν = c⁻¹ e^{-f} μ`.
    pub fn target_measure(&self, target: &ScalarTarget) -> Result<TargetMeasure> {
        if target.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: target.dim(),
            });
        }
        let (rule, log_normalizer) = self.rule.reweighted(|x| -target.value(x))?;
        Ok(TargetMeasure { rule, log_normalizer })
    }
}

/// Quadrature for `ν`: μ-nodes with weights `w_i e^{-f(x_i)} / c`.
#[derive(Debug, Clone)]
pub struct TargetMeasure {
    rule: QuadratureRule,
    log_normalizer: f64,
}

impl TargetMeasure {
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `log c = log E_μ[e^{-f}]`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn expect<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(&[f64]) -> Result<f64> + Sync,
    {
        self.rule.integrate(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let s1 = GaussianSpace::tensor_hermite(1, 5).unwrap();
        assert!((s1.expectation(|x| x[0] * x[0], None).unwrap() - 1.0).abs() < 1e-14);
        // exact from level 3 on
        for level in 3..8 {
            let s = GaussianSpace::tensor_hermite(1, level).unwrap();
            assert!((s.expectation(|x| x[0].powi(4), None).unwrap() - 3.0).abs() < 1e-13);
        }
        let s2 = GaussianSpace::tensor_hermite(2, 4).unwrap();
        assert!(s2.expectation(|x| x[0] * x[1], None).unwrap().abs() < 1e-15);
    }

    #[test]
    fn weighted_expectation_and_errors() {
        let s = GaussianSpace::tensor_hermite(1, 20).unwrap();
        // weight e^{x}: tilted measure N(1, 1), mean 1
        let w2 = |x: &[f64]| x[0].exp();
        let m = s.expectation(|x| x[0], Some(&w2)).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let zero = |_: &[f64]| 0.0;
        assert!(matches!(
            s.expectation(|x| x[0], Some(&zero)),
            Err(Error::DegenerateWeight { .. })
        ));
        let s_odd = GaussianSpace::tensor_hermite(1, 3).unwrap();
        assert!(matches!(
            s_odd.expectation(|x| 1.0 / x[0], None),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn policy_validation() {
        assert!(GaussianSpace::tensor_hermite(0, 3).is_err());
        assert!(GaussianSpace::tensor_hermite(5, 3).is_err());
        assert!(GaussianSpace::tensor_hermite(4, 60).is_err());
        assert!(GaussianSpace::tensor_hermite(4, 50).is_ok());
        assert!(GaussianSpace::new(6, QuadraturePolicy::MonteCarlo { samples: 0, seed: 1 }).is_err());
        let mc = GaussianSpace::new(6, QuadraturePolicy::MonteCarlo { samples: 500, seed: 9 }).unwrap();
        assert_eq!(mc.rule().len(), 500);
        assert!(mc.exact_degree().is_none());
    }
}
