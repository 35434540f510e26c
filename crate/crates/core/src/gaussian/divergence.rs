//! Gaussian divergence `δ`, the adjoint of `∇` under `μ`, and its
//! `ν`-weighted version. All operators act pointwise on fields that expose
//! their first derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{non_finite, Error, Result};

use super::ScalarTarget;

/// A vector field `ξ: R^d → R^d` with Jacobian `(∇ξ)_ij = ∂_i ξ_j`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// A matrix field `M: R^d → R^{d×d}` with its coordinate partials
/// `partials[i] = ∂_i M`.
pub trait OperatorField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> DMatrix<f64>;
    fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>>;
}

/// `ξ ≡ h`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub DVector<f64>);

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, _x: &[f64]) -> DVector<f64> {
        self.0.clone()
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.0.len(), self.0.len())
    }
}

/// `ξ(x) = A x + b`, so `∇ξ = Aᵀ`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x) + &self.offset
    }
    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.matrix.transpose()
    }
}

/// A field given by a pair of closures.
pub struct FnField<V, J> {
    pub dim: usize,
    pub value: V,
    pub jacobian: J,
}

impl<V, J> VectorField for FnField<V, J>
where
    V: Fn(&[f64]) -> DVector<f64> + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        (self.value)(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x)
    }
}

/// `M ≡ A`.
#[derive(Debug, Clone)]
pub struct ConstantOperator(pub DMatrix<f64>);

impl OperatorField for ConstantOperator {
    fn dim(&self) -> usize {
        self.0.ncols()
    }
    fn value(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
    fn partials(&self, _x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.0.nrows(), self.0.ncols()); self.0.ncols()]
    }
}

/// `δξ(x) = ⟨x, ξ(x)⟩ − tr ∇ξ(x)`.
pub fn divergence(xi: &dyn VectorField, x: &[f64]) -> Result<f64> {
    check_dim(xi.dim(), x.len())?;
    let v = xi.value(x);
    let jac = xi.jacobian(x);
    let out = DVector::from_column_slice(x).dot(&v) - jac.trace();
    finite(out, "divergence")
}

/// `δ_ν ξ = δξ + ⟨∇f, ξ⟩`.
pub fn weighted_divergence(target: &ScalarTarget, xi: &dyn VectorField, x: &[f64]) -> Result<f64> {
    check_dim(xi.dim(), x.len())?;
    check_dim(target.dim(), x.len())?;
    let v = xi.value(x);
    let out = divergence(xi, x)? + target.grad(x).dot(&v);
    finite(out, "weighted divergence")
}

/// `(δM)_j = Σ_i [M_ij x_i − ∂_i M_ij]`.
pub fn operator_divergence(m: &dyn OperatorField, x: &[f64]) -> Result<DVector<f64>> {
    let d = x.len();
    let value = m.value(x);
    if value.nrows() != d || value.ncols() != d {
        return Err(Error::NonSquare {
            rows: value.nrows(),
            cols: value.ncols(),
            dim: d,
        });
    }
    let partials = m.partials(x);
    if partials.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: partials.len(),
        });
    }
    let mut out = value.tr_mul(&DVector::from_column_slice(x));
    for (i, p) in partials.iter().enumerate() {
        for j in 0..d {
            out[j] -= p[(i, j)];
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("operator divergence"));
    }
    Ok(out)
}

/// `(δ_ν M)_j = (δM)_j + Σ_i M_ij ∂_i f`.
pub fn weighted_operator_divergence(target: &ScalarTarget, m: &dyn OperatorField, x: &[f64]) -> Result<DVector<f64>> {
    check_dim(target.dim(), x.len())?;
    let base = operator_divergence(m, x)?;
    let out = base + m.value(x).tr_mul(&target.grad(x));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("weighted operator divergence"));
    }
    Ok(out)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn finite(v: f64, context: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(non_finite(context))
    }
}
