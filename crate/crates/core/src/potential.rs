//! Potentials expanded in tensor Hermite polynomials, and the transport
//! shifts `x ↦ x + ∇φ(x)` they generate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{OperatorField, VectorField};
use crate::hermite::{hermite_derivative, hermite_values, multi_indices, MultiIndex};

/// `φ(x) = constant + Σ_{1 ≤ |α| ≤ p} c_α He_α(x)`.
///
/// The constant is zero for forward potentials (pinned by the Gaussian mean
/// of the Hermite basis); dual potentials carry one.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    dim: usize,
    degree: usize,
    basis: Vec<MultiIndex>,
    coeffs: Vec<f64>,
    constant: f64,
}

/// Derivatives of a potential at one point. `third[i] = ∂_i ∇²φ`.
#[derive(Debug, Clone)]
pub struct PotentialJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub third: Option<Vec<DMatrix<f64>>>,
}

/// Derivatives of the basis polynomials `He_α` at one point, in basis order.
#[derive(Debug, Clone)]
pub struct BasisJets {
    pub values: Vec<f64>,
    pub grads: Vec<DVector<f64>>,
    pub hessians: Vec<DMatrix<f64>>,
}

impl PotentialField {
    pub fn zero(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 || degree == 0 {
            return Err(invalid("potential needs dimension and degree at least 1"));
        }
        let basis = multi_indices(dim, 1, degree);
        let coeffs = vec![0.0; basis.len()];
        Ok(Self {
            dim,
            degree,
            basis,
            coeffs,
            constant: 0.0,
        })
    }

    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let mut p = Self::zero(dim, degree)?;
        if coeffs.len() != p.basis.len() {
            return Err(Error::DimensionMismatch {
                expected: p.basis.len(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("potential coefficients must be finite"));
        }
        p.coeffs = coeffs;
        Ok(p)
    }

    /// Builds a potential from `(α, c_α)` pairs; unspecified coefficients
    /// are zero.
    pub fn from_terms(dim: usize, degree: usize, terms: &[(MultiIndex, f64)]) -> Result<Self> {
        let mut p = Self::zero(dim, degree)?;
        for (alpha, c) in terms {
            let k = p.index_of(alpha).ok_or_else(|| {
                invalid(format!(
                    "multi-index {:?} is not in the degree-{degree} basis of dimension {dim}",
                    alpha.0
                ))
            })?;
            if !c.is_finite() {
                return Err(invalid("potential coefficients must be finite"));
            }
            p.coeffs[k] = *c;
        }
        Ok(p)
    }

    /// The Brenier potential from `μ` to `N(m, diag σ²)`:
    /// `∇φ(x) = (σ - 1) x + m`, i.e. `φ = Σ (σ_i - 1)/2 He_2(x_i) + m_i He_1(x_i)`.
    pub fn gaussian_map(mean: &[f64], sigma: &[f64], degree: usize) -> Result<Self> {
        let dim = mean.len();
        if sigma.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: sigma.len(),
            });
        }
        let mut terms = Vec::new();
        for i in 0..dim {
            terms.push((MultiIndex::unit(dim, i, 1), mean[i]));
            if degree >= 2 {
                terms.push((MultiIndex::unit(dim, i, 2), 0.5 * (sigma[i] - 1.0)));
            } else if sigma[i] != 1.0 {
                return Err(invalid("a non-unit scale needs degree at least 2"));
            }
        }
        Self::from_terms(dim, degree, &terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn basis(&self) -> &[MultiIndex] {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Ok(Self::from_coeffs(self.dim, self.degree, coeffs)?.with_constant(self.constant))
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.basis.iter().position(|b| b == alpha)
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Option<f64> {
        self.index_of(alpha).map(|k| self.coeffs[k])
    }

    /// `(α, c_α)` pairs in basis order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.basis.iter().zip(self.coeffs.iter().copied())
    }

    /// Re-expresses the potential in a basis of higher degree.
    pub fn embed(&self, degree: usize) -> Result<Self> {
        if degree < self.degree {
            return Err(invalid("cannot embed into a smaller basis"));
        }
        let terms: Vec<(MultiIndex, f64)> = self.terms().map(|(a, c)| (a.clone(), c)).collect();
        Ok(Self::from_terms(self.dim, degree, &terms)?.with_constant(self.constant))
    }

    fn tables(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter().map(|&xi| hermite_values(xi, self.degree)).collect()
    }

    /// `d_k^{(r)} = He_{α_k}^{(r)}(x_k)` for `r = 0..=3`.
    fn coordinate_factors(tables: &[Vec<f64>], alpha: &MultiIndex) -> Vec<[f64; 4]> {
        alpha
            .0
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let t = &tables[k];
                [
                    t[a],
                    hermite_derivative(t, a, 1),
                    hermite_derivative(t, a, 2),
                    hermite_derivative(t, a, 3),
                ]
            })
            .collect()
    }

    fn product(factors: &[[f64; 4]], orders: &[usize]) -> f64 {
        factors.iter().zip(orders).map(|(f, &r)| f[r]).product()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let tables = self.tables(x);
        self.constant
            + self
                .terms()
                .map(|(alpha, c)| c * alpha.0.iter().enumerate().map(|(k, &a)| tables[k][a]).product::<f64>())
                .sum::<f64>()
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        self.jet(x, false).grad
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        self.jet(x, false).hess
    }

    /// Value, gradient, Hessian and optionally the third derivative.
    pub fn jet(&self, x: &[f64], with_third: bool) -> PotentialJet {
        let d = self.dim;
        let tables = self.tables(x);
        let mut value = self.constant;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let mut third = if with_third {
            Some(vec![DMatrix::zeros(d, d); d])
        } else {
            None
        };
        let mut orders = vec![0usize; d];
        for (alpha, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            let f = Self::coordinate_factors(&tables, alpha);
            value += c * Self::product(&f, &orders);
            for i in 0..d {
                orders[i] += 1;
                grad[i] += c * Self::product(&f, &orders);
                for j in i..d {
                    orders[j] += 1;
                    let h = c * Self::product(&f, &orders);
                    hess[(i, j)] += h;
                    if i != j {
                        hess[(j, i)] += h;
                    }
                    orders[j] -= 1;
                }
                orders[i] -= 1;
            }
            if let Some(t) = third.as_mut() {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            orders[i] += 1;
                            orders[j] += 1;
                            orders[k] += 1;
                            t[i][(j, k)] += c * Self::product(&f, &orders);
                            orders[i] -= 1;
                            orders[j] -= 1;
                            orders[k] -= 1;
                        }
                    }
                }
            }
        }
        PotentialJet {
            value,
            grad,
            hess,
            third,
        }
    }

    /// `Lφ = Σ |α| c_α He_α`, using `L He_α = |α| He_α`.
    pub fn ou_generator(&self, x: &[f64]) -> f64 {
        let tables = self.tables(x);
        self.terms()
            .map(|(alpha, c)| {
                c * alpha.order() as f64 * alpha.0.iter().enumerate().map(|(k, &a)| tables[k][a]).product::<f64>()
            })
            .sum()
    }

    /// Values, gradients and Hessians of every basis polynomial at `x`.
    pub fn basis_jets(&self, x: &[f64]) -> BasisJets {
        let d = self.dim;
        let tables = self.tables(x);
        let n = self.basis.len();
        let mut out = BasisJets {
            values: Vec::with_capacity(n),
            grads: Vec::with_capacity(n),
            hessians: Vec::with_capacity(n),
        };
        let mut orders = vec![0usize; d];
        for alpha in &self.basis {
            let f = Self::coordinate_factors(&tables, alpha);
            let mut g = DVector::zeros(d);
            let mut h = DMatrix::zeros(d, d);
            for i in 0..d {
                if alpha.0[i] == 0 {
                    continue;
                }
                orders[i] += 1;
                g[i] = Self::product(&f, &orders);
                for j in i..d {
                    orders[j] += 1;
                    let v = Self::product(&f, &orders);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                    orders[j] -= 1;
                }
                orders[i] -= 1;
            }
            out.values.push(Self::product(&f, &orders));
            out.grads.push(g);
            out.hessians.push(h);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialRecord {
    dim: usize,
    degree: usize,
    #[serde(default)]
    constant: f64,
    terms: Vec<(MultiIndex, f64)>,
}

impl Serialize for PotentialField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PotentialRecord {
            dim: self.dim,
            degree: self.degree,
            constant: self.constant,
            terms: self.terms().map(|(a, c)| (a.clone(), c)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PotentialField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PotentialRecord::deserialize(d)?;
        let p = PotentialField::from_terms(r.dim, r.degree, &r.terms).map_err(serde::de::Error::custom)?;
        Ok(p.with_constant(r.constant))
    }
}

/// `∇φ` as a vector field; its Jacobian is `∇²φ`.
pub struct GradientField<'a>(pub &'a PotentialField);

impl VectorField for GradientField<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn value(&self, x: &[f64]) -> DVector<f64> {
        self.0.grad(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.0.hess(x)
    }
}

/// `K − I` with `K = (I + ∇²φ)⁻¹`, as an operator field with partials
/// `∂_i K = −K (∂_i ∇²φ) K`.
pub struct ResolventField<'a>(pub &'a PotentialField);

impl OperatorField for ResolventField<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.0.dim();
        let k = (DMatrix::identity(d, d) + self.0.hess(x))
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
        k - DMatrix::identity(d, d)
    }
    fn partials(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.0.dim();
        let jet = self.0.jet(x, true);
        let k = (DMatrix::identity(d, d) + &jet.hess)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN));
        jet.third
            .expect("third derivative requested")
            .iter()
            .map(|t| -(&k * t * &k))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

/// `x ↦ x + ∇φ(x)`: `T` for a forward potential, `S` for a dual one.
#[derive(Debug, Clone)]
pub struct TransportShift {
    pub base: PotentialField,
    pub direction: Direction,
}

impl TransportShift {
    pub fn new(base: PotentialField, direction: Direction) -> Self {
        Self { base, direction }
    }

    pub fn map(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x) + self.base.grad(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.base.dim, self.base.dim) + self.base.hess(x)
    }

    /// Smallest eigenvalue of `I + ∇²φ` over the given points; the shift is
    /// strictly monotone there when this exceeds zero.
    pub fn monotonicity_margin<'a>(&self, points: impl Iterator<Item = &'a [f64]>) -> f64 {
        points
            .map(|x| min_eigenvalue(&self.jacobian(x)))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_potential() -> PotentialField {
        // deterministic non-trivial coefficients
        let p = PotentialField::zero(2, 4).unwrap();
        let coeffs = (0..p.basis().len()).map(|k| 0.1 * ((k as f64 * 1.7).sin())).collect();
        p.with_coeffs(coeffs).unwrap()
    }

    #[test]
    fn gaussian_map_gradient() {
        let phi = PotentialField::gaussian_map(&[1.0], &[2.0], 2).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            assert!((phi.grad(&[x])[0] - (x + 1.0)).abs() < 1e-14);
            assert!((phi.hess(&[x])[(0, 0)] - 1.0).abs() < 1e-14);
            // x²/2 + x - 1/2
            assert!((phi.value(&[x]) - (0.5 * x * x + x - 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let phi = sample_potential();
        let x = [0.37, -0.81];
        let jet = phi.jet(&x, true);
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let g_fd = (phi.value(&xp) - phi.value(&xm)) / (2.0 * h);
            assert!((g_fd - jet.grad[i]).abs() <= 1e-6 * jet.grad[i].abs().max(1.0));
            let h_fd = (phi.grad(&xp) - phi.grad(&xm)) / (2.0 * h);
            let t_fd = (phi.hess(&xp) - phi.hess(&xm)) / (2.0 * h);
            let third = &jet.third.as_ref().unwrap()[i];
            for j in 0..2 {
                assert!((h_fd[j] - jet.hess[(i, j)]).abs() <= 1e-5 * jet.hess[(i, j)].abs().max(1.0));
                for k in 0..2 {
                    assert!((t_fd[(j, k)] - third[(j, k)]).abs() <= 1e-4 * third[(j, k)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn third_derivative_is_symmetric() {
        let phi = sample_potential();
        let t = phi.jet(&[0.2, 1.3], true).third.unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let v = t[i][(j, k)];
                    assert!((v - t[j][(i, k)]).abs() < 1e-12 && (v - t[k][(j, i)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_jets_assemble_to_potential() {
        let phi = sample_potential();
        let x = [-0.6, 0.45];
        let b = phi.basis_jets(&x);
        let jet = phi.jet(&x, false);
        let mut g = DVector::zeros(2);
        let mut h = DMatrix::zeros(2, 2);
        for (k, c) in phi.coeffs().iter().enumerate() {
            g += *c * &b.grads[k];
            h += *c * &b.hessians[k];
        }
        assert!((g - jet.grad).amax() < 1e-14);
        assert!((h - jet.hess).amax() < 1e-14);
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let phi = sample_potential().with_constant(-0.123_456_789_012_345_68);
        let text = serde_json::to_string(&phi).unwrap();
        let back: PotentialField = serde_json::from_str(&text).unwrap();
        assert_eq!(phi, back);
        for (a, b) in phi.coeffs().iter().zip(back.coeffs()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let bad = r#"{"dim":1,"degree":2,"terms":[[[3],1.0]]}"#;
        assert!(serde_json::from_str::<PotentialField>(bad).is_err());
    }

    #[test]
    fn embedding_preserves_values() {
        let phi = sample_potential();
        let big = phi.embed(6).unwrap();
        let x = [0.3, 0.9];
        assert!((phi.value(&x) - big.value(&x)).abs() < 1e-14);
        assert!(phi.embed(2).is_err());
    }
}
