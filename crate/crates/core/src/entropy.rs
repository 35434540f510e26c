//! Carleman-Fredholm determinant, the Gaussian Jacobian of a gradient shift
//! and the relative entropies built from them.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{non_finite, Error, Result};
use crate::gaussian::{GaussianSpace, ScalarTarget};
use crate::potential::PotentialField;

/// Eigenvalues of `I + K` at or below this are treated as singular.
pub const EIG_FLOOR: f64 = 1e-8;

/// Eigenvalues `κ_i` of a symmetric `K`, checked against the floor on `1 + κ_i`.
pub fn shifted_eigenvalues(k: &DMatrix<f64>, floor: f64) -> Result<Vec<f64>> {
    let eig: Vec<f64> = if k.nrows() == 1 {
        vec![k[(0, 0)]]
    } else {
        SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().collect()
    };
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("eigenvalues of the Hessian"));
    }
    if let Some(&worst) = eig.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
        if 1.0 + worst <= floor {
            return Err(Error::SingularJacobian {
                eigenvalue: 1.0 + worst,
                floor,
            });
        }
    }
    Ok(eig)
}

/// `log det₂(I + K) = Σ [log(1 + κ_i) − κ_i]`, always `<= 0`.
pub fn logdet2(k: &DMatrix<f64>) -> Result<f64> {
    logdet2_with_floor(k, EIG_FLOOR)
}

pub fn logdet2_with_floor(k: &DMatrix<f64>, floor: f64) -> Result<f64> {
    let eig = shifted_eigenvalues(k, floor)?;
    Ok(eig.iter().map(|&kappa| kappa.ln_1p() - kappa).sum())
}

/// `Λ(x) = det₂(I + ∇²φ) exp(−Lφ − ½|∇φ|²)`.
pub fn gaussian_jacobian(phi: &PotentialField) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |x: &[f64]| log_gaussian_jacobian(phi, x).map(f64::exp)
}

pub fn log_gaussian_jacobian(phi: &PotentialField, x: &[f64]) -> Result<f64> {
    let jet = phi.jet(x, false);
    let ld = logdet2(&jet.hess)?;
    Ok(ld - phi.ou_generator(x) - 0.5 * jet.grad.norm_squared())
}

/// `H((I + ∇φ)μ | μ) = E[½|∇φ|² − log det₂(I + ∇²φ)]`.
pub fn pushforward_entropy(space: &GaussianSpace, phi: &PotentialField) -> Result<f64> {
    check_dim(space, phi.dim())?;
    space.rule().integrate(|x| {
        let jet = phi.jet(x, false);
        Ok(0.5 * jet.grad.norm_squared() - logdet2(&jet.hess)?)
    })
}

/// `H(ν|μ) = E_ν[−f] − log c` with `c = E_μ[e^{−f}]`.
pub fn relative_entropy(space: &GaussianSpace, target: &ScalarTarget) -> Result<f64> {
    let nu = space.target_measure(target)?;
    let mean_f = nu.expect(|x| Ok(target.value(x)))?;
    Ok(-mean_f - nu.log_normalizer())
}

fn check_dim(space: &GaussianSpace, dim: usize) -> Result<()> {
    if space.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: dim,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::MultiIndex;

    #[test]
    fn logdet2_examples() {
        assert_eq!(logdet2(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((logdet2(&one).unwrap() - (2f64.ln() - 1.0)).abs() < 1e-15);
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -0.5]));
        let expected = (2f64.ln() - 1.0) + (0.5f64.ln() + 0.5);
        assert!((logdet2(&k).unwrap() - expected).abs() < 1e-14);
        assert!((expected + 0.5).abs() < 1e-6);
        let singular = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(logdet2(&singular), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn change_of_variables_for_gaussian_map() {
        // T(x) = 2x + 1 pushes μ to N(1, 4); (dν/dμ)∘T · Λ = 1
        let phi = PotentialField::gaussian_map(&[1.0], &[2.0], 2).unwrap();
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let lambda = gaussian_jacobian(&phi);
        for x in [-2.0, -0.3, 0.0, 1.1, 2.7] {
            let l = lambda(&[x]).unwrap();
            let closed = 2.0 * (-1.0f64).exp() * (-(x * x - 1.0) - x - 0.5 * (x + 1.0) * (x + 1.0)).exp();
            assert!((l - closed).abs() < 1e-13 * closed.max(1.0));
            let t = 2.0 * x + 1.0;
            let density = (-target.value(&[t])).exp();
            assert!((density * l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropies_match_gaussian_kl() {
        // wide targets need a fine rule: e^{-f} grows like e^{3x²/8} for σ = 2
        let space = GaussianSpace::tensor_hermite(1, 80).unwrap();
        let phi = PotentialField::gaussian_map(&[1.0], &[2.0], 2).unwrap();
        let kl = 0.5 * (4.0 + 1.0 - 1.0) - 2f64.ln();
        assert!((pushforward_entropy(&space, &phi).unwrap() - kl).abs() < 1e-10);
        let target = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        assert!((relative_entropy(&space, &target).unwrap() - kl).abs() < 1e-10);
        let target = ScalarTarget::gaussian_iso(1, 0.5, 0.5).unwrap();
        let kl = 0.5 * (0.25 + 0.25 - 1.0) - 0.5f64.ln();
        assert!((relative_entropy(&space, &target).unwrap() - kl).abs() < 1e-10);
        assert!(relative_entropy(&space, &ScalarTarget::standard(1)).unwrap().abs() < 1e-15);

        let space2 = GaussianSpace::tensor_hermite(2, 6).unwrap();
        let shift =
            PotentialField::from_terms(2, 1, &[(MultiIndex(vec![1, 0]), 0.3), (MultiIndex(vec![0, 1]), -0.7)]).unwrap();
        assert!((pushforward_entropy(&space2, &shift).unwrap() - 0.5 * (0.09 + 0.49)).abs() < 1e-14);
    }

    #[test]
    fn jacobian_integrates_to_one() {
        let space = GaussianSpace::tensor_hermite(1, 40).unwrap();
        let phi = PotentialField::gaussian_map(&[0.4], &[0.7], 2).unwrap();
        let lambda = gaussian_jacobian(&phi);
        assert!((space.rule().integrate(|x| lambda(x)).unwrap() - 1.0).abs() < 1e-10);
    }
}
