use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Value, gradient and Hessian of `f` at one point.
#[derive(Debug, Clone)]
pub struct TargetJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Anything that can play the role of `f` in `dν = c⁻¹ e^{-f} dμ`.
pub trait TargetFunction: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;
    fn jet(&self, x: &[f64]) -> TargetJet;
    fn grad(&self, x: &[f64]) -> DVector<f64> {
        self.jet(x).grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// The parametric families a target can be built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetKind {
    /// `ν = N(mean, diag(sigma²))`, normalized so that `E_μ[e^{-f}] = 1`.
    Gaussian { mean: Vec<f64>, sigma: Vec<f64> },
    /// `f(x) = Σ a x_i⁴ + b x_i²`.
    QuarticWell { a: f64, b: f64 },
    /// `ν = Σ w_k N(m_k, s_k² I)`.
    Mixture { components: Vec<MixtureComponent> },
    /// `f` sampled on an increasing grid, natural cubic spline in between and
    /// linear continuation outside.
    Tabulated1d { xs: Vec<f64>, values: Vec<f64> },
    /// `f(x) = ⟨slope, x⟩ + offset`.
    Affine { slope: Vec<f64>, offset: f64 },
}

/// The function `f` defining the target `dν = c⁻¹ e^{-f} dμ`.
#[derive(Clone)]
pub struct ScalarTarget {
    dim: usize,
    kind: Option<TargetKind>,
    description: String,
    func: Arc<dyn TargetFunction>,
}

impl fmt::Debug for ScalarTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarTarget")
            .field("dim", &self.dim)
            .field("description", &self.description)
            .finish()
    }
}

impl ScalarTarget {
    pub fn new(dim: usize, kind: TargetKind) -> Result<Self> {
        let func: Arc<dyn TargetFunction> = match &kind {
            TargetKind::Gaussian { mean, sigma } => {
                check_len("mean", mean.len(), dim)?;
                check_len("sigma", sigma.len(), dim)?;
                if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return Err(invalid("gaussian sigma must be positive"));
                }
                Arc::new(GaussianF {
                    mean: mean.clone(),
                    sigma: sigma.clone(),
                })
            }
            TargetKind::QuarticWell { a, b } => {
                if !(*a > 0.0) || !b.is_finite() {
                    return Err(invalid("quartic-well needs a > 0 and finite b"));
                }
                Arc::new(QuarticF { a: *a, b: *b, dim })
            }
            TargetKind::Mixture { components } => {
                if components.is_empty() {
                    return Err(invalid("mixture needs at least one component"));
                }
                for c in components {
                    check_len("mixture mean", c.mean.len(), dim)?;
                    if !(c.weight > 0.0) || !(c.sigma > 0.0) {
                        return Err(invalid("mixture weights and sigmas must be positive"));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                Arc::new(MixtureF {
                    log_weights: components.iter().map(|c| (c.weight / total).ln()).collect(),
                    means: components.iter().map(|c| c.mean.clone()).collect(),
                    sigmas: components.iter().map(|c| c.sigma).collect(),
                    dim,
                })
            }
            TargetKind::Tabulated1d { xs, values } => {
                if dim != 1 {
                    return Err(invalid("tabulated-1d targets are one-dimensional"));
                }
                Arc::new(Spline::natural(xs, values)?)
            }
            TargetKind::Affine { slope, offset } => {
                check_len("slope", slope.len(), dim)?;
                Arc::new(AffineF {
                    slope: slope.clone(),
                    offset: *offset,
                })
            }
        };
        let description = describe_kind(&kind);
        let target = Self {
            dim,
            kind: Some(kind),
            description,
            func,
        };
        target.self_check()?;
        Ok(target)
    }

    /// A target backed by an arbitrary [`TargetFunction`]; derivative
    /// consistency is checked the same way as for the built-in kinds.
    pub fn custom(dim: usize, description: impl Into<String>, func: Arc<dyn TargetFunction>) -> Result<Self> {
        let target = Self {
            dim,
            kind: None,
            description: description.into(),
            func,
        };
        target.self_check()?;
        Ok(target)
    }

    /// `f ≡ 0`, i.e. `ν = μ`.
    pub fn standard(dim: usize) -> Self {
        Self::new(
            dim,
            TargetKind::Affine {
                slope: vec![0.0; dim],
                offset: 0.0,
            },
        )
        .expect("zero target is valid")
    }

    /// `N(m 1, σ² I)`.
    pub fn gaussian_iso(dim: usize, mean: f64, sigma: f64) -> Result<Self> {
        Self::new(
            dim,
            TargetKind::Gaussian {
                mean: vec![mean; dim],
                sigma: vec![sigma; dim],
            },
        )
    }

    pub fn quartic_well(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(dim, TargetKind::QuarticWell { a, b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> Option<&TargetKind> {
        self.kind.as_ref()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.func.value(x)
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        self.func.grad(x)
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        self.func.jet(x).hess
    }

    pub fn jet(&self, x: &[f64]) -> TargetJet {
        self.func.jet(x)
    }

    /// Central-difference check of the gradient against the value (1e-5
    /// relative) and Hessian symmetry (1e-12) on a fixed probe set. Points
    /// where `f` is infinite are skipped.
    pub fn self_check(&self) -> Result<()> {
        for x in probe_points(self.dim) {
            let jet = self.func.jet(&x);
            if !jet.value.is_finite() {
                continue;
            }
            if jet.grad.len() != self.dim || jet.hess.shape() != (self.dim, self.dim) {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: jet.grad.len(),
                });
            }
            for i in 0..self.dim {
                let h = 1e-5 * x[i].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let (fp, fm) = (self.func.value(&xp), self.func.value(&xm));
                if !fp.is_finite() || !fm.is_finite() {
                    continue;
                }
                let fd = (fp - fm) / (2.0 * h);
                let scale = jet.grad[i].abs().max(1.0);
                if (fd - jet.grad[i]).abs() > 1e-5 * scale {
                    return Err(invalid(format!(
                        "{}: gradient component {i} = {} disagrees with finite difference {} at {:?}",
                        self.description, jet.grad[i], fd, x
                    )));
                }
            }
            let scale = jet.hess.amax().max(1.0);
            if (&jet.hess - jet.hess.transpose()).amax() > 1e-12 * scale {
                return Err(invalid(format!("{}: hessian not symmetric", self.description)));
            }
        }
        Ok(())
    }
}

fn check_len(name: &str, got: usize, dim: usize) -> Result<()> {
    if got != dim {
        return Err(invalid(format!("{name} has length {got}, expected {dim}")));
    }
    Ok(())
}

fn describe_kind(kind: &TargetKind) -> String {
    match kind {
        TargetKind::Gaussian { mean, sigma } => format!("gaussian(mean={mean:?}, sigma={sigma:?})"),
        TargetKind::QuarticWell { a, b } => format!("quartic-well(a={a}, b={b})"),
        TargetKind::Mixture { components } => format!("mixture({} components)", components.len()),
        TargetKind::Tabulated1d { xs, .. } => format!("tabulated-1d({} points)", xs.len()),
        TargetKind::Affine { slope, offset } => format!("affine(slope={slope:?}, offset={offset})"),
    }
}

fn probe_points(dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..13).map(|i| vec![-3.0 + 0.5 * i as f64]).collect();
    }
    let mut pts = vec![vec![0.0; dim]];
    for i in 0..dim {
        for s in [-1.5, 1.5] {
            let mut p = vec![0.0; dim];
            p[i] = s;
            pts.push(p);
        }
    }
    pts.push((0..dim).map(|i| if i % 2 == 0 { 0.7 } else { -0.4 }).collect());
    pts.push((0..dim).map(|i| 0.3 * (i as f64 + 1.0)).collect());
    pts
}

#[derive(Debug)]
struct GaussianF {
    mean: Vec<f64>,
    sigma: Vec<f64>,
}

impl TargetFunction for GaussianF {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.sigma)
            .map(|((x, m), s)| (x - m).powi(2) / (2.0 * s * s) - 0.5 * x * x + s.ln())
            .sum()
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let d = x.len();
        let grad = DVector::from_fn(d, |i, _| (x[i] - self.mean[i]) / self.sigma[i].powi(2) - x[i]);
        let hess = DMatrix::from_fn(
            d,
            d,
            |i, j| {
                if i == j {
                    1.0 / self.sigma[i].powi(2) - 1.0
                } else {
                    0.0
                }
            },
        );
        TargetJet {
            value: self.value(x),
            grad,
            hess,
        }
    }
}

#[derive(Debug)]
struct QuarticF {
    a: f64,
    b: f64,
    dim: usize,
}

impl TargetFunction for QuarticF {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|x| self.a * x.powi(4) + self.b * x * x).sum()
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let d = self.dim;
        TargetJet {
            value: self.value(x),
            grad: DVector::from_fn(d, |i, _| 4.0 * self.a * x[i].powi(3) + 2.0 * self.b * x[i]),
            hess: DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    12.0 * self.a * x[i] * x[i] + 2.0 * self.b
                } else {
                    0.0
                }
            }),
        }
    }
}

#[derive(Debug)]
struct AffineF {
    slope: Vec<f64>,
    offset: f64,
}

impl TargetFunction for AffineF {
    fn value(&self, x: &[f64]) -> f64 {
        self.offset + x.iter().zip(&self.slope).map(|(x, s)| x * s).sum::<f64>()
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let d = x.len();
        TargetJet {
            value: self.value(x),
            grad: DVector::from_column_slice(&self.slope),
            hess: DMatrix::zeros(d, d),
        }
    }
}

#[derive(Debug)]
struct MixtureF {
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigmas: Vec<f64>,
    dim: usize,
}

impl MixtureF {
    /// Log of each component density (up to the shared `(2π)^{-d/2}`) and
    /// the log-sum-exp.
    fn component_logs(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim as f64;
        let logs: Vec<f64> = (0..self.sigmas.len())
            .map(|k| {
                let s2 = self.sigmas[k] * self.sigmas[k];
                let r2: f64 = x.iter().zip(&self.means[k]).map(|(x, m)| (x - m).powi(2)).sum();
                self.log_weights[k] - 0.5 * r2 / s2 - d * self.sigmas[k].ln()
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        (logs, lse)
    }
}

impl TargetFunction for MixtureF {
    fn value(&self, x: &[f64]) -> f64 {
        let (_, lse) = self.component_logs(x);
        let r2: f64 = x.iter().map(|x| x * x).sum();
        -lse - 0.5 * r2
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let d = self.dim;
        let (logs, lse) = self.component_logs(x);
        let xv = DVector::from_column_slice(x);
        // ∇f = Σ π_k (x - m_k)/s_k² - x
        let mut mean_score = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for k in 0..logs.len() {
            let pi = (logs[k] - lse).exp();
            let s2 = self.sigmas[k] * self.sigmas[k];
            let u = (&xv - DVector::from_column_slice(&self.means[k])) / s2;
            mean_score += pi * &u;
            second += pi * (DMatrix::identity(d, d) / s2 - &u * u.transpose());
        }
        let hess = second + &mean_score * mean_score.transpose() - DMatrix::identity(d, d);
        let hess = 0.5 * (&hess + hess.transpose());
        TargetJet {
            value: -lse - 0.5 * xv.norm_squared(),
            grad: mean_score - xv,
            hess,
        }
    }
}

/// Natural cubic spline with linear continuation outside the knots.
#[derive(Debug)]
struct Spline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl Spline {
    fn natural(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(invalid("tabulated-1d needs at least 3 matching (x, f) pairs"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.iter().any(|y| !y.is_finite()) {
            return Err(invalid(
                "tabulated-1d grid must be strictly increasing with finite values",
            ));
        }
        // tridiagonal system for interior second derivatives
        let mut m = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let a = h0 / 6.0;
            let b = (h0 + h1) / 3.0;
            let c = h1 / 6.0;
            let rhs = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (rhs - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    fn eval3(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] || x >= self.xs[n - 1] {
            let (i, k) = if x <= self.xs[0] { (0, 0) } else { (n - 2, n - 1) };
            let (_, slope, _) = self.segment(i, self.xs[k]);
            return (self.ys[k] + slope * (x - self.xs[k]), slope, 0.0);
        }
        let i = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        self.segment(i, x)
    }

    fn segment(&self, i: usize, x: f64) -> (f64, f64, f64) {
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let v = a * self.ys[i] + b * self.ys[i + 1] + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let dv =
            (self.ys[i + 1] - self.ys[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        (v, dv, d2)
    }
}

impl TargetFunction for Spline {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval3(x[0]).0
    }

    fn jet(&self, x: &[f64]) -> TargetJet {
        let (v, d1, d2) = self.eval3(x[0]);
        TargetJet {
            value: v,
            grad: DVector::from_element(1, d1),
            hess: DMatrix::from_element(1, 1, d2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_f_matches_spec_form() {
        // N(1, 4): f(x) = (x-1)²/8 - x²/2 + ln 2, f'(x) = (x-1)/4 - x
        let t = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        let x = [0.7];
        assert!((t.value(&x) - ((0.7f64 - 1.0).powi(2) / 8.0 - 0.245 + 2f64.ln())).abs() < 1e-14);
        assert!((t.grad(&x)[0] - ((0.7 - 1.0) / 4.0 - 0.7)).abs() < 1e-15);
        assert!((t.hess(&x)[(0, 0)] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn mixture_derivatives_pass_self_check() {
        let t = ScalarTarget::new(
            2,
            TargetKind::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: 0.5,
                        mean: vec![-0.8, 0.0],
                        sigma: 0.7,
                    },
                    MixtureComponent {
                        weight: 0.5,
                        mean: vec![0.8, 0.2],
                        sigma: 0.7,
                    },
                ],
            },
        )
        .unwrap();
        // FD of the gradient gives the Hessian
        let x = [0.3, -0.2];
        let h = 1e-5;
        let hess = t.hess(&x);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let col = (t.grad(&xp) - t.grad(&xm)) / (2.0 * h);
            for i in 0..2 {
                assert!((col[i] - hess[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_component_mixture_is_gaussian() {
        let m = ScalarTarget::new(
            1,
            TargetKind::Mixture {
                components: vec![MixtureComponent {
                    weight: 1.0,
                    mean: vec![1.0],
                    sigma: 2.0,
                }],
            },
        )
        .unwrap();
        let g = ScalarTarget::gaussian_iso(1, 1.0, 2.0).unwrap();
        for x in [-2.0, 0.0, 3.5] {
            assert!((m.value(&[x]) - g.value(&[x])).abs() < 1e-12);
            assert!((m.hess(&[x])[(0, 0)] - g.hess(&[x])[(0, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_reproduces_quartic() {
        let xs: Vec<f64> = (0..=400).map(|i| -8.0 + 0.04 * i as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 0.05 * x.powi(4)).collect();
        let t = ScalarTarget::new(1, TargetKind::Tabulated1d { xs, values: vals }).unwrap();
        let q = ScalarTarget::quartic_well(1, 0.05, 0.0).unwrap();
        for x in [-2.3, 0.1, 1.77] {
            assert!((t.value(&[x]) - q.value(&[x])).abs() < 1e-5);
            assert!((t.grad(&[x])[0] - q.grad(&[x])[0]).abs() < 1e-3);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ScalarTarget::gaussian_iso(1, 0.0, 0.0).is_err());
        assert!(ScalarTarget::new(
            2,
            TargetKind::Gaussian {
                mean: vec![0.0],
                sigma: vec![1.0, 1.0]
            }
        )
        .is_err());
        assert!(ScalarTarget::quartic_well(1, -1.0, 0.0).is_err());
        assert!(ScalarTarget::new(
            2,
            TargetKind::Tabulated1d {
                xs: vec![0.0, 1.0, 2.0],
                values: vec![0.0; 3]
            }
        )
        .is_err());
    }

    #[derive(Debug)]
    struct WrongGrad;
    impl TargetFunction for WrongGrad {
        fn value(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn jet(&self, x: &[f64]) -> TargetJet {
            TargetJet {
                value: self.value(x),
                grad: DVector::from_element(1, x[0]),
                hess: DMatrix::from_element(1, 1, 1.0),
            }
        }
    }

    #[test]
    fn inconsistent_gradient_fails_self_check() {
        assert!(ScalarTarget::custom(1, "wrong", Arc::new(WrongGrad)).is_err());
    }
}
