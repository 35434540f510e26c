//! One-dimensional ground truth: the monotone rearrangement `T = F_ν⁻¹ ∘ Φ`,
//! its potential and the exact Wasserstein distance.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::gaussian::ScalarTarget;

/// Uniform grid of `points` nodes on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            lo: -8.0,
            hi: 8.0,
            points: 2001,
        }
    }
}

impl OracleGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points < 3 || !(self.lo < 0.0 && self.hi > 0.0) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(invalid("oracle grid needs at least 3 points and lo < 0 < hi"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + h * i as f64).collect()
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[allow(clippy::excessive_precision)]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
#[allow(clippy::excessive_precision)]
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_legendre(a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half * GL_NODES
        .iter()
        .zip(&GL_WEIGHTS)
        .map(|(t, w)| w * g(mid + half * t))
        .sum::<f64>()
}

/// Cumulative distribution of `ν` on the real line, tabulated on cells.
#[derive(Debug, Clone)]
struct TargetCdf<'a> {
    target: &'a ScalarTarget,
    /// log of the unnormalized Lebesgue density at its maximum
    log_peak: f64,
    edges: Vec<f64>,
    /// mass left of each edge
    left: Vec<f64>,
    /// mass right of each edge, summed from the right
    right: Vec<f64>,
    total: f64,
}

const CELL: f64 = 0.02;
const TAIL_DROP: f64 = 80.0;
const MAX_REACH: f64 = 400.0;

impl<'a> TargetCdf<'a> {
    fn log_density(target: &ScalarTarget, y: f64) -> f64 {
        -target.value(&[y]) - 0.5 * y * y
    }

    fn new(target: &'a ScalarTarget) -> Result<Self> {
        // locate the peak on a coarse scan, then extend until the density
        // has dropped by e^{-TAIL_DROP}
        let mut log_peak = f64::NEG_INFINITY;
        let mut y = -60.0;
        while y <= 60.0 {
            let l = Self::log_density(target, y);
            if l.is_nan() || l == f64::INFINITY {
                return Err(Error::NonIntegrableDensity(format!("log density is {l} at {y}")));
            }
            log_peak = log_peak.max(l);
            y += 0.01;
        }
        if !log_peak.is_finite() {
            return Err(Error::NonIntegrableDensity("density vanishes on the scan range".into()));
        }
        let reach = |sign: f64| -> Result<f64> {
            let mut y = 8.0 * sign;
            while Self::log_density(target, y) > log_peak - TAIL_DROP {
                y += sign;
                if y.abs() > MAX_REACH {
                    return Err(Error::NonIntegrableDensity(format!(
                        "density tail still above e^-{TAIL_DROP} of its peak at |y| = {MAX_REACH}"
                    )));
                }
            }
            Ok(y)
        };
        let (lo, hi) = (reach(-1.0)?, reach(1.0)?);
        let cells = ((hi - lo) / CELL).ceil() as usize;
        let h = (hi - lo) / cells as f64;
        let edges: Vec<f64> = (0..=cells).map(|i| lo + h * i as f64).collect();
        let density = |y: f64| (Self::log_density(target, y) - log_peak).exp();
        let masses: Vec<f64> = edges.windows(2).map(|w| gauss_legendre(w[0], w[1], density)).collect();
        let mut left = vec![0.0; cells + 1];
        for i in 0..cells {
            left[i + 1] = left[i] + masses[i];
        }
        let mut right = vec![0.0; cells + 1];
        for i in (0..cells).rev() {
            right[i] = right[i + 1] + masses[i];
        }
        let total = left[cells];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonIntegrableDensity(format!("total mass {total}")));
        }
        Ok(Self {
            target,
            log_peak,
            edges,
            left,
            right,
            total,
        })
    }

    fn density(&self, y: f64) -> f64 {
        (Self::log_density(self.target, y) - self.log_peak).exp()
    }

    fn cell_of(&self, y: f64) -> usize {
        let h = self.edges[1] - self.edges[0];
        (((y - self.edges[0]) / h).floor().max(0.0) as usize).min(self.edges.len() - 2)
    }

    /// Unnormalized mass in `[edge_i, y]`.
    fn partial(&self, i: usize, y: f64) -> f64 {
        gauss_legendre(self.edges[i], y, |s| self.density(s))
    }

    /// `F_ν(y)`.
    fn cdf(&self, y: f64) -> f64 {
        if y <= self.edges[0] {
            return 0.0;
        }
        if y >= *self.edges.last().unwrap() {
            return 1.0;
        }
        let i = self.cell_of(y);
        (self.left[i] + self.partial(i, y)) / self.total
    }

    /// `F_ν⁻¹` at lower-tail probability `p` (or upper-tail probability when
    /// `upper` is set), solved cell-locally by safeguarded Newton.
    fn quantile(&self, p: f64, upper: bool) -> f64 {
        let level = p * self.total;
        let n = self.edges.len() - 1;
        // locate the cell containing the level
        let i = if upper {
            // right[i] >= level > right[i+1]
            let k = self.right.partition_point(|&r| r >= level);
            k.saturating_sub(1).min(n - 1)
        } else {
            let k = self.left.partition_point(|&l| l <= level);
            k.saturating_sub(1).min(n - 1)
        };
        // residual r(y) increasing in y
        let residual = |y: f64| {
            let inner = self.partial(i, y);
            if upper {
                (self.right[i] - inner) - level
            } else {
                self.left[i] + inner - level
            }
        };
        let sign = if upper { -1.0 } else { 1.0 };
        let (mut a, mut b) = (self.edges[i], self.edges[i + 1]);
        let mut y = 0.5 * (a + b);
        for _ in 0..100 {
            let r = sign * residual(y);
            if r > 0.0 {
                b = y;
            } else {
                a = y;
            }
            let slope = self.density(y);
            let mut next = y - r / slope;
            if !(next > a && next < b) || !next.is_finite() {
                next = 0.5 * (a + b);
            }
            if (next - y).abs() <= 1e-14 * y.abs().max(1.0) || b - a <= 1e-14 * y.abs().max(1.0) {
                return next;
            }
            y = next;
        }
        y
    }
}

/// The tabulated monotone rearrangement `T = F_ν⁻¹ ∘ Φ` with exact slopes
/// `T' = φ(x) / p_ν(T(x))`, interpolated by cubic Hermite segments.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneMap {
    xs: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    log_normalizer: f64,
}

impl MonotoneMap {
    pub fn build(target: &ScalarTarget, grid: &OracleGrid) -> Result<Self> {
        if target.dim() != 1 {
            return Err(invalid("the monotone rearrangement oracle is one-dimensional"));
        }
        grid.validate()?;
        let cdf = TargetCdf::new(target)?;
        let xs = grid.nodes();
        let mut values = Vec::with_capacity(xs.len());
        let mut slopes = Vec::with_capacity(xs.len());
        // the normalized Lebesgue density of ν is e^{log_density - log_peak} / total
        let log_norm_density = cdf.log_peak + cdf.total.ln();
        for &x in &xs {
            let y = if x <= 0.0 {
                cdf.quantile(std_normal_cdf(x), false)
            } else {
                cdf.quantile(std_normal_cdf(-x), true)
            };
            let log_p = TargetCdf::log_density(target, y) - log_norm_density;
            let log_phi = -0.5 * x * x - 0.5 * (2.0 * PI).ln();
            values.push(y);
            slopes.push((log_phi - log_p).exp());
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::NonIntegrableDensity(
                "rearrangement is not strictly increasing".into(),
            ));
        }
        // log E_μ[e^{-f}] = log ∫ e^{-f(y) - y²/2} dy − log sqrt(2π)
        let log_normalizer = log_norm_density - 0.5 * (2.0 * PI).ln();
        Ok(Self {
            xs,
            values,
            slopes,
            log_normalizer,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `log E_μ[e^{-f}]` from the same integration.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return None;
        }
        let h = self.xs[1] - self.xs[0];
        Some((((x - self.xs[0]) / h).floor() as usize).min(n - 2))
    }

    /// `T(x)`; linear continuation outside the grid.
    pub fn map(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `T'(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let Some(i) = self.segment(x) else {
            let k = if x < self.xs[0] { 0 } else { n - 1 };
            return (self.values[k] + self.slopes[k] * (x - self.xs[k]), self.slopes[k]);
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let deriv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, deriv)
    }

    /// `S = T⁻¹` by bisection on the monotone interpolant.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.xs.len();
        if y <= self.values[0] {
            return self.xs[0] + (y - self.values[0]) / self.slopes[0];
        }
        if y >= self.values[n - 1] {
            return self.xs[n - 1] + (y - self.values[n - 1]) / self.slopes[n - 1];
        }
        let k = self.values.partition_point(|&v| v <= y).clamp(1, n - 1);
        let (mut a, mut b) = (self.xs[k - 1], self.xs[k]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.map(m) < y {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-15 * m.abs().max(1.0) {
                break;
            }
        }
        0.5 * (a + b)
    }

    /// `E_μ[(T(x) − x)²]`, trapezoid over the table against the Gaussian density.
    pub fn wasserstein2_sq(&self) -> f64 {
        let h = self.xs[1] - self.xs[0];
        let vals: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.values)
            .map(|(x, t)| (t - x).powi(2) * std_normal_pdf(*x))
            .collect();
        let n = vals.len();
        h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n - 1]))
    }

    /// `φ(x) = ∫_0^x (T(s) − s) ds` at the grid nodes.
    pub fn potential(&self) -> TabulatedPotential {
        potential_from_map(self)
    }
}

/// A potential sampled on a grid, with `φ(0) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TabulatedPotential {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

/// Integrates `T(s) − s` cell by cell; the cubic Hermite interpolant is
/// integrated exactly.
pub fn potential_from_map(map: &MonotoneMap) -> TabulatedPotential {
    let xs = map.xs.clone();
    let n = xs.len();
    let mut cumulative = vec![0.0; n];
    for i in 0..n - 1 {
        let h = xs[i + 1] - xs[i];
        let (u0, u1) = (map.values[i] - xs[i], map.values[i + 1] - xs[i + 1]);
        let (d0, d1) = (map.slopes[i] - 1.0, map.slopes[i + 1] - 1.0);
        cumulative[i + 1] = cumulative[i] + 0.5 * h * (u0 + u1) + h * h / 12.0 * (d0 - d1);
    }
    let k = map.segment(0.0).unwrap_or(0);
    let at_zero = cumulative[k] + gauss_legendre(xs[k], 0.0, |s| map.map(s) - s);
    let values = cumulative.iter().map(|c| c - at_zero).collect();
    TabulatedPotential { xs, values }
}

/// Largest `|Φ(x) − F_ν(T(x))|` over the grid.
pub fn pushforward_cdf_error(target: &ScalarTarget, map: &MonotoneMap) -> Result<f64> {
    let cdf = TargetCdf::new(target)?;
    Ok(map
        .xs
        .iter()
        .zip(&map.values)
        .map(|(x, t)| (std_normal_cdf(*x) - cdf.cdf(*t)).abs())
        .fold(0.0, f64::max))
}
