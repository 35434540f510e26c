//! Node/weight rules for expectations under the standard Gaussian.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{non_finite, Error, Result};

/// Nodes are stored row-major in one flat buffer shared between rules that
/// differ only by weights (μ and the self-normalized ν rule).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Arc<[f64]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} node coordinates do not match {} weights in dimension {}",
                nodes.len(),
                weights.len(),
                dim
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            dim,
            nodes: nodes.into(),
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Evaluates `g` at every node (in parallel, results kept in node order)
    /// and returns the weighted sum using pairwise reduction.
    pub fn integrate<F>(&self, g: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let values = self.evaluate(&g)?;
        let terms: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        Ok(pairwise_sum(&terms))
    }

    /// Component-wise version of [`integrate`](Self::integrate) for a
    /// vector-valued integrand of fixed length `len`.
    pub fn integrate_vec<F>(&self, len: usize, g: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        let values: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|i| g(self.node(i)))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(len);
        let mut column = vec![0.0; values.len()];
        for k in 0..len {
            for (i, v) in values.iter().enumerate() {
                if v.len() != len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: v.len(),
                    });
                }
                if !v[k].is_finite() {
                    return Err(non_finite(format!("vector integrand at node {i}")));
                }
                column[i] = v[k] * self.weights[i];
            }
            out.push(pairwise_sum(&column));
        }
        Ok(out)
    }

    /// Accumulates `Σ_i w_i g(x_i)` for an integrand of length `len` that
    /// writes its weighted contribution into a buffer. Nodes are processed in
    /// fixed-size chunks whose partial sums are combined pairwise in index
    /// order, so the result does not depend on the thread count.
    pub fn accumulate<F>(&self, len: usize, g: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64], f64, &mut [f64]) -> Result<()> + Sync,
    {
        const CHUNK: usize = 64;
        let chunks = self.len().div_ceil(CHUNK);
        let partials: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; len];
                for i in c * CHUNK..((c + 1) * CHUNK).min(self.len()) {
                    g(self.node(i), self.weights[i], &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let out = combine_pairwise(&partials, len);
        if let Some(k) = out.iter().position(|v| !v.is_finite()) {
            return Err(non_finite(format!("accumulated integrand component {k}")));
        }
        Ok(out)
    }

    pub(crate) fn evaluate<F>(&self, g: &F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let values: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| g(self.node(i)))
            .collect::<Result<_>>()?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(non_finite(format!("integrand at node {i}")));
        }
        Ok(values)
    }

    /// The rule with weights `w_i exp(log_weight(x_i))`, renormalized to sum
    /// to one. Returns the new rule and `log Σ w_i exp(log_weight(x_i))`.
    pub fn reweighted<F>(&self, log_weight: F) -> Result<(QuadratureRule, f64)>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let logs: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                if self.weights[i] > 0.0 {
                    self.weights[i].ln() + log_weight(self.node(i))
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(non_finite("log weight"));
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeight { normalizer: 0.0 });
        }
        let scaled: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total = pairwise_sum(&scaled);
        let log_normalizer = max + total.ln();
        if log_normalizer < 1e-300f64.ln() {
            return Err(Error::DegenerateWeight {
                normalizer: log_normalizer.exp(),
            });
        }
        let weights = scaled.iter().map(|s| s / total).collect();
        Ok((
            QuadratureRule {
                dim: self.dim,
                nodes: Arc::clone(&self.nodes),
                weights,
            },
            log_normalizer,
        ))
    }
}

/// Pairwise (cascade) summation in index order; the split points depend only
/// on the length, so results are independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn combine_pairwise(parts: &[Vec<f64>], len: usize) -> Vec<f64> {
    match parts.len() {
        0 => vec![0.0; len],
        1 => parts[0].clone(),
        n => {
            let mut left = combine_pairwise(&parts[..n / 2], len);
            let right = combine_pairwise(&parts[n / 2..], len);
            left.iter_mut().zip(&right).for_each(|(a, b)| *a += b);
            left
        }
    }
}

/// One-dimensional Gauss-Hermite rule for the standard Gaussian, `level`
/// nodes in ascending order, weights summing to one. Exact on polynomials of
/// degree `<= 2 level - 1`.
pub fn gauss_hermite(level: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(level >= 1, "level must be positive");
    if level == 1 {
        return (vec![0.0], vec![1.0]);
    }
    // Golub-Welsch start, then Newton on the orthonormal recurrence.
    let jacobi = DMatrix::from_fn(level, level, |i, j| {
        if i + 1 == j {
            (j as f64).sqrt()
        } else if j + 1 == i {
            (i as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().cloned().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = vec![0.0; level];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..8 {
            let (hn, hn1) = orthonormal_hermite_pair(*x, level);
            let step = hn / ((level as f64).sqrt() * hn1);
            *x -= step;
            if step.abs() < 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, hn1) = orthonormal_hermite_pair(*x, level);
        *w = 1.0 / (level as f64 * hn1 * hn1);
    }
    // enforce exact symmetry
    for i in 0..level / 2 {
        let j = level - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if level % 2 == 1 {
        nodes[level / 2] = 0.0;
    }
    let total = pairwise_sum(&weights);
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// `(h_n(x), h_{n-1}(x))` with `h_k = He_k / sqrt(k!)`.
fn orthonormal_hermite_pair(x: f64, n: usize) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Tensor product of `dim` copies of the level-`level` Gauss-Hermite rule,
/// lexicographic node order with the last coordinate varying fastest.
pub fn tensor_hermite(dim: usize, level: usize) -> QuadratureRule {
    let (x1, w1) = gauss_hermite(level);
    let count = level.pow(dim as u32);
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    let mut digits = vec![0usize; dim];
    for _ in 0..count {
        let mut w = 1.0;
        for &k in &digits {
            nodes.push(x1[k]);
            w *= w1[k];
        }
        weights.push(w);
        for axis in (0..dim).rev() {
            digits[axis] += 1;
            if digits[axis] < level {
                break;
            }
            digits[axis] = 0;
        }
    }
    let total = pairwise_sum(&weights);
    weights.iter_mut().for_each(|w| *w /= total);
    QuadratureRule {
        dim,
        nodes: nodes.into(),
        weights,
    }
}

/// `samples` i.i.d. standard Gaussian draws with equal weights, reproducible
/// from `seed`.
pub fn monte_carlo(dim: usize, samples: usize, seed: u64) -> QuadratureRule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<f64> = (0..samples * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let weights = vec![1.0 / samples as f64; samples];
    QuadratureRule {
        dim,
        nodes: nodes.into(),
        weights,
    }
}
