//! Probabilists' Hermite polynomials and multi-index bookkeeping.
//!
//! `He_0 = 1`, `He_1 = x`, `He_{k+1} = x He_k - k He_{k-1}`. They are
//! orthogonal under the standard Gaussian with `E[He_j He_k] = k! δ_jk`, and
//! `He_k' = k He_{k-1}`.

use serde::{Deserialize, Serialize};

/// `He_0(x), ..., He_n(x)`.
pub fn hermite_values(x: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(x);
    for k in 1..n {
        let next = x * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// `k! / (k - r)!`, zero when `r > k`.
pub fn falling_factorial(k: usize, r: usize) -> f64 {
    if r > k {
        return 0.0;
    }
    ((k - r + 1)..=k).fold(1.0, |acc, j| acc * j as f64)
}

pub fn factorial(k: usize) -> f64 {
    falling_factorial(k, k)
}

/// The `r`-th derivative of `He_k`, read off a table from [`hermite_values`].
#[inline]
pub fn hermite_derivative(table: &[f64], k: usize, r: usize) -> f64 {
    if r > k {
        0.0
    } else {
        falling_factorial(k, r) * table[k - r]
    }
}

/// A multi-index `α = (α_1, ..., α_d)` naming the tensor Hermite polynomial
/// `He_α(x) = Π He_{α_i}(x_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `α! = Π α_i!`, the squared Gaussian norm of `He_α`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| factorial(k)).product()
    }

    pub fn unit(dim: usize, axis: usize, power: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = power;
        MultiIndex(v)
    }
}

/// All multi-indices of dimension `dim` with `min_order <= |α| <= max_order`,
/// graded by order and reverse-lexicographic within an order
/// (so `x_1` before `x_2`, `x_1^2` before `x_1 x_2`).
pub fn multi_indices(dim: usize, min_order: usize, max_order: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for order in min_order..=max_order {
        let mut current = vec![0usize; dim];
        compositions(order, 0, &mut current, &mut out);
    }
    out
}

fn compositions(remaining: usize, axis: usize, current: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    let dim = current.len();
    if axis + 1 == dim {
        current[axis] = remaining;
        out.push(MultiIndex(current.clone()));
        current[axis] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[axis] = k;
        compositions(remaining - k, axis + 1, current, out);
    }
    current[axis] = 0;
}

/// Per-coordinate Hermite tables at one point, enough to evaluate any
/// `He_α` with `α_i <= degree` and its derivatives up to third order.
#[derive(Debug, Clone)]
pub struct PointTables {
    tables: Vec<Vec<f64>>,
}

impl PointTables {
    pub fn new(x: &[f64], degree: usize) -> Self {
        Self {
            tables: x.iter().map(|&xi| hermite_values(xi, degree)).collect(),
        }
    }

    /// `∂^orders He_α` where `orders[i]` counts derivatives in coordinate `i`.
    pub fn derivative(&self, alpha: &MultiIndex, orders: &[usize]) -> f64 {
        let mut acc = 1.0;
        for (i, (&k, &r)) in alpha.0.iter().zip(orders).enumerate() {
            let factor = hermite_derivative(&self.tables[i], k, r);
            if factor == 0.0 {
                return 0.0;
            }
            acc *= factor;
        }
        acc
    }

    pub fn value(&self, alpha: &MultiIndex) -> f64 {
        alpha.0.iter().enumerate().map(|(i, &k)| self.tables[i][k]).product()
    }

    /// Value, gradient and Hessian of `He_α` in one sweep.
    pub fn jet2(&self, alpha: &MultiIndex) -> (f64, Vec<f64>, Vec<f64>) {
        let d = alpha.dim();
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut orders = vec![0usize; d];
        let value = self.value(alpha);
        for i in 0..d {
            if alpha.0[i] == 0 {
                continue;
            }
            orders[i] += 1;
            grad[i] = self.derivative(alpha, &orders);
            for j in i..d {
                orders[j] += 1;
                let h = self.derivative(alpha, &orders);
                hess[i * d + j] = h;
                hess[j * d + i] = h;
                orders[j] -= 1;
            }
            orders[i] -= 1;
        }
        (value, grad, hess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_polynomials() {
        let x = 1.7;
        let h = hermite_values(x, 4);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[1], x);
        assert!((h[2] - (x * x - 1.0)).abs() < 1e-14);
        assert!((h[3] - (x.powi(3) - 3.0 * x)).abs() < 1e-13);
        assert!((h[4] - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn derivative_rule() {
        let x = -0.4;
        let h = hermite_values(x, 5);
        // He_5' = 5 He_4, He_5''' = 60 He_2
        assert!((hermite_derivative(&h, 5, 1) - 5.0 * h[4]).abs() < 1e-14);
        assert!((hermite_derivative(&h, 5, 3) - 60.0 * h[2]).abs() < 1e-12);
        assert_eq!(hermite_derivative(&h, 2, 3), 0.0);
    }

    #[test]
    fn index_enumeration_is_graded() {
        let idx = multi_indices(2, 1, 2);
        let raw: Vec<Vec<usize>> = idx.into_iter().map(|m| m.0).collect();
        assert_eq!(raw, vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        // C(d + p, p) - 1 without the constant
        assert_eq!(multi_indices(3, 1, 4).len(), 34);
        assert_eq!(multi_indices(6, 1, 3).len(), 83);
    }

    #[test]
    fn tensor_jet_matches_closed_form() {
        // He_(2,1)(x) = (x1^2 - 1) x2
        let x = [0.3, -1.2];
        let t = PointTables::new(&x, 3);
        let (v, g, h) = t.jet2(&MultiIndex(vec![2, 1]));
        assert!((v - (x[0] * x[0] - 1.0) * x[1]).abs() < 1e-14);
        assert!((g[0] - 2.0 * x[0] * x[1]).abs() < 1e-14);
        assert!((g[1] - (x[0] * x[0] - 1.0)).abs() < 1e-14);
        assert!((h[0] - 2.0 * x[1]).abs() < 1e-14);
        assert!((h[1] - 2.0 * x[0]).abs() < 1e-14);
        assert_eq!(h[1], h[2]);
        assert_eq!(h[3], 0.0);
    }
}
