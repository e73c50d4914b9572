//! Probabilists' Hermite polynomials and Gauss–Hermite expectations under the
//! standard Gaussian measure.
//!
//! Rules are normalized to the probability weight `φ(x) = e^{-x²/2}/√(2π)`, so
//! `Σ wᵢ f(xᵢ) ≈ ⟨f(z)⟩` with `z ~ N(0, 1)`. Two-dimensional expectations over
//! a unit-diagonal covariance `[[1, k], [k, 1]]` whiten the pair as
//! `z₁ = u₁, z₂ = k·u₁ + √(1−k²)·u₂`, so no covariance matrix is ever inverted
//! and `|k| = 1` degenerates cleanly to a one-dimensional sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::CompensatedSum;

/// Default number of Gauss–Hermite nodes.
pub const DEFAULT_ORDER: usize = 128;

/// Largest order `make_rule` accepts.
pub const MAX_ORDER: usize = 512;

/// `He_n(x)` by the three-term recurrence `He_{n+1} = x·He_n − n·He_{n−1}`.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for j in 1..n {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[n] = He_n(x)/√(n!)` for `n = 0..out.len()`.
///
/// The normalized polynomials are orthonormal under the Gaussian measure and
/// stay representable far beyond the degrees where `n!` overflows.
pub fn hermite_orthonormal_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (x * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
    }
}

/// `n!` as a float (exact up to 22!).
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// A quadrature rule for the standard Gaussian probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss–Hermite rule with `order` nodes, capped at [`MAX_ORDER`].
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        Self::gauss_hermite_with_cap(order, MAX_ORDER)
    }

    pub fn gauss_hermite_with_cap(order: usize, cap: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("quadrature order must be at least 1"));
        }
        if order > cap {
            return Err(Error::invalid(format!(
                "quadrature order {order} exceeds the configured cap {cap}"
            )));
        }
        let nodes = hermite_nodes(order)?;
        let mut weights: Vec<f64> = nodes.iter().map(|&x| christoffel_weight(x, order)).collect();
        let mut nodes = nodes;
        symmetrize(&mut nodes, &mut weights);
        let total: CompensatedSum = weights.iter().copied().collect();
        let total = total.value();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    /// Builds a rule from explicit nodes and probability weights.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::invalid("rule needs equally many nodes and weights"));
        }
        if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("rule nodes and weights must be finite"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("rule weights must be non-negative"));
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Hermite rule for the standard Gaussian with `order` nodes.
pub fn make_rule(order: usize) -> Result<QuadratureRule> {
    QuadratureRule::gauss_hermite(order)
}

/// `⟨f(z)⟩ ≈ Σ wᵢ f(xᵢ)`.
pub fn expect_1d<F>(f: F, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut acc = CompensatedSum::new();
    for (x, w) in rule.iter() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::non_finite(format!("integrand is {v} at node {x}")));
        }
        acc.add(w * v);
    }
    Ok(acc.value())
}

/// Off-diagonal entry of a unit-diagonal 2×2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CorrelationCoefficient(f64);

impl CorrelationCoefficient {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k.abs() > 1.0 {
            return Err(Error::invalid(format!("correlation {k} is outside [-1, 1]")));
        }
        Ok(Self(k))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `√(1 − k²)`, the whitening coefficient of the second coordinate.
    pub fn complement(self) -> f64 {
        ((1.0 - self.0) * (1.0 + self.0)).max(0.0).sqrt()
    }
}

impl TryFrom<f64> for CorrelationCoefficient {
    type Error = Error;

    fn try_from(k: f64) -> Result<Self> {
        Self::new(k)
    }
}

impl From<CorrelationCoefficient> for f64 {
    fn from(k: CorrelationCoefficient) -> f64 {
        k.0
    }
}

/// `⟨f(z₁, z₂)⟩_Σ` with `Σ = [[1, k], [k, 1]]`, over the product rule in the
/// whitened coordinates.
pub fn expect_2d_correlated<F>(f: F, k: CorrelationCoefficient, rule: &QuadratureRule) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let kv = k.value();
    let s = k.complement();
    if s == 0.0 {
        return expect_1d(|x| f(x, kv * x), rule);
    }
    let mut acc = CompensatedSum::new();
    for (u1, w1) in rule.iter() {
        let mut inner = CompensatedSum::new();
        for (u2, w2) in rule.iter() {
            let v = f(u1, kv * u1 + s * u2);
            if !v.is_finite() {
                return Err(Error::non_finite(format!(
                    "integrand is {v} at whitened node ({u1}, {u2})"
                )));
            }
            inner.add(w2 * v);
        }
        acc.add(w1 * inner.value());
    }
    Ok(acc.value())
}

/// Closed form `⟨He_n(z₁) He_m(z₂)⟩_Σ = δ_{nm}·n!·kⁿ`.
pub fn mehler_moment(n: usize, m: usize, k: CorrelationCoefficient) -> f64 {
    if n != m {
        return 0.0;
    }
    factorial(n) * k.value().powi(n as i32)
}

/// Eigenvalues of the Jacobi matrix (zero diagonal, off-diagonal `√j`),
/// refined by Newton steps on the orthonormal recurrence.
fn hermite_nodes(order: usize) -> Result<Vec<f64>> {
    let mut diag = vec![0.0; order];
    let mut off: Vec<f64> = (1..=order).map(|j| (j as f64).sqrt()).collect();
    off[order - 1] = 0.0;
    tridiagonal_eigenvalues(&mut diag, &mut off)?;
    diag.sort_by(f64::total_cmp);
    for x in &mut diag {
        for _ in 0..3 {
            let (p, dp) = orthonormal_value_and_derivative(*x, order);
            if !(p.is_finite() && dp.is_finite()) || dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    Ok(diag)
}

/// `(p_n(x), p_n'(x))` with `p_n = He_n/√(n!)`, using `p_n' = √n·p_{n−1}`.
fn orthonormal_value_and_derivative(x: f64, n: usize) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..n {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, (n as f64).sqrt() * prev)
}

/// `1/Σ_{j<n} p_j(x)²`; zero where the sum overflows (the weight underflows anyway).
fn christoffel_weight(x: f64, n: usize) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut acc = CompensatedSum::new();
    for j in 0..n {
        acc.add(cur * cur);
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    let total = acc.value();
    if total.is_finite() {
        1.0 / total
    } else {
        0.0
    }
}

fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}

/// Implicit QL iteration for the eigenvalues of a symmetric tridiagonal matrix.
///
/// `off[i]` couples rows `i` and `i + 1`; the last entry is ignored.
/// Eigenvalues overwrite `diag`.
pub(crate) fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64]) -> Result<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let scale = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * scale {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 64 {
                return Err(Error::inconclusive("tridiagonal QL iteration did not converge"));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}
