//! Breakpoint-aware Gaussian expectations by composite Gauss–Legendre panels.
//!
//! Gauss–Hermite converges only algebraically for integrands with kinks (ReLU)
//! and slowly for steep ones with poles near the real axis (`tanh(4x)`). Here
//! the real line is truncated to `[−half_width, half_width]`, cut into panels of
//! at most `panel_width`, with extra cuts at every breakpoint, and each panel
//! gets a Gauss–Legendre rule. On every panel the integrand times the Gaussian
//! density is smooth, so the error is at rounding level for activations with
//! finitely many kinks.

use crate::error::{Error, Result};
use crate::gauss_hermite::{CorrelationCoefficient, QuadratureRule};
use crate::stats::CompensatedSum;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Composite Gauss–Legendre integrator for the standard Gaussian measure.
#[derive(Debug, Clone)]
pub struct GaussianIntegrator {
    half_width: f64,
    panel_width: f64,
    legendre_nodes: Vec<f64>,
    legendre_weights: Vec<f64>,
}

impl Default for GaussianIntegrator {
    fn default() -> Self {
        Self::new(16, 0.5, 10.0).expect("default integrator parameters are valid")
    }
}

impl GaussianIntegrator {
    /// `panel_nodes` Gauss–Legendre nodes on each panel of width at most
    /// `panel_width`, covering `[−half_width, half_width]`.
    pub fn new(panel_nodes: usize, panel_width: f64, half_width: f64) -> Result<Self> {
        if panel_nodes == 0 {
            return Err(Error::invalid("panel rule needs at least one node"));
        }
        if !(panel_width > 0.0 && half_width > 0.0 && panel_width.is_finite() && half_width.is_finite()) {
            return Err(Error::invalid("panel and truncation widths must be positive"));
        }
        let (legendre_nodes, legendre_weights) = gauss_legendre(panel_nodes);
        Ok(Self {
            half_width,
            panel_width,
            legendre_nodes,
            legendre_weights,
        })
    }

    /// Same panels, twice the nodes per panel. Used to check resolution.
    pub fn refined(&self) -> Self {
        Self::new(2 * self.legendre_nodes.len(), self.panel_width, self.half_width)
            .expect("refining a valid integrator")
    }

    pub fn panel_nodes(&self) -> usize {
        self.legendre_nodes.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// A probability rule with panel boundaries at each breakpoint.
    pub fn rule(&self, breakpoints: &[f64]) -> QuadratureRule {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        self.push_nodes(breakpoints, &mut nodes, &mut weights);
        QuadratureRule::from_parts(nodes, weights).expect("panel rules are finite and non-negative")
    }

    fn push_nodes(&self, breakpoints: &[f64], nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
        let edges = self.edges(breakpoints);
        nodes.reserve(edges.len() * self.legendre_nodes.len());
        weights.reserve(edges.len() * self.legendre_nodes.len());
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (t, w) in self.legendre_nodes.iter().zip(&self.legendre_weights) {
                let x = mid + half * t;
                nodes.push(x);
                weights.push(half * w * INV_SQRT_2PI * (-0.5 * x * x).exp());
            }
        }
    }

    fn edges(&self, breakpoints: &[f64]) -> Vec<f64> {
        let l = self.half_width;
        let panels = (2.0 * l / self.panel_width).ceil() as usize;
        let step = 2.0 * l / panels as f64;
        let mut edges: Vec<f64> = (0..=panels).map(|i| -l + step * i as f64).collect();
        edges.extend(breakpoints.iter().copied().filter(|b| b.is_finite() && b.abs() < l));
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));
        edges
    }

    /// `⟨f(z)⟩` where `f` is smooth between the given breakpoints.
    pub fn expect_1d<F>(&self, f: F, breakpoints: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        crate::gauss_hermite::expect_1d(f, &self.rule(breakpoints))
    }

    /// `⟨f(z₁, z₂)⟩_Σ` for `Σ = [[1, k], [k, 1]]`, where `f` is smooth away from
    /// the lines `z₁ = b` (`b ∈ breaks_first`) and `z₂ = b` (`b ∈ breaks_second`).
    ///
    /// Integrates in the whitened coordinates `z₁ = u₁, z₂ = k·u₁ + s·u₂`; for
    /// each outer node the inner panels are cut where `z₂` crosses a breakpoint.
    pub fn expect_2d_correlated<F>(
        &self,
        f: F,
        k: CorrelationCoefficient,
        breaks_first: &[f64],
        breaks_second: &[f64],
    ) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64,
    {
        let kv = k.value();
        let s = k.complement();
        if s == 0.0 {
            let mut breaks = breaks_first.to_vec();
            breaks.extend(breaks_second.iter().map(|b| b * kv));
            return self.expect_1d(|x| f(x, kv * x), &breaks);
        }
        let outer = self.rule(breaks_first);
        let shared_inner = breaks_second.is_empty().then(|| self.rule(&[]));
        let mut inner_nodes = Vec::new();
        let mut inner_weights = Vec::new();
        let mut cuts = Vec::with_capacity(breaks_second.len());
        let mut acc = CompensatedSum::new();
        for (u1, w1) in outer.iter() {
            let (nodes, weights): (&[f64], &[f64]) = match &shared_inner {
                Some(rule) => (rule.nodes(), rule.weights()),
                None => {
                    cuts.clear();
                    cuts.extend(breaks_second.iter().map(|b| (b - kv * u1) / s));
                    inner_nodes.clear();
                    inner_weights.clear();
                    self.push_nodes(&cuts, &mut inner_nodes, &mut inner_weights);
                    (&inner_nodes, &inner_weights)
                }
            };
            let mut inner = CompensatedSum::new();
            for (&u2, &w2) in nodes.iter().zip(weights) {
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
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn k(v: f64) -> CorrelationCoefficient {
        CorrelationCoefficient::new(v).unwrap()
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let integral = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert_abs_diff_eq!(integral(0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(integral(8), 2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(integral(9), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn panel_rule_is_a_probability_rule() {
        let rule = GaussianIntegrator::default().rule(&[0.0, 0.37]);
        let total: f64 = crate::stats::sum(rule.weights().iter().copied());
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        let second = crate::gauss_hermite::expect_1d(|z| z * z, &rule).unwrap();
        assert_abs_diff_eq!(second, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn relu_moments_with_kink_cut() {
        let g = GaussianIntegrator::default();
        let m1 = g.expect_1d(|z| z.max(0.0), &[0.0]).unwrap();
        assert_abs_diff_eq!(m1, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-14);
        let m2 = g.expect_1d(|z| z.max(0.0).powi(2), &[0.0]).unwrap();
        assert_abs_diff_eq!(m2, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn relu_kernel_matches_arc_cosine_closed_form() {
        let g = GaussianIntegrator::default();
        for kv in [-0.95, -0.3, 0.0, 0.4, 0.8, 0.999] {
            let got = g
                .expect_2d_correlated(|a, b| a.max(0.0) * b.max(0.0), k(kv), &[0.0], &[0.0])
                .unwrap();
            let exact = ((1.0 - kv * kv).sqrt() + (PI - kv.acos()) * kv) / (2.0 * PI);
            assert_abs_diff_eq!(got, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn degenerate_correlation_uses_line_integral() {
        let g = GaussianIntegrator::default();
        let f = |a: f64, b: f64| a.max(0.0) * (b.max(0.0) - 0.2);
        let two = g.expect_2d_correlated(f, k(1.0), &[0.0], &[0.0]).unwrap();
        let one = g.expect_1d(|x| f(x, x), &[0.0]).unwrap();
        assert_abs_diff_eq!(two, one, epsilon = 1e-15);
        let anti = g.expect_2d_correlated(|a, b| a.max(0.0) * b.max(0.0), k(-1.0), &[0.0], &[0.0]);
        assert_abs_diff_eq!(anti.unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn steep_tanh_converges_under_refinement() {
        let g = GaussianIntegrator::default();
        let f = |z: f64| (4.0 * z).tanh().powi(2);
        let a = g.expect_1d(f, &[]).unwrap();
        let b = g.refined().expect_1d(f, &[]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        assert_abs_diff_eq!(a, 0.805_399_279_463_725_8, epsilon = 1e-12);
    }
}
