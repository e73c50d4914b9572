//! The layer-to-layer covariance map `𝒞`, its fixed points and flows.
//!
//! Under critical tuning every input keeps unit variance at every layer, so the
//! covariance of two inputs is a single number `k ∈ [−1, 1]` that evolves as
//! `k ↦ 𝒞(k) = ⟨σ(z₁)σ(z₂)⟩_Σ / ⟨σ(z)²⟩` with `Σ = [[1, k], [k, 1]]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{
    classify, gaussian_second_moment, ActivationClass, ActivationSpec, HermiteSeries,
};
use crate::error::{Error, Result};
use crate::gauss_hermite::CorrelationCoefficient;
use crate::integrator::GaussianIntegrator;
use crate::stats::{self, CompensatedSum};

/// Bisection stops once `|𝒞(k) − k|` is below this.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Fixed points at or below this are reported as zero.
pub const ZERO_FIXED_POINT: f64 = 1e-10;

/// Gap below which `𝒞(k) − k` is indistinguishable from quadrature noise.
const GAP_NOISE: f64 = 1e-12;

/// Bias and weight variances that keep every input at unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalHyperparams {
    pub c_b: f64,
    pub c_w_first: f64,
    pub c_w: f64,
}

impl CriticalHyperparams {
    pub fn for_activation(spec: &ActivationSpec) -> Result<Self> {
        Ok(Self {
            c_b: 0.0,
            c_w_first: 1.0,
            c_w: 1.0 / gaussian_second_moment(spec)?,
        })
    }

    /// Checks `c_b = 0`, `c_w_first = 1`, `c_w = 1/⟨σ²⟩` within `1e−10`.
    pub fn check(&self, spec: &ActivationSpec) -> Result<()> {
        let expected = Self::for_activation(spec)?;
        let ok = self.c_b == 0.0
            && (self.c_w_first - 1.0).abs() <= 1e-10
            && (self.c_w - expected.c_w).abs() <= 1e-10;
        if !ok {
            return Err(Error::invalid(format!(
                "hyperparameters {self:?} are not critical for '{}' (expected c_b = 0, \
                 c_w_first = 1, c_w = {})",
                spec.id, expected.c_w
            )));
        }
        Ok(())
    }

    /// Weight variance for layer `layer` (1-based).
    pub fn weight_variance(&self, layer: usize) -> f64 {
        if layer <= 1 {
            self.c_w_first
        } else {
            self.c_w
        }
    }
}

/// `(1/n₀)·Σ x1ⱼ·x2ⱼ` for two inputs normalized to `(1/n₀)·Σ xᵢ² = 1`.
pub fn initial_covariance(x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::invalid(format!(
            "input lengths differ ({} vs {})",
            x1.len(),
            x2.len()
        )));
    }
    if x1.is_empty() {
        return Err(Error::invalid("inputs must be non-empty"));
    }
    for (name, x) in [("first", x1), ("second", x2)] {
        let norm = mean_square(x);
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "{name} input is not normalized: (1/n0)*sum x^2 = {norm}"
            )));
        }
    }
    let n0 = x1.len() as f64;
    let dot = stats::sum(x1.iter().zip(x2).map(|(a, b)| a * b)) / n0;
    Ok(dot.clamp(-1.0, 1.0))
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    stats::sum(x.iter().map(|v| v * v)) / x.len() as f64
}

/// Anything that maps a layer's covariance to the next layer's.
pub trait KernelMap {
    fn apply(&self, k: f64) -> Result<f64>;

    fn activation_id(&self) -> &str;
}

/// `𝒞` evaluated by two-dimensional Gaussian quadrature.
#[derive(Debug, Clone)]
pub struct CovarianceMap {
    spec: ActivationSpec,
    integrator: GaussianIntegrator,
    breaks: Vec<f64>,
    second_moment: f64,
}

impl CovarianceMap {
    pub fn new(spec: &ActivationSpec) -> Result<Self> {
        Self::with_integrator(spec, GaussianIntegrator::default())
    }

    pub fn with_integrator(spec: &ActivationSpec, integrator: GaussianIntegrator) -> Result<Self> {
        spec.check_parameters()?;
        let breaks = spec.breakpoints();
        let second_moment = integrator.expect_1d(|z| spec.eval(z).powi(2), &breaks)?;
        if second_moment <= 1e-12 {
            return Err(Error::invalid(format!(
                "activation '{}' is degenerate: <sigma^2> = {second_moment:e}",
                spec.id
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            integrator,
            breaks,
            second_moment,
        })
    }

    pub fn spec(&self) -> &ActivationSpec {
        &self.spec
    }

    /// `⟨σ²⟩` with the same integrator the map uses.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// `⟨σ(z₁)σ(z₂)⟩_Σ` without the normalization.
    pub fn correlation(&self, k: CorrelationCoefficient) -> Result<f64> {
        let spec = &self.spec;
        self.integrator
            .expect_2d_correlated(|a, b| spec.eval(a) * spec.eval(b), k, &self.breaks, &self.breaks)
    }

    /// `𝒞(k)`.
    pub fn eval(&self, k: f64) -> Result<f64> {
        let kc = CorrelationCoefficient::new(k)?;
        if k == 1.0 {
            return Ok(1.0);
        }
        let c = self.correlation(kc)? / self.second_moment;
        clamp_unit(c, k)
    }
}

impl KernelMap for CovarianceMap {
    fn apply(&self, k: f64) -> Result<f64> {
        self.eval(k)
    }

    fn activation_id(&self) -> &str {
        &self.spec.id
    }
}

impl KernelMap for HermiteSeries {
    fn apply(&self, k: f64) -> Result<f64> {
        CorrelationCoefficient::new(k)?;
        clamp_unit(cmap_series(k, self), k)
    }

    fn activation_id(&self) -> &str {
        &self.activation_id
    }
}

fn clamp_unit(c: f64, k: f64) -> Result<f64> {
    if !c.is_finite() || c.abs() > 1.0 + 1e-9 {
        return Err(Error::non_finite(format!("covariance map returned {c} at k = {k}")));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// `𝒞(k)` for one activation by quadrature.
pub fn cmap_quadrature(k: f64, spec: &ActivationSpec) -> Result<f64> {
    CovarianceMap::new(spec)?.eval(k)
}

/// `(1/⟨σ²⟩)·Σ_{n≤N} aₙ²·n!·kⁿ`.
pub fn cmap_series(k: f64, series: &HermiteSeries) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut power = 1.0;
    for mass in series.masses() {
        acc.add(mass * power);
        power *= k;
    }
    acc.value() / series.second_moment
}

/// `𝒞′(k) = (1/⟨σ²⟩)·Σ_{n≥1} aₙ²·n!·n·k^{n−1}`.
pub fn cmap_derivative(k: f64, series: &HermiteSeries) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut power = 1.0;
    for (n, mass) in series.masses().enumerate().skip(1) {
        acc.add(mass * n as f64 * power);
        power *= k;
    }
    acc.value() / series.second_moment
}

/// Where the flow ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowClassification {
    /// Unique attractive fixed point at 0: outputs decorrelate.
    DecaysToZero,
    /// Attractive fixed point strictly inside `(0, 1)`.
    ConvergesPositive,
    /// Every covariance in `(−1, 1)` is driven to 1.
    DegenerateToOne,
    /// Linear activation: `𝒞(k) = k`, every covariance is a fixed point.
    Preserved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub activation: String,
    pub fixed_point: f64,
    pub derivative_at_fp: f64,
    pub classification: FlowClassification,
    /// Per-layer contraction factor `𝒞′(k*)` when it is below one.
    pub decay_rate: Option<f64>,
}

/// Locates the attractive fixed point of `𝒞` on `[0, 1]`.
///
/// Linear and affine activations are resolved in closed form. For nonlinear
/// ones, `𝒞(k) − k` is convex on `[0, 1]` and vanishes at 1, so the flow
/// degenerates to 1 exactly when `𝒞` never dips below the diagonal; otherwise
/// the dip starts at the unique fixed point in `[0, 1)`, found by bisection.
pub fn find_fixed_point(map: &CovarianceMap, series: &HermiteSeries) -> Result<FlowReport> {
    let spec = map.spec();
    let class = classify(spec, series)?;
    let activation = spec.id.clone();
    let m2 = series.second_moment;
    let a0sq = series.coefficients[0].powi(2);
    let a1sq = series.coefficients.get(1).map_or(0.0, |a| a * a);
    match class {
        ActivationClass::Linear => {
            return Ok(FlowReport {
                activation,
                fixed_point: 1.0,
                derivative_at_fp: 1.0,
                classification: FlowClassification::Preserved,
                decay_rate: None,
            })
        }
        ActivationClass::Affine => {
            // 𝒞(k) = (a²k + b²)/(a² + b²): fixed point 1, slope a²/(a² + b²).
            let slope = a1sq / (a0sq + a1sq);
            return Ok(FlowReport {
                activation,
                fixed_point: 1.0,
                derivative_at_fp: slope,
                classification: FlowClassification::DegenerateToOne,
                decay_rate: Some(slope),
            });
        }
        ActivationClass::ZeroMeanNonlinear | ActivationClass::NonzeroMeanNonlinear => {}
    }

    let gap = |k: f64| -> Result<f64> { Ok(map.eval(k)? - k) };

    // Partial sums of 𝒞′(1) only grow; the residual mass sits at degrees > N.
    let slope_at_one = cmap_derivative(1.0, series)
        + (series.truncation_degree + 1) as f64 * series.residual.max(0.0) / m2;
    let certified_above_one = slope_at_one > 1.0 + 1e-9;

    // The sub-diagonal set is an interval ending at 1, so probing k = 1 − 2^{−j}
    // finds it at every scale. A fixed point hiding within 2^{−20} of 1 is
    // reported as 1.
    let g0 = gap(0.0)?;
    let mut below: Option<f64> = None;
    let mut resolved_above = 0;
    for j in 1..=30 {
        let k = 1.0 - 0.5f64.powi(j);
        let g = gap(k)?;
        if g < -GAP_NOISE {
            below = Some(k);
            break;
        }
        if g > GAP_NOISE {
            resolved_above = j;
        }
    }

    let Some(hi) = below else {
        if certified_above_one || resolved_above < 20 {
            return Err(Error::inconclusive(format!(
                "activation '{activation}': cannot resolve whether C'(1) exceeds 1 \
                 (series lower bound {slope_at_one:.6}, no sub-diagonal point found)"
            )));
        }
        return Ok(FlowReport {
            activation,
            fixed_point: 1.0,
            derivative_at_fp: cmap_derivative(1.0, series),
            classification: FlowClassification::DegenerateToOne,
            decay_rate: None,
        });
    };

    let fixed_point = if g0 <= FIXED_POINT_TOL {
        0.0
    } else {
        bisect(gap, 0.0, hi)?
    };
    let derivative = cmap_derivative(fixed_point, series);
    if !(0.0..1.0).contains(&derivative) {
        return Err(Error::inconclusive(format!(
            "activation '{activation}': C'({fixed_point}) = {derivative} is not a contraction"
        )));
    }
    let classification = if fixed_point <= ZERO_FIXED_POINT {
        FlowClassification::DecaysToZero
    } else {
        FlowClassification::ConvergesPositive
    };
    Ok(FlowReport {
        activation,
        fixed_point,
        derivative_at_fp: derivative,
        classification,
        decay_rate: Some(derivative),
    })
}

/// Root of `g` in `[lo, hi]` given `g(lo) > 0 > g(hi)`.
fn bisect<G>(g: G, mut lo: f64, mut hi: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = g(mid)?;
        if v.abs() <= FIXED_POINT_TOL || hi - lo <= 1e-15 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Covariances `k₁ … k_L` with `k_ℓ = 𝒞^ℓ(k₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrajectory {
    pub activation_id: String,
    pub initial: f64,
    pub k_values: Vec<f64>,
}

impl KernelTrajectory {
    /// `(layer, k)` rows, starting with `(0, k₀)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        std::iter::once((0, self.initial)).chain(self.k_values.iter().copied().enumerate().map(|(i, k)| (i + 1, k)))
    }

    pub fn last(&self) -> f64 {
        self.k_values.last().copied().unwrap_or(self.initial)
    }
}

/// Iterates `𝒞` for `depth` layers from `k0 ∈ (−1, 1)`.
///
/// Checks at every step that negative covariances strictly increase and that
/// a trajectory never leaves `[0, 1]` once inside it.
pub fn iterate_flow<M: KernelMap + ?Sized>(k0: f64, map: &M, depth: usize) -> Result<KernelTrajectory> {
    if !k0.is_finite() || k0.abs() >= 1.0 {
        return Err(Error::invalid(format!(
            "initial covariance {k0} must lie strictly inside (-1, 1): inputs that are \
             scalar multiples of each other are excluded"
        )));
    }
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut k_values = Vec::with_capacity(depth);
    let mut prev = k0;
    for layer in 1..=depth {
        let next = map.apply(prev)?;
        if prev >= 0.0 && next < -1e-12 {
            return Err(Error::inconclusive(format!(
                "flow left [0, 1] at layer {layer}: {prev} -> {next}"
            )));
        }
        if prev < 0.0 && next < prev - 1e-12 {
            return Err(Error::inconclusive(format!(
                "negative covariance decreased at layer {layer}: {prev} -> {next}"
            )));
        }
        k_values.push(next);
        prev = next;
    }
    Ok(KernelTrajectory {
        activation_id: map.activation_id().to_owned(),
        initial: k0,
        k_values,
    })
}

/// Per-layer contraction factor from the log-linear tail of a decaying flow.
///
/// Fits `log|k_ℓ|` against `ℓ` by least squares over layers with
/// `1e−13 < |k_ℓ| < 0.1` and returns `e^{slope}`.
pub fn estimate_decay_rate(trajectory: &KernelTrajectory) -> Result<f64> {
    let points: Vec<(f64, f64)> = trajectory
        .rows()
        .filter(|&(_, k)| k.abs() < 0.1 && k.abs() > 1e-13)
        .map(|(layer, k)| (layer as f64, k.abs().ln()))
        .collect();
    if points.len() < 5 {
        return Err(Error::inconclusive(format!(
            "only {} usable tail points (need at least 5 with 1e-13 < |k| < 0.1)",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = stats::sum(points.iter().map(|p| p.0)) / n;
    let my = stats::sum(points.iter().map(|p| p.1)) / n;
    let sxy = stats::sum(points.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let sxx = stats::sum(points.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    let factor = (sxy / sxx).exp();
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::inconclusive(format!(
            "tail is not decaying (fitted factor {factor})"
        )));
    }
    Ok(factor)
}

/// `n` evenly spaced points of `[−1, 1]`.
pub fn figure1_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let step = 2.0 / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { 1.0 } else { -1.0 + step * i as f64 })
        .collect())
}

/// `(k, 𝒞(k))` over a grid, evaluated in parallel and returned in grid order.
pub fn figure1_curve(spec: &ActivationSpec, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if let Some(bad) = grid.iter().find(|k| !(k.abs() <= 1.0)) {
        return Err(Error::invalid(format!("grid value {bad} is outside [-1, 1]")));
    }
    let map = CovarianceMap::new(spec)?;
    grid.par_iter()
        .map(|&k| map.eval(k).map(|c| (k, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{hermite_coefficients, DEFAULT_TRUNCATION};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn series(spec: &ActivationSpec) -> HermiteSeries {
        hermite_coefficients(spec, DEFAULT_TRUNCATION).unwrap()
    }

    fn tanh4() -> ActivationSpec {
        ActivationSpec::by_name("tanh4x").unwrap()
    }

    fn relu_shifted() -> ActivationSpec {
        ActivationSpec::by_name("relu-shifted").unwrap()
    }

    #[test]
    fn critical_hyperparams() {
        let hp = CriticalHyperparams::for_activation(&ActivationSpec::relu()).unwrap();
        assert_eq!(hp.c_b, 0.0);
        assert_eq!(hp.c_w_first, 1.0);
        assert_abs_diff_eq!(hp.c_w, 2.0, epsilon = 1e-12);
        hp.check(&ActivationSpec::relu()).unwrap();
        let off = CriticalHyperparams { c_w: 1.0, ..hp };
        assert!(off.check(&ActivationSpec::relu()).is_err());
        assert_eq!(hp.weight_variance(1), 1.0);
        assert_eq!(hp.weight_variance(3), hp.c_w);
    }

    #[test]
    fn initial_covariance_examples() {
        let x = [1.0, -1.0, 1.0, 1.0];
        let y = [1.0, 1.0, -1.0, 1.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(initial_covariance(&x, &x).unwrap(), 1.0);
        assert_eq!(initial_covariance(&x, &[1.0, 1.0, 1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(initial_covariance(&x, &neg).unwrap(), -1.0);
        assert_eq!(initial_covariance(&x, &y).unwrap(), 0.0);
        assert!(initial_covariance(&x, &[1.0, 1.0]).is_err());
        assert!(initial_covariance(&[2.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn quadrature_map_examples() {
        let relu = ActivationSpec::relu();
        assert_eq!(cmap_quadrature(1.0, &relu).unwrap(), 1.0);
        assert_eq!(cmap_quadrature(1.0, &tanh4()).unwrap(), 1.0);
        assert_abs_diff_eq!(cmap_quadrature(0.0, &relu).unwrap(), 1.0 / PI, epsilon = 1e-13);
        assert_abs_diff_eq!(cmap_quadrature(0.0, &tanh4()).unwrap(), 0.0, epsilon = 1e-14);
        for k in [-0.8, -0.2, 0.3, 0.9] {
            let got = cmap_quadrature(k, &ActivationSpec::affine(2.0, 3.0)).unwrap();
            assert_abs_diff_eq!(got, (4.0 * k + 9.0) / 13.0, epsilon = 1e-12);
        }
        assert!(cmap_quadrature(1.5, &relu).is_err());
    }

    #[test]
    fn series_map_examples() {
        let relu = series(&ActivationSpec::relu());
        assert_abs_diff_eq!(cmap_series(0.0, &relu), 1.0 / PI, epsilon = 1e-12);
        let id = series(&ActivationSpec::identity());
        assert_abs_diff_eq!(cmap_series(0.37, &id), 0.37, epsilon = 1e-12);
        let tanh = ActivationSpec::tanh();
        assert_abs_diff_eq!(
            cmap_series(0.3, &series(&tanh)),
            cmap_quadrature(0.3, &tanh).unwrap(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn derivative_examples() {
        let tanh = series(&ActivationSpec::tanh());
        let a1 = tanh.coefficients[1];
        assert_abs_diff_eq!(cmap_derivative(0.0, &tanh), a1 * a1 / tanh.second_moment, epsilon = 1e-15);
        let id = series(&ActivationSpec::identity());
        for k in [-0.5, 0.0, 0.8] {
            assert_abs_diff_eq!(cmap_derivative(k, &id), 1.0, epsilon = 1e-12);
        }
        // Central difference of the quadrature map as an independent check.
        let map = CovarianceMap::new(&ActivationSpec::tanh()).unwrap();
        let h = 1e-5;
        let fd = (map.eval(0.4 + h).unwrap() - map.eval(0.4 - h).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(cmap_derivative(0.4, &tanh), fd, epsilon = 1e-6);
    }

    #[test]
    fn fixed_points_of_the_three_panels() {
        let relu = ActivationSpec::relu();
        let r = find_fixed_point(&CovarianceMap::new(&relu).unwrap(), &series(&relu)).unwrap();
        assert_eq!(r.classification, FlowClassification::DegenerateToOne);
        assert_eq!(r.fixed_point, 1.0);
        assert_eq!(r.decay_rate, None);

        let t = tanh4();
        let r = find_fixed_point(&CovarianceMap::new(&t).unwrap(), &series(&t)).unwrap();
        assert_eq!(r.classification, FlowClassification::DecaysToZero);
        assert_eq!(r.fixed_point, 0.0);
        let rate = r.decay_rate.unwrap();
        assert!((0.0..1.0).contains(&rate));

        let s = relu_shifted();
        let r = find_fixed_point(&CovarianceMap::new(&s).unwrap(), &series(&s)).unwrap();
        assert_eq!(r.classification, FlowClassification::DecaysToZero);
        assert!(r.fixed_point <= ZERO_FIXED_POINT);
    }

    #[test]
    fn gelu_converges_to_interior_fixed_point() {
        let g = ActivationSpec::gelu();
        let map = CovarianceMap::new(&g).unwrap();
        let r = find_fixed_point(&map, &series(&g)).unwrap();
        assert_eq!(r.classification, FlowClassification::ConvergesPositive);
        assert!(r.fixed_point > 0.0 && r.fixed_point < 1.0);
        assert!((map.eval(r.fixed_point).unwrap() - r.fixed_point).abs() <= 1e-10);
        let rate = r.decay_rate.unwrap();
        assert!((0.0..1.0).contains(&rate));
    }

    #[test]
    fn linear_and_affine_are_closed_form() {
        let id = ActivationSpec::identity();
        let r = find_fixed_point(&CovarianceMap::new(&id).unwrap(), &series(&id)).unwrap();
        assert_eq!(r.classification, FlowClassification::Preserved);
        let aff = ActivationSpec::affine(1.0, 1.0);
        let r = find_fixed_point(&CovarianceMap::new(&aff).unwrap(), &series(&aff)).unwrap();
        assert_eq!(r.classification, FlowClassification::DegenerateToOne);
        assert_eq!(r.fixed_point, 1.0);
        assert_abs_diff_eq!(r.decay_rate.unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn affine_flow_halves_the_gap_to_one() {
        let map = CovarianceMap::new(&ActivationSpec::affine(1.0, 1.0)).unwrap();
        let traj = iterate_flow(0.0, &map, 20).unwrap();
        for (layer, k) in traj.rows().skip(1) {
            assert_abs_diff_eq!(k, 1.0 - 0.5f64.powi(layer as i32), epsilon = 1e-12);
        }
    }

    #[test]
    fn relu_flow_increases_toward_one() {
        let map = CovarianceMap::new(&ActivationSpec::relu()).unwrap();
        let traj = iterate_flow(0.5, &map, 60).unwrap();
        assert!(traj.k_values.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.last() > 0.99);
    }

    #[test]
    fn tanh_flow_decays_at_the_linearized_rate() {
        let spec = ActivationSpec::tanh();
        let map = CovarianceMap::new(&spec).unwrap();
        let traj = iterate_flow(0.5, &map, 200).unwrap();
        assert!(traj.k_values.windows(2).all(|w| w[1] < w[0]));
        let expected = cmap_derivative(0.0, &series(&spec));
        let rate = estimate_decay_rate(&traj).unwrap();
        assert!((rate - expected).abs() <= 0.02 * expected, "{rate} vs {expected}");
    }

    #[test]
    fn shifted_relu_from_negative_side_rises_monotonically_to_zero() {
        let spec = relu_shifted();
        let map = CovarianceMap::new(&spec).unwrap();
        let traj = iterate_flow(-0.5, &map, 120).unwrap();
        assert!(traj.k_values.windows(2).all(|w| w[1] >= w[0]));
        assert!(traj.last().abs() < 1e-10);
        let expected = cmap_derivative(0.0, &series(&spec));
        let rate = estimate_decay_rate(&traj).unwrap();
        assert!((rate - expected).abs() <= 0.02 * expected, "{rate} vs {expected}");
    }

    #[test]
    fn iterate_flow_rejects_scalar_multiples() {
        let map = CovarianceMap::new(&ActivationSpec::tanh()).unwrap();
        for k0 in [1.0, -1.0, 1.2, f64::NAN] {
            let err = iterate_flow(k0, &map, 3).unwrap_err();
            assert!(matches!(err, Error::Invalid(_)));
        }
        assert!(iterate_flow(0.1, &map, 0).is_err());
    }

    #[test]
    fn decay_rate_of_exact_geometric_data() {
        let traj = KernelTrajectory {
            activation_id: "synthetic".into(),
            initial: 0.5,
            k_values: (1..=60).map(|l| 0.5 * 0.8f64.powi(l)).collect(),
        };
        assert_abs_diff_eq!(estimate_decay_rate(&traj).unwrap(), 0.8, epsilon = 1e-10);
        let short = KernelTrajectory {
            k_values: traj.k_values[..10].to_vec(),
            ..traj
        };
        assert!(matches!(estimate_decay_rate(&short), Err(Error::Inconclusive(_))));
    }

    #[test]
    fn figure_panels() {
        let grid = figure1_grid(5).unwrap();
        assert_eq!(grid, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let relu = figure1_curve(&ActivationSpec::relu(), &grid).unwrap();
        assert_eq!(relu[4], (1.0, 1.0));
        assert_abs_diff_eq!(relu[2].1, 1.0 / PI, epsilon = 1e-12);
        let t = figure1_curve(&tanh4(), &grid).unwrap();
        assert_abs_diff_eq!(t[2].1, 0.0, epsilon = 1e-14);
        assert!(figure1_grid(1).is_err());
        assert!(figure1_curve(&ActivationSpec::relu(), &[1.5]).is_err());
    }

    #[test]
    fn series_kernel_map_iterates() {
        let s = series(&ActivationSpec::tanh());
        let traj = iterate_flow(0.5, &s, 5).unwrap();
        assert_eq!(traj.activation_id, "tanh");
        assert_abs_diff_eq!(traj.k_values[0], cmap_series(0.5, &s), epsilon = 1e-15);
    }
}
