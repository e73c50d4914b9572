//! Activation functions, their Gaussian moments and Hermite decompositions.
//!
//! Every activation has the form `σ(z) = base(scale·z) + shift`, except
//! `affine`, which is `a·z + b + shift`. Moments are taken under `z ~ N(0, 1)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_hermite::hermite_orthonormal_all;
use crate::integrator::GaussianIntegrator;
use crate::stats::CompensatedSum;

/// Default Hermite truncation degree.
pub const DEFAULT_TRUNCATION: usize = 30;

/// Coefficients below this magnitude count as zero when classifying.
pub const ZERO_COEFFICIENT_TOL: f64 = 1e-8;

/// Custom tables are tabulated on `[−TABLE_RANGE, TABLE_RANGE]`.
pub const TABLE_RANGE: f64 = 8.0;

const DEGENERATE_SECOND_MOMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Gelu,
    Tanh,
    Identity,
    Affine,
    Table,
}

/// A scalar activation function, square-integrable under the Gaussian measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub id: String,
    pub kind: ActivationKind,
    #[serde(default = "unit")]
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub affine_a: f64,
    #[serde(default)]
    pub affine_b: f64,
    /// Table abscissae (kind = table only), strictly increasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knots: Vec<f64>,
    /// Table ordinates, one per knot.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

fn unit() -> f64 {
    1.0
}

impl ActivationSpec {
    fn plain(id: &str, kind: ActivationKind) -> Self {
        Self {
            id: id.to_owned(),
            kind,
            scale: 1.0,
            shift: 0.0,
            affine_a: 0.0,
            affine_b: 0.0,
            knots: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn relu() -> Self {
        Self::plain("relu", ActivationKind::Relu)
    }

    pub fn gelu() -> Self {
        Self::plain("gelu", ActivationKind::Gelu)
    }

    pub fn tanh() -> Self {
        Self::plain("tanh", ActivationKind::Tanh)
    }

    pub fn identity() -> Self {
        Self::plain("identity", ActivationKind::Identity)
    }

    /// `a·z + b`.
    pub fn affine(a: f64, b: f64) -> Self {
        Self {
            affine_a: a,
            affine_b: b,
            ..Self::plain(&format!("affine({a},{b})"), ActivationKind::Affine)
        }
    }

    /// Piecewise-linear lookup table with constant extrapolation.
    pub fn table(id: &str, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let spec = Self {
            knots,
            values,
            ..Self::plain(id, ActivationKind::Table)
        };
        spec.check_parameters()?;
        Ok(spec)
    }

    /// Tabulates `f` on `knots` evenly spaced points of `[−8, 8]`.
    pub fn tabulate<F: Fn(f64) -> f64>(id: &str, knots: usize, f: F) -> Result<Self> {
        if knots < 2 {
            return Err(Error::invalid("a table needs at least two knots"));
        }
        let step = 2.0 * TABLE_RANGE / (knots - 1) as f64;
        let xs: Vec<f64> = (0..knots).map(|i| -TABLE_RANGE + step * i as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::table(id, xs, ys)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Looks up a registry entry by id.
    pub fn by_name(name: &str) -> Result<Self> {
        registry()
            .into_iter()
            .find(|s| s.id == name)
            .ok_or_else(|| {
                let known: Vec<String> = registry().into_iter().map(|s| s.id).collect();
                Error::invalid(format!(
                    "unknown activation '{name}' (known: {})",
                    known.join(", ")
                ))
            })
    }

    /// `σ(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        let y = self.scale * z;
        let base = match self.kind {
            ActivationKind::Relu => y.max(0.0),
            ActivationKind::Gelu => y * standard_normal_cdf(y),
            ActivationKind::Tanh => y.tanh(),
            ActivationKind::Identity => y,
            ActivationKind::Affine => self.affine_a * z + self.affine_b,
            ActivationKind::Table => interpolate(&self.knots, &self.values, y),
        };
        base + self.shift
    }

    /// Points in `z` where `σ` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ActivationKind::Relu if self.scale != 0.0 => vec![0.0],
            ActivationKind::Table if self.scale != 0.0 => {
                self.knots.iter().map(|t| t / self.scale).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Whether `σ` is odd up to its shift, so `⟨σ⟩ = shift` exactly.
    fn is_odd_up_to_shift(&self) -> bool {
        matches!(self.kind, ActivationKind::Tanh | ActivationKind::Identity)
            || (self.kind == ActivationKind::Affine && self.affine_b == 0.0)
    }

    /// Structural checks: finite parameters, well-formed tables.
    pub fn check_parameters(&self) -> Result<()> {
        let params = [self.scale, self.shift, self.affine_a, self.affine_b];
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("activation '{}' has non-finite parameters", self.id)));
        }
        if self.kind == ActivationKind::Table {
            if self.knots.len() < 2 || self.knots.len() != self.values.len() {
                return Err(Error::invalid(format!(
                    "table activation '{}' needs at least two knots and one value per knot",
                    self.id
                )));
            }
            if self.knots.iter().chain(&self.values).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("table activation '{}' has non-finite entries", self.id)));
            }
            if self.knots.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "table activation '{}' knots must be strictly increasing",
                    self.id
                )));
            }
        } else if !self.knots.is_empty() || !self.values.is_empty() {
            return Err(Error::invalid(format!(
                "activation '{}' carries table data but is not a table",
                self.id
            )));
        }
        Ok(())
    }

    /// Full validation: structure, non-degeneracy, and agreement of `⟨σ²⟩`
    /// at two integrator resolutions within `1e−6`.
    pub fn validate(&self) -> Result<()> {
        self.check_parameters()?;
        let coarse = GaussianIntegrator::default();
        let fine = coarse.refined();
        let a = second_moment_with(self, &coarse)?;
        let b = second_moment_with(self, &fine)?;
        if (a - b).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "activation '{}': <sigma^2> is unstable under refinement ({a} vs {b}); \
                 it may not be square-integrable",
                self.id
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// The built-in activations.
pub fn registry() -> Vec<ActivationSpec> {
    let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
    let gelu_mean = 0.5 / PI.sqrt();
    vec![
        ActivationSpec::relu(),
        ActivationSpec::gelu(),
        ActivationSpec::tanh(),
        ActivationSpec::tanh().with_scale(4.0).with_id("tanh4x"),
        ActivationSpec::relu().with_shift(-inv_sqrt_2pi).with_id("relu-shifted"),
        ActivationSpec::gelu().with_shift(-gelu_mean).with_id("gelu-shifted"),
        ActivationSpec::identity(),
        ActivationSpec::affine(1.0, 1.0).with_id("affine-1-1"),
    ]
}

/// `Φ(y)` via the complementary error function.
pub fn standard_normal_cdf(y: f64) -> f64 {
    0.5 * libm::erfc(-y * FRAC_1_SQRT_2)
}

fn interpolate(knots: &[f64], values: &[f64], y: f64) -> f64 {
    let last = knots.len() - 1;
    if y <= knots[0] {
        return values[0];
    }
    if y >= knots[last] {
        return values[last];
    }
    let hi = knots.partition_point(|&t| t <= y).min(last);
    let lo = hi - 1;
    let t = (y - knots[lo]) / (knots[hi] - knots[lo]);
    values[lo] + t * (values[hi] - values[lo])
}

/// Truncated Hermite expansion `σ ≈ Σ aₙ Heₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSeries {
    pub activation_id: String,
    /// `a_0 ..= a_N`.
    pub coefficients: Vec<f64>,
    pub truncation_degree: usize,
    /// `⟨σ²⟩ − Σ aₙ²·n!`, the mass beyond degree `N`.
    pub residual: f64,
    /// `⟨σ²⟩`.
    pub second_moment: f64,
}

impl HermiteSeries {
    /// Builds a series directly from coefficients, e.g. for analytic checks.
    pub fn from_coefficients(activation_id: &str, coefficients: Vec<f64>, second_moment: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("series needs at least one coefficient"));
        }
        if !(second_moment > DEGENERATE_SECOND_MOMENT) {
            return Err(Error::invalid("series second moment must be positive"));
        }
        let series = Self {
            activation_id: activation_id.to_owned(),
            truncation_degree: coefficients.len() - 1,
            residual: 0.0,
            coefficients,
            second_moment,
        };
        let residual = second_moment - series.captured_mass();
        Ok(Self { residual, ..series })
    }

    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    /// `aₙ²·n!` for every retained degree.
    pub fn masses(&self) -> impl Iterator<Item = f64> + '_ {
        let mut fact = 1.0;
        self.coefficients.iter().enumerate().map(move |(n, a)| {
            if n > 0 {
                fact *= n as f64;
            }
            a * a * fact
        })
    }

    /// `Σ_{n≤N} aₙ²·n!`.
    pub fn captured_mass(&self) -> f64 {
        self.masses().collect::<CompensatedSum>().value()
    }
}

/// Activation class under the zero-mean criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationClass {
    ZeroMeanNonlinear,
    NonzeroMeanNonlinear,
    Affine,
    Linear,
}

impl ActivationClass {
    pub fn is_nonlinear(self) -> bool {
        matches!(self, Self::ZeroMeanNonlinear | Self::NonzeroMeanNonlinear)
    }
}

fn mean_with(spec: &ActivationSpec, integrator: &GaussianIntegrator) -> Result<f64> {
    spec.check_parameters()?;
    if spec.is_odd_up_to_shift() {
        return Ok(spec.shift);
    }
    integrator.expect_1d(|z| spec.eval(z), &spec.breakpoints())
}

fn second_moment_with(spec: &ActivationSpec, integrator: &GaussianIntegrator) -> Result<f64> {
    spec.check_parameters()?;
    let m2 = integrator.expect_1d(|z| spec.eval(z).powi(2), &spec.breakpoints())?;
    if m2 <= DEGENERATE_SECOND_MOMENT {
        return Err(Error::invalid(format!(
            "activation '{}' is degenerate: <sigma^2> = {m2:e}",
            spec.id
        )));
    }
    Ok(m2)
}

/// `⟨σ(z)⟩`, which is also the Hermite coefficient `a_0`.
pub fn gaussian_mean(spec: &ActivationSpec) -> Result<f64> {
    mean_with(spec, &GaussianIntegrator::default())
}

/// `⟨σ(z)²⟩`; rejects values `≤ 1e−12` as a degenerate activation.
pub fn gaussian_second_moment(spec: &ActivationSpec) -> Result<f64> {
    second_moment_with(spec, &GaussianIntegrator::default())
}

/// `aₙ = ⟨σ·Heₙ⟩/n!` for `n = 0..=degree`.
pub fn hermite_coefficients(spec: &ActivationSpec, degree: usize) -> Result<HermiteSeries> {
    hermite_coefficients_with(spec, degree, &GaussianIntegrator::default())
}

pub fn hermite_coefficients_with(
    spec: &ActivationSpec,
    degree: usize,
    integrator: &GaussianIntegrator,
) -> Result<HermiteSeries> {
    if degree < 1 {
        return Err(Error::invalid("truncation degree must be at least 1"));
    }
    let rule = integrator.rule(&spec.breakpoints());
    if 3 * degree > 2 * rule.order() {
        return Err(Error::invalid(format!(
            "truncation degree {degree} is too high for a {}-node rule",
            rule.order()
        )));
    }
    let second_moment = second_moment_with(spec, integrator)?;

    // Project onto the orthonormal polynomials pₙ = Heₙ/√(n!), then rescale.
    let mut sums = vec![CompensatedSum::new(); degree + 1];
    let mut table = vec![0.0; degree + 1];
    for (x, w) in rule.iter() {
        let v = spec.eval(x);
        if !v.is_finite() {
            return Err(Error::non_finite(format!("activation '{}' is {v} at {x}", spec.id)));
        }
        hermite_orthonormal_all(x, &mut table);
        for (acc, p) in sums.iter_mut().zip(&table) {
            acc.add(w * v * p);
        }
    }
    let mut coefficients = Vec::with_capacity(degree + 1);
    let mut captured = CompensatedSum::new();
    let mut sqrt_fact = 1.0;
    for (n, acc) in sums.iter().enumerate() {
        if n > 0 {
            sqrt_fact *= (n as f64).sqrt();
        }
        let c = acc.value();
        captured.add(c * c);
        coefficients.push(c / sqrt_fact);
    }
    if spec.is_odd_up_to_shift() {
        coefficients[0] = spec.shift;
    }
    Ok(HermiteSeries {
        activation_id: spec.id.clone(),
        coefficients,
        truncation_degree: degree,
        residual: second_moment - captured.value(),
        second_moment,
    })
}

/// Returns `σ − ⟨σ⟩`. Activations already centred to rounding are returned unchanged.
pub fn make_zero_mean(spec: &ActivationSpec) -> Result<ActivationSpec> {
    let mean = gaussian_mean(spec)?;
    if mean.abs() <= 1e-14 {
        return Ok(spec.clone());
    }
    let mut out = spec.clone();
    if out.kind == ActivationKind::Affine {
        out.affine_b -= mean;
    } else {
        out.shift -= mean;
    }
    if !out.id.ends_with("-shifted") {
        out.id = format!("{}-shifted", out.id);
    }
    Ok(out)
}

/// Classifies by which Hermite coefficients are non-negligible.
pub fn classify(spec: &ActivationSpec, series: &HermiteSeries) -> Result<ActivationClass> {
    if series.truncation_degree < 3 {
        return Err(Error::invalid("classification needs a series of degree at least 3"));
    }
    if series.residual > 0.5 * series.second_moment {
        return Err(Error::inconclusive(format!(
            "activation '{}': truncation at degree {} leaves {:.3e} of <sigma^2> = {:.3e} unexplained",
            spec.id, series.truncation_degree, series.residual, series.second_moment
        )));
    }
    let big = |a: f64| a.abs() > ZERO_COEFFICIENT_TOL;
    let higher = series.coefficients[2..].iter().any(|&a| big(a))
        || series.residual > ZERO_COEFFICIENT_TOL * ZERO_COEFFICIENT_TOL * series.second_moment.max(1.0);
    let zero_mean = !big(series.mean());
    Ok(match (higher, zero_mean) {
        (true, true) => ActivationClass::ZeroMeanNonlinear,
        (true, false) => ActivationClass::NonzeroMeanNonlinear,
        (false, true) if big(series.coefficients[1]) => ActivationClass::Linear,
        (false, _) => ActivationClass::Affine,
    })
}
