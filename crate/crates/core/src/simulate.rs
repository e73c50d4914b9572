//! Monte Carlo estimates over independent weight draws.
//!
//! Draws are the work units: each one is propagated on its own, reduced to a
//! small vector of per-draw statistics, and the vectors are combined serially
//! in draw order. Results are therefore bit-identical for any worker count.
//! Standard errors treat draws (not neurons) as the independent units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{mean_square, CovarianceMap};
use crate::network::{propagate, Dataset, NetworkConfig};
use crate::rng::fill_standard_normal;
use crate::stats::{self, CompensatedSum};

/// Fewest weight draws accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

/// Fewest pooled values per input for a kurtosis estimate.
pub const MIN_POOLED: usize = 100_000;

/// Runs `f` on a dedicated pool of `workers` threads (`0` = one per core).
pub fn with_workers<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} weight draws, got {samples}"
        )));
    }
    Ok(())
}

/// Evaluates `per_draw` for draws `0..samples` in parallel, in draw order.
pub(crate) fn over_draws<T, F>(samples: usize, per_draw: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..samples as u64).into_par_iter().map(&per_draw).collect()
}

fn column_mean_and_stderr(rows: &[Vec<f64>], column: usize) -> (f64, f64) {
    let values: Vec<f64> = rows.iter().map(|r| r[column]).collect();
    stats::mean_and_stderr(&values)
}

/// Upper-triangle index pairs `(α, β)` with `α ≤ β`.
fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect()
}

fn symmetric(m: usize, pairs: &[(usize, usize)], values: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]; m];
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let v = values(p);
        out[a][b] = v;
        out[b][a] = v;
    }
    out
}

/// Per-layer covariance estimates with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCovariance {
    pub layer: usize,
    /// Estimates of `E[zᵢ^α zᵢ^β]`, averaged over neurons `i` and draws.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Estimates of `E[z_{i₁}^α z_{i₂}^β]` over all neuron pairs `i₁ ≠ i₂`.
    pub cross_mean: Vec<Vec<f64>>,
    pub cross_stderr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    pub activation: String,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub layers: Vec<LayerCovariance>,
}

/// Excess kurtosis of one input's pooled final-layer preactivations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisEstimate {
    pub input: usize,
    pub excess_kurtosis: f64,
    pub standard_error: f64,
    pub pooled_values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub activation: String,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub per_input: Vec<KurtosisEstimate>,
}

/// Everything one simulation pass produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub covariance: EmpiricalCovariance,
    pub normality: NormalityReport,
}

struct DrawStats {
    /// Per layer: same-neuron products, then cross-neuron products, per pair.
    covariance: Vec<f64>,
    /// Per input: `[n, Σz, Σz², Σz³, Σz⁴]` of the final layer.
    power_sums: Vec<Vec<f64>>,
}

fn draw_stats(config: &NetworkConfig, dataset: &Dataset, draw: u64, pairs: &[(usize, usize)]) -> Result<DrawStats> {
    let n = config.width as f64;
    let mut covariance = Vec::with_capacity(2 * config.depth * pairs.len());
    let mut power_sums = Vec::new();
    propagate(config, draw, dataset, config.depth, |layer, z| {
        let totals: Vec<f64> = z.iter().map(|zs| stats::sum(zs.iter().copied())).collect();
        let same: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| stats::sum(z[a].iter().zip(&z[b]).map(|(x, y)| x * y)))
            .collect();
        covariance.extend(same.iter().map(|s| s / n));
        covariance.extend(
            pairs
                .iter()
                .zip(&same)
                .map(|(&(a, b), s)| (totals[a] * totals[b] - s) / (n * (n - 1.0))),
        );
        if layer == config.depth {
            power_sums = z.iter().map(|zs| power_sums_of(zs)).collect();
        }
        Ok(())
    })?;
    Ok(DrawStats { covariance, power_sums })
}

fn power_sums_of(values: &[f64]) -> Vec<f64> {
    let mut acc = [CompensatedSum::new(); 4];
    for &v in values {
        let v2 = v * v;
        acc[0].add(v);
        acc[1].add(v2);
        acc[2].add(v2 * v);
        acc[3].add(v2 * v2);
    }
    std::iter::once(values.len() as f64).chain(acc.iter().map(CompensatedSum::value)).collect()
}

/// Covariance and normality estimates from `samples` weight draws, in one pass.
pub fn simulate(config: &NetworkConfig, dataset: &Dataset, samples: usize) -> Result<SimulationOutput> {
    config.validate()?;
    check_samples(samples)?;
    let m = dataset.len();
    let pairs = pairs(m);
    let draws = over_draws(samples, |d| draw_stats(config, dataset, d, &pairs))?;

    let cov_rows: Vec<Vec<f64>> = draws.iter().map(|d| d.covariance.clone()).collect();
    let np = pairs.len();
    let layers = (0..config.depth)
        .map(|l| {
            let base = 2 * l * np;
            let same: Vec<(f64, f64)> = (0..np).map(|p| column_mean_and_stderr(&cov_rows, base + p)).collect();
            let cross: Vec<(f64, f64)> =
                (0..np).map(|p| column_mean_and_stderr(&cov_rows, base + np + p)).collect();
            LayerCovariance {
                layer: l + 1,
                mean: symmetric(m, &pairs, |p| same[p].0),
                stderr: symmetric(m, &pairs, |p| same[p].1),
                cross_mean: symmetric(m, &pairs, |p| cross[p].0),
                cross_stderr: symmetric(m, &pairs, |p| cross[p].1),
            }
        })
        .collect();

    let per_input = (0..m)
        .map(|a| {
            let rows: Vec<Vec<f64>> = draws.iter().map(|d| d.power_sums[a].clone()).collect();
            let (excess_kurtosis, standard_error) = stats::jackknife(&rows, |t, _| stats::excess_kurtosis_from_sums(t));
            KurtosisEstimate {
                input: a,
                excess_kurtosis,
                standard_error,
                pooled_values: samples * config.width,
            }
        })
        .collect();

    Ok(SimulationOutput {
        covariance: EmpiricalCovariance {
            activation: config.activation.id.clone(),
            width: config.width,
            depth: config.depth,
            seed: config.seed,
            sample_count: samples,
            layers,
        },
        normality: NormalityReport {
            activation: config.activation.id.clone(),
            width: config.width,
            depth: config.depth,
            seed: config.seed,
            sample_count: samples,
            per_input,
        },
    })
}

/// Per-layer covariance estimates over `samples` weight draws.
pub fn estimate_covariance(config: &NetworkConfig, dataset: &Dataset, samples: usize) -> Result<EmpiricalCovariance> {
    simulate(config, dataset, samples).map(|out| out.covariance)
}

/// Excess kurtosis of the final-layer preactivations, per input.
pub fn normality_diagnostics(config: &NetworkConfig, dataset: &Dataset, samples: usize) -> Result<NormalityReport> {
    if samples.saturating_mul(config.width) < MIN_POOLED {
        return Err(Error::invalid(format!(
            "samples * width = {} is below the {MIN_POOLED} pooled values needed",
            samples.saturating_mul(config.width)
        )));
    }
    simulate(config, dataset, samples).map(|out| out.normality)
}

/// Infinite-width covariance matrices `G⁽ˡ⁾` for `ℓ = 1..=depth`, starting
/// from the initial Gram matrix and applying `𝒞` entrywise.
pub fn theory_covariances(config: &NetworkConfig, dataset: &Dataset) -> Result<Vec<Vec<Vec<f64>>>> {
    let map = CovarianceMap::new(&config.activation)?;
    let m = dataset.len();
    let first = dataset.initial_gram();
    let off: Vec<(usize, usize)> = pairs(m).into_iter().filter(|(a, b)| a != b).collect();
    let trajectories: Vec<Vec<f64>> = off
        .par_iter()
        .map(|&(a, b)| {
            let mut k = first[a][b];
            let mut out = Vec::with_capacity(config.depth);
            out.push(k);
            for _ in 1..config.depth {
                k = map.eval(k)?;
                out.push(k);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..config.depth)
        .map(|l| {
            let mut g = vec![vec![1.0; m]; m];
            for (t, &(a, b)) in off.iter().enumerate() {
                g[a][b] = trajectories[t][l];
                g[b][a] = trajectories[t][l];
            }
            g
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Diagonal,
    OffDiagonal,
    CrossNeuron,
}

/// One empirical entry against its infinite-width value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub layer: usize,
    pub alpha: usize,
    pub beta: usize,
    pub kind: EntryKind,
    pub empirical: f64,
    pub theory: f64,
    pub stderr: f64,
    pub band: f64,
    pub z_score: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub entries: Vec<ComparisonEntry>,
    pub max_abs_z: f64,
    pub all_within_band: bool,
}

impl TheoryComparison {
    pub fn of_kind(&self, kind: EntryKind) -> impl Iterator<Item = &ComparisonEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

/// `|z|` above this marks a hard disagreement.
pub const Z_FAILURE: f64 = 6.0;

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        (diff / se).clamp(-f64::MAX, f64::MAX)
    }
}

/// Compares estimates with theory. Same-neuron entries must fall within
/// `max(4·stderr, 10/width)`; cross-neuron entries within `4·stderr` of 0.
pub fn compare_with_theory(empirical: &EmpiricalCovariance, theory: &[Vec<Vec<f64>>]) -> Result<TheoryComparison> {
    if theory.len() != empirical.layers.len() {
        return Err(Error::invalid(format!(
            "theory has {} layers, estimates have {}",
            theory.len(),
            empirical.layers.len()
        )));
    }
    let floor = 10.0 / empirical.width as f64;
    let mut entries = Vec::new();
    for (layer, g) in empirical.layers.iter().zip(theory) {
        let m = layer.mean.len();
        for a in 0..m {
            for b in a..m {
                let kind = if a == b { EntryKind::Diagonal } else { EntryKind::OffDiagonal };
                let (emp, se, th) = (layer.mean[a][b], layer.stderr[a][b], g[a][b]);
                let band = (4.0 * se).max(floor);
                entries.push(ComparisonEntry {
                    layer: layer.layer,
                    alpha: a,
                    beta: b,
                    kind,
                    empirical: emp,
                    theory: th,
                    stderr: se,
                    band,
                    z_score: z_score(emp - th, se),
                    within_band: (emp - th).abs() <= band,
                });
            }
        }
        for a in 0..m {
            for b in a..m {
                let (emp, se) = (layer.cross_mean[a][b], layer.cross_stderr[a][b]);
                entries.push(ComparisonEntry {
                    layer: layer.layer,
                    alpha: a,
                    beta: b,
                    kind: EntryKind::CrossNeuron,
                    empirical: emp,
                    theory: 0.0,
                    stderr: se,
                    band: 4.0 * se,
                    z_score: z_score(emp, se),
                    within_band: emp.abs() <= 4.0 * se,
                });
            }
        }
    }
    let max_abs_z = entries.iter().map(|e| e.z_score.abs()).fold(0.0, f64::max);
    let all_within_band = entries.iter().all(|e| e.within_band);
    Ok(TheoryComparison {
        entries,
        max_abs_z,
        all_within_band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourPointEstimator {
    /// Variance across draws of the conditional final-layer variance.
    Conditional,
    /// Pair products of final-layer outputs.
    Pairwise,
}

/// Connected four-point correlator `E[zᵢ²zⱼ²] − E[zᵢ²]E[zⱼ²]`, `i ≠ j`, of a
/// single input at the final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourPointReport {
    pub activation: String,
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub sample_count: usize,
    pub estimator: FourPointEstimator,
    pub connected_correlator: f64,
    pub standard_error: f64,
}

/// Unbiased variance of per-draw values from totals `[Σx, Σx²]`, with a
/// jackknife standard error.
fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = values.iter().map(|&g| vec![g, g * g]).collect();
    stats::jackknife(&rows, |t, n| {
        let nf = n as f64;
        (t[1] - t[0] * t[0] / nf) / (nf - 1.0)
    })
}

/// Four-point correlator for the all-ones input.
///
/// Given the previous layer, final-layer neurons are independent
/// `N(0, Ĝ)` with `Ĝ = C_b + (C_W/n_prev)·Σⱼ σ(zⱼ)²`, so for `i ≠ j` the
/// connected correlator equals `Var(Ĝ)` over weight draws. Estimating it
/// from `Ĝ` removes the within-draw sampling noise of the outputs.
pub fn four_point(config: &NetworkConfig, samples: usize) -> Result<FourPointReport> {
    config.validate()?;
    check_samples(samples)?;
    let input = Dataset::all_ones(config.n0)?;
    let h = config.hyperparams;
    let conditional: Vec<f64> = if config.depth == 1 {
        vec![h.c_b + h.c_w_first * mean_square(&input.inputs()[0]); samples]
    } else {
        let last = config.depth - 1;
        let c_w = h.weight_variance(config.depth);
        over_draws(samples, |d| {
            let mut g = 0.0;
            propagate(config, d, &input, last, |layer, z| {
                if layer == last {
                    let s = stats::sum(z[0].iter().map(|&v| config.activation.eval(v).powi(2)));
                    g = h.c_b + c_w * s / config.width as f64;
                }
                Ok(())
            })?;
            Ok(g)
        })?
    };
    let (connected_correlator, standard_error) = variance_with_se(&conditional);
    Ok(FourPointReport {
        activation: config.activation.id.clone(),
        width: config.width,
        depth: config.depth,
        seed: config.seed,
        sample_count: samples,
        estimator: FourPointEstimator::Conditional,
        connected_correlator,
        standard_error,
    })
}

/// Pairwise estimate from raw final-layer outputs, one vector per draw.
///
/// Per draw: `aᵈ = (S₁² − S₂)/(n(n−1))` with `S₁ = Σzᵢ²`, `S₂ = Σzᵢ⁴`
/// estimates `E[zᵢ²zⱼ²]`, and `bᵈ = S₁/n` estimates `E[zᵢ²]`; the squared
/// mean of `b` uses the distinct-draw product so the estimate is unbiased.
pub fn four_point_from_outputs(outputs: &[Vec<f64>]) -> Result<(f64, f64)> {
    if outputs.len() < 2 {
        return Err(Error::invalid("need outputs from at least two draws"));
    }
    let width = outputs[0].len();
    if width < 2 || outputs.iter().any(|o| o.len() != width) {
        return Err(Error::invalid("every draw needs the same number (at least 2) of outputs"));
    }
    let n = width as f64;
    let rows: Vec<Vec<f64>> = outputs
        .iter()
        .map(|z| {
            let s1 = stats::sum(z.iter().map(|v| v * v));
            let s2 = stats::sum(z.iter().map(|v| v.powi(4)));
            let a = (s1 * s1 - s2) / (n * (n - 1.0));
            let b = s1 / n;
            vec![a, b, b * b]
        })
        .collect();
    Ok(stats::jackknife(&rows, |t, d| {
        let df = d as f64;
        t[0] / df - (t[1] * t[1] - t[2]) / (df * (df - 1.0))
    }))
}

/// Four-point correlators at widths `n` and `2n` and the `1/n` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourPointScaling {
    pub narrow: FourPointReport,
    pub wide: FourPointReport,
    pub ratio: f64,
    /// `|c₂ₙ − c₂ₙ_expected|` with `c₂ₙ_expected = cₙ/2`.
    pub deviation: f64,
    /// `3·√(se₂ₙ² + se²ₙ/4)`.
    pub tolerance: f64,
    pub consistent: bool,
}

/// Runs [`four_point`] at both widths. `wide` must equal `narrow` except for
/// twice the width.
pub fn four_point_scaling(narrow: &NetworkConfig, wide: &NetworkConfig, samples: usize) -> Result<FourPointScaling> {
    if wide.width != 2 * narrow.width || (NetworkConfig { width: narrow.width, ..wide.clone() }) != *narrow {
        return Err(Error::invalid(
            "the two configurations must agree except that the second has twice the width",
        ));
    }
    let narrow = four_point(narrow, samples)?;
    let wide = four_point(wide, samples)?;
    let unresolved = |r: &FourPointReport| r.connected_correlator.abs() <= 3.0 * r.standard_error;
    if unresolved(&narrow) && unresolved(&wide) {
        return Err(Error::inconclusive(format!(
            "four-point correlators {} ± {} and {} ± {} are both indistinguishable from zero; \
             increase the number of draws",
            narrow.connected_correlator, narrow.standard_error, wide.connected_correlator, wide.standard_error
        )));
    }
    let deviation = (wide.connected_correlator - 0.5 * narrow.connected_correlator).abs();
    let tolerance = 3.0 * (wide.standard_error.powi(2) + 0.25 * narrow.standard_error.powi(2)).sqrt();
    Ok(FourPointScaling {
        ratio: wide.connected_correlator / narrow.connected_correlator,
        deviation,
        tolerance,
        consistent: deviation <= tolerance,
        narrow,
        wide,
    })
}

/// Independent standard normal "outputs" for draw `draw`, shape `m × n`.
pub fn synthetic_outputs(seed: u64, draw: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|a| {
            let mut v = vec![0.0; n];
            fill_standard_normal(&[seed, SYNTHETIC_TAG, draw, a as u64], &mut v);
            v
        })
        .collect()
}

const SYNTHETIC_TAG: u64 = 0x5359_4E54;
