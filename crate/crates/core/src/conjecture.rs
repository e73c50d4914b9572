//! Rarity of all-negative outputs on sign-vector inputs.
//!
//! A network `C: ℝⁿ → ℝⁿ` has property `P(C)` on a dataset of `{−1, +1}ⁿ`
//! rows when no row maps to an output whose every coordinate is negative.
//! If the `n` output coordinates were independent symmetric variables, each
//! row would be all-negative with probability `2⁻ⁿ`, so a dataset of `m` rows
//! would see `m·2⁻ⁿ` violations per network on average.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::network::{forward, outputs, Dataset, NetworkConfig, NetworkSample};
use crate::rng::keyed_rng;
use crate::simulate::{check_samples, over_draws, synthetic_outputs};

/// Distinct rows of `±1` entries. No row may be the negation of another,
/// except in the full cube `{−1, +1}ⁿ`, which contains every row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSignDataset")]
pub struct SignDataset {
    inputs: Vec<Vec<i8>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignDataset {
    inputs: Vec<Vec<i8>>,
}

impl TryFrom<RawSignDataset> for SignDataset {
    type Error = Error;
    fn try_from(raw: RawSignDataset) -> Result<Self> {
        SignDataset::new(raw.inputs)
    }
}

/// Representative of `{x, −x}` with a leading `+1`.
fn canonical(row: &[i8]) -> Vec<i8> {
    if row[0] < 0 {
        row.iter().map(|v| -v).collect()
    } else {
        row.to_vec()
    }
}

impl SignDataset {
    pub fn new(inputs: Vec<Vec<i8>>) -> Result<Self> {
        let n = inputs.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::invalid("sign dataset needs at least one non-empty row"));
        }
        let full_cube = u32::try_from(n).ok().and_then(|e| 1usize.checked_shl(e)) == Some(inputs.len());
        let mut seen = HashSet::with_capacity(inputs.len());
        let mut classes = HashSet::with_capacity(inputs.len());
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {i} has length {}, expected {n}", row.len())));
            }
            if row.iter().any(|&v| v != 1 && v != -1) {
                return Err(Error::invalid(format!("row {i} has an entry other than -1 or +1")));
            }
            if !seen.insert(row.clone()) {
                return Err(Error::invalid(format!("row {i} repeats an earlier row")));
            }
            if !classes.insert(canonical(row)) && !full_cube {
                return Err(Error::invalid(format!("row {i} negates an earlier row")));
            }
        }
        Ok(Self { inputs })
    }

    pub fn inputs(&self) -> &[Vec<i8>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.inputs[0].len()
    }

    /// The same rows as real network inputs.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::allowing_multiples(
            self.inputs
                .iter()
                .map(|r| r.iter().map(|&v| f64::from(v)).collect())
                .collect(),
        )
    }

    /// Keeps only the rows at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&i| {
                self.inputs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("row index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Self::new(rows)
    }
}

const DATASET_TAG: u64 = 0x5349_474E;

/// `m` sign vectors of dimension `n`, pairwise neither equal nor antipodal.
///
/// Picks `m` distinct classes `{x, −x}` uniformly, then a random sign for
/// each. Needs `m ≤ 2ⁿ⁻¹`, or `m = 2ⁿ`, which gives the whole cube.
pub fn generate_sign_dataset(n: usize, m: usize, seed: u64) -> Result<SignDataset> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("dimension and row count must be positive"));
    }
    let classes = u32::try_from(n - 1).ok().and_then(|e| 1usize.checked_shl(e));
    if classes.map(|c| 2 * c) == Some(m) {
        return full_cube(n);
    }
    if let Some(classes) = classes {
        if m > classes {
            return Err(Error::invalid(format!(
                "cannot pick {m} rows of dimension {n}: only {classes} classes up to sign"
            )));
        }
    }
    let mut rng = keyed_rng(&[seed, DATASET_TAG, n as u64, m as u64]);
    let mut canonical_rows: Vec<Vec<i8>> = match classes {
        Some(classes) if classes <= 2 * m || classes <= 1 << 20 => index::sample(&mut rng, classes, m)
            .into_iter()
            .map(|c| {
                std::iter::once(1)
                    .chain((0..n - 1).map(|b| if (c >> b) & 1 == 1 { -1 } else { 1 }))
                    .collect()
            })
            .collect(),
        _ => {
            let mut seen = HashSet::with_capacity(m);
            let mut rows = Vec::with_capacity(m);
            while rows.len() < m {
                let row: Vec<i8> = std::iter::once(1)
                    .chain((1..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }))
                    .collect();
                if seen.insert(row.clone()) {
                    rows.push(row);
                }
            }
            rows
        }
    };
    for row in &mut canonical_rows {
        if rng.random::<bool>() {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    SignDataset::new(canonical_rows)
}

/// Every vector of `{−1, +1}ⁿ`, in binary counting order.
pub fn full_cube(n: usize) -> Result<SignDataset> {
    let count = u32::try_from(n)
        .ok()
        .and_then(|e| 1usize.checked_shl(e))
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| Error::invalid(format!("the cube of dimension {n} is too large to list")))?;
    SignDataset::new(
        (0..count)
            .map(|c| (0..n).map(|b| if (c >> b) & 1 == 1 { -1 } else { 1 }).collect())
            .collect(),
    )
}

/// Which inputs map to all-negative outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub all_negative: Vec<bool>,
    pub violation_count: usize,
    pub property_holds: bool,
}

/// Flags each output vector whose coordinates are all strictly negative.
pub fn check_outputs(outputs: &[Vec<f64>]) -> PropertyResult {
    let all_negative: Vec<bool> = outputs.iter().map(|o| o.iter().all(|&v| v < 0.0)).collect();
    let violation_count = all_negative.iter().filter(|&&f| f).count();
    PropertyResult {
        all_negative,
        violation_count,
        property_holds: violation_count == 0,
    }
}

/// Evaluates `P(C)` for one sampled network.
pub fn check_property(sample: &NetworkSample, dataset: &SignDataset) -> Result<PropertyResult> {
    let z = forward(sample, &dataset.to_dataset()?)?;
    Ok(check_outputs(z.last().expect("networks have at least one layer")))
}

/// `⌈c·log₂ n⌉`, at least 1.
pub fn conjecture_depth(width: usize, depth_constant: f64) -> Result<usize> {
    if width < 2 {
        return Err(Error::invalid("width must be at least 2"));
    }
    if !(depth_constant.is_finite() && depth_constant > 0.0) {
        return Err(Error::invalid(format!("depth constant must be positive, got {depth_constant}")));
    }
    Ok(((depth_constant * (width as f64).log2()).ceil() as usize).max(1))
}

/// Square critically tuned network `ℝⁿ → ℝⁿ` of depth `⌈c·log₂ n⌉`.
pub fn conjecture_network(n: usize, depth_constant: f64, activation: ActivationSpec, seed: u64) -> Result<NetworkConfig> {
    NetworkConfig::critical(n, n, conjecture_depth(n, depth_constant)?, activation, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RarityMode {
    /// Sampled networks.
    Network,
    /// Independent standard normal outputs in place of the network.
    SyntheticIndependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityReport {
    pub mode: RarityMode,
    pub activation: String,
    pub width: usize,
    pub depth: usize,
    pub rows: usize,
    pub seed: u64,
    pub trials: usize,
    pub total_violations: u64,
    /// Mean violations per trial.
    pub empirical_violation_rate: f64,
    /// Standard error of the rate from the spread of per-trial counts.
    pub standard_error: f64,
    /// `√(m·p(1−p)/trials)` with `p = 2⁻ⁿ`: the spread expected under independence.
    pub binomial_standard_error: f64,
    /// `m·2⁻ⁿ`.
    pub independence_prediction: f64,
    /// Empirical rate over prediction.
    pub ratio: f64,
    /// 95% interval for the rate; `[0, 3/trials]` when nothing was observed.
    pub confidence_interval: [f64; 2],
    /// Fraction of trials in which the property held.
    pub property_rate: f64,
}

impl RarityReport {
    pub fn summary(&self) -> String {
        format!(
            "rate {:.6} per network (prediction {:.6}, ratio {:.4}, 95% CI [{:.6}, {:.6}])",
            self.empirical_violation_rate,
            self.independence_prediction,
            self.ratio,
            self.confidence_interval[0],
            self.confidence_interval[1]
        )
    }
}

/// Mean all-negative count per trial over `trials` draws.
pub fn estimate_rarity(
    config: &NetworkConfig,
    dataset: &SignDataset,
    trials: usize,
    mode: RarityMode,
) -> Result<RarityReport> {
    config.validate()?;
    check_samples(trials)?;
    let n = config.width;
    if dataset.dimension() != config.n0 {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match network input dimension {}",
            dataset.dimension(),
            config.n0
        )));
    }
    let m = dataset.len();
    let inputs = dataset.to_dataset()?;
    let counts: Vec<usize> = over_draws(trials, |t| {
        let z = match mode {
            RarityMode::Network => outputs(config, t, &inputs)?,
            RarityMode::SyntheticIndependent => synthetic_outputs(config.seed, t, m, n),
        };
        Ok(check_outputs(&z).violation_count)
    })?;

    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (rate, se) = crate::stats::mean_and_stderr(&values);
    let p = 0.5f64.powi(n as i32);
    let prediction = m as f64 * p;
    let expected = prediction * trials as f64;
    if total == 0 && expected < 5.0 {
        return Err(Error::inconclusive(format!(
            "no violations in {trials} trials, but only {expected:.3} were expected; increase trials"
        )));
    }
    let confidence_interval = if total == 0 {
        [0.0, 3.0 / trials as f64]
    } else {
        [(rate - 1.96 * se).max(0.0), rate + 1.96 * se]
    };
    let held = counts.iter().filter(|&&c| c == 0).count();
    Ok(RarityReport {
        mode,
        activation: config.activation.id.clone(),
        width: n,
        depth: config.depth,
        rows: m,
        seed: config.seed,
        trials,
        total_violations: total,
        empirical_violation_rate: rate,
        standard_error: se,
        binomial_standard_error: (m as f64 * p * (1.0 - p) / trials as f64).sqrt(),
        independence_prediction: prediction,
        ratio: rate / prediction,
        confidence_interval,
        property_rate: held as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_negative_flagging() {
        let r = check_outputs(&[vec![-1.0, -2.0, -3.0], vec![-1.0, 0.0, -3.0], vec![1.0, -1.0, -1.0]]);
        assert_eq!(r.all_negative, vec![true, false, false]);
        assert_eq!(r.violation_count, 1);
        assert!(!r.property_holds);
        let clean = check_outputs(&[vec![0.5, -1.0]]);
        assert!(clean.property_holds);
        assert_eq!(clean.violation_count, 0);
    }

    #[test]
    fn small_dataset_generation() {
        let d = generate_sign_dataset(3, 4, 1).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d, generate_sign_dataset(3, 4, 1).unwrap());
        let classes: HashSet<Vec<i8>> = d.inputs().iter().map(|r| canonical(r)).collect();
        assert_eq!(classes.len(), 4);
        assert!(generate_sign_dataset(2, 3, 1).is_err());
        assert!(generate_sign_dataset(2, 2, 1).is_ok());
        assert_eq!(generate_sign_dataset(2, 4, 1).unwrap(), full_cube(2).unwrap());
        assert_eq!(generate_sign_dataset(8, 256, 1).unwrap().len(), 256);
    }

    #[test]
    fn large_dimension_uses_rejection() {
        let d = generate_sign_dataset(80, 50, 9).unwrap();
        assert_eq!(d.len(), 50);
        assert_eq!(d.dimension(), 80);
    }

    #[test]
    fn sign_dataset_rejects_duplicates_and_negations() {
        assert!(SignDataset::new(vec![vec![1, -1], vec![1, -1]]).is_err());
        assert!(SignDataset::new(vec![vec![1, -1], vec![-1, 1]]).is_err());
        assert!(SignDataset::new(vec![vec![1, 0]]).is_err());
        assert!(SignDataset::new(vec![vec![1], vec![-1]]).is_ok());
        assert!(SignDataset::new(vec![vec![1, 1], vec![-1, -1], vec![1, -1]]).is_err());
        assert!(SignDataset::new(vec![vec![1, 1], vec![1, -1]]).is_ok());
    }

    #[test]
    fn prediction_arithmetic() {
        let config = conjecture_network(8, 1.0, ActivationSpec::tanh(), 3).unwrap();
        assert_eq!(config.depth, 3);
        let data = generate_sign_dataset(8, 128, 3).unwrap();
        let r = estimate_rarity(&config, &data, 200, RarityMode::SyntheticIndependent).unwrap();
        assert_eq!(r.independence_prediction, 0.5);
        assert_eq!(r.rows, 128);
    }

    #[test]
    fn underpowered_run_is_inconclusive() {
        let config = conjecture_network(14, 1.0, ActivationSpec::tanh(), 3).unwrap();
        let data = generate_sign_dataset(14, 2, 3).unwrap();
        let err = estimate_rarity(&config, &data, 100, RarityMode::SyntheticIndependent).unwrap_err();
        assert!(matches!(err, Error::Inconclusive(_)));
    }

    #[test]
    fn check_property_matches_streamed_outputs() {
        let config = conjecture_network(6, 1.0, ActivationSpec::tanh(), 12).unwrap();
        let data = generate_sign_dataset(6, 20, 12).unwrap();
        let sample = NetworkSample::draw(&config, 4).unwrap();
        let direct = check_property(&sample, &data).unwrap();
        let streamed = check_outputs(&outputs(&config, 4, &data.to_dataset().unwrap()).unwrap());
        assert_eq!(direct, streamed);
    }
}
