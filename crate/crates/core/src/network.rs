//! Finite-width random networks.
//!
//! Layer `ℓ` computes `z⁽ˡ⁾ = b⁽ˡ⁾ + W⁽ˡ⁾·σ(z⁽ˡ⁻¹⁾)` (the raw input feeds layer 1)
//! with `Wᵢⱼ ~ N(0, C_W/n_prev)` and `bᵢ ~ N(0, C_b)`. There is no readout: the
//! last preactivations are the outputs.
//!
//! Row `i` of layer `ℓ` in weight draw `d` comes from its own stream keyed by
//! `(seed, width, d, ℓ, i)`, so a network can be materialized
//! ([`NetworkSample`]) or regenerated row by row while propagating
//! ([`propagate`]); both give bit-identical preactivations. Keying on the width
//! keeps runs that differ only in width independent.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{Error, Result};
use crate::flow::{initial_covariance, mean_square, CriticalHyperparams};
use crate::rng::{fill_standard_normal, BIAS_ROW};

/// Architecture, activation, variances and seed of a random network family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub n0: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: ActivationSpec,
    pub hyperparams: CriticalHyperparams,
    pub seed: u64,
}

/// On-disk form: the activation may be a registry name, and the
/// hyperparameters default to the critical tuning.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetworkConfig {
    n0: usize,
    width: usize,
    depth: usize,
    activation: ActivationRef,
    #[serde(default)]
    hyperparams: Option<CriticalHyperparams>,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ActivationRef {
    Name(String),
    Spec(ActivationSpec),
}

impl<'de> Deserialize<'de> for NetworkConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawNetworkConfig::deserialize(d)?;
        let activation = match raw.activation {
            ActivationRef::Name(name) => ActivationSpec::by_name(&name).map_err(serde::de::Error::custom)?,
            ActivationRef::Spec(spec) => spec,
        };
        let hyperparams = match raw.hyperparams {
            Some(h) => h,
            None => CriticalHyperparams::for_activation(&activation).map_err(serde::de::Error::custom)?,
        };
        let config = NetworkConfig {
            n0: raw.n0,
            width: raw.width,
            depth: raw.depth,
            activation,
            hyperparams,
            seed: raw.seed,
        };
        config.validate().map_err(serde::de::Error::custom)?;
        Ok(config)
    }
}

impl NetworkConfig {
    /// Critically tuned configuration.
    pub fn critical(n0: usize, width: usize, depth: usize, activation: ActivationSpec, seed: u64) -> Result<Self> {
        let hyperparams = CriticalHyperparams::for_activation(&activation)?;
        let config = Self {
            n0,
            width,
            depth,
            activation,
            hyperparams,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::invalid("input dimension n0 must be positive"));
        }
        if self.width < 2 {
            return Err(Error::invalid(format!("width must be at least 2, got {}", self.width)));
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        self.activation.check_parameters()?;
        self.hyperparams.check(&self.activation)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "network config".into(),
            source,
        })
    }

    /// Fan-in of layer `layer` (1-based).
    pub fn fan_in(&self, layer: usize) -> usize {
        if layer <= 1 {
            self.n0
        } else {
            self.width
        }
    }

    fn weight_std(&self, layer: usize) -> f64 {
        (self.hyperparams.weight_variance(layer) / self.fan_in(layer) as f64).sqrt()
    }
}

/// Rows of network inputs, each normalized to `(1/n₀)·Σ xᵢ² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    inputs: Vec<Vec<f64>>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;
    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::new(raw.inputs)
    }
}

/// Pairwise initial covariances must stay this far from ±1.
pub const SCALAR_MULTIPLE_MARGIN: f64 = 1e-9;

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>) -> Result<Self> {
        let n0 = match inputs.first() {
            Some(row) if !row.is_empty() => row.len(),
            Some(_) => return Err(Error::invalid("row 0 is empty")),
            None => return Err(Error::invalid("dataset has no rows")),
        };
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != n0 {
                return Err(Error::invalid(format!("row {i} has length {}, expected {n0}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite entry")));
            }
            let norm = mean_square(row);
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::invalid(format!(
                    "row {i} is not normalized: (1/n0)*sum x^2 = {norm}"
                )));
            }
        }
        for a in 0..inputs.len() {
            for b in a + 1..inputs.len() {
                let k = initial_covariance(&inputs[a], &inputs[b])?;
                if k.abs() >= 1.0 - SCALAR_MULTIPLE_MARGIN {
                    return Err(Error::invalid(format!(
                        "rows {a} and {b} are scalar multiples (covariance {k})"
                    )));
                }
            }
        }
        Ok(Self { inputs })
    }

    /// Normalized rows that may include scalar multiples of each other, as
    /// the full sign cube does.
    pub(crate) fn allowing_multiples(inputs: Vec<Vec<f64>>) -> Result<Self> {
        match inputs.len() {
            0 => Err(Error::invalid("dataset has no rows")),
            _ => {
                for (i, row) in inputs.iter().enumerate() {
                    Self::new(vec![row.clone()]).map_err(|e| Error::invalid(format!("row {i}: {e}")))?;
                    if row.len() != inputs[0].len() {
                        return Err(Error::invalid(format!("row {i} has a different length")));
                    }
                }
                Ok(Self { inputs })
            }
        }
    }

    /// Inputs in `ℝ^{n₀}` whose initial covariance matrix is `gram`, built from
    /// its Cholesky factor. Needs `n₀ ≥ m` and unit diagonal.
    pub fn from_gram(gram: &[Vec<f64>], n0: usize) -> Result<Self> {
        let m = gram.len();
        if m == 0 || gram.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("Gram matrix must be square and non-empty"));
        }
        if n0 < m {
            return Err(Error::invalid(format!("n0 = {n0} cannot realise {m} inputs")));
        }
        for i in 0..m {
            if (gram[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("Gram diagonal entry {i} is {}, not 1", gram[i][i])));
            }
            for j in 0..i {
                if gram[i][j] != gram[j][i] {
                    return Err(Error::invalid(format!("Gram matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let mut l = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                let partial: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                let v = gram[i][j] - partial;
                if i == j {
                    if v <= 0.0 {
                        return Err(Error::invalid("Gram matrix is not positive definite"));
                    }
                    l[i][i] = v.sqrt();
                } else {
                    l[i][j] = v / l[j][j];
                }
            }
        }
        let scale = (n0 as f64).sqrt();
        let inputs = l
            .iter()
            .map(|row| {
                let mut x = vec![0.0; n0];
                for (dst, v) in x.iter_mut().zip(row) {
                    *dst = scale * v;
                }
                x
            })
            .collect();
        Self::new(inputs)
    }

    /// The single all-ones input of dimension `n0`.
    pub fn all_ones(n0: usize) -> Result<Self> {
        Self::new(vec![vec![1.0; n0]])
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n0(&self) -> usize {
        self.inputs[0].len()
    }

    /// Matrix of `(1/n₀)·x_α·x_β`.
    pub fn initial_gram(&self) -> Vec<Vec<f64>> {
        let m = self.len();
        let mut g = vec![vec![1.0; m]; m];
        for a in 0..m {
            for b in a + 1..m {
                let k = initial_covariance(&self.inputs[a], &self.inputs[b]).expect("validated rows");
                g[a][b] = k;
                g[b][a] = k;
            }
        }
        g
    }
}

/// One layer's parameters, weights stored row-major (`fan_out × fan_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.fan_in..(i + 1) * self.fan_in]
    }

    pub fn fan_out(&self) -> usize {
        self.biases.len()
    }
}

/// All parameters of one weight draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSample {
    pub draw: u64,
    pub activation: ActivationSpec,
    pub layers: Vec<Layer>,
}

/// Draw 0 of the family described by `config`.
pub fn sample_network(config: &NetworkConfig) -> Result<NetworkSample> {
    NetworkSample::draw(config, 0)
}

fn fill_row(config: &NetworkConfig, draw: u64, layer: usize, row: usize, buf: &mut [f64]) {
    fill_standard_normal(&[config.seed, config.width as u64, draw, layer as u64, row as u64], buf);
    let std = config.weight_std(layer);
    buf.iter_mut().for_each(|w| *w *= std);
}

fn fill_biases(config: &NetworkConfig, draw: u64, layer: usize, out: &mut [f64]) {
    let c_b = config.hyperparams.c_b;
    if c_b > 0.0 {
        fill_standard_normal(&[config.seed, config.width as u64, draw, layer as u64, BIAS_ROW], out);
        let std = c_b.sqrt();
        out.iter_mut().for_each(|b| *b *= std);
    } else {
        out.fill(0.0);
    }
}

impl NetworkSample {
    /// Weight draw number `draw`, materialized.
    pub fn draw(config: &NetworkConfig, draw: u64) -> Result<Self> {
        config.validate()?;
        let layers = (1..=config.depth)
            .map(|layer| {
                let fan_in = config.fan_in(layer);
                let mut weights = vec![0.0; config.width * fan_in];
                for (i, row) in weights.chunks_exact_mut(fan_in).enumerate() {
                    fill_row(config, draw, layer, i, row);
                }
                let mut biases = vec![0.0; config.width];
                fill_biases(config, draw, layer, &mut biases);
                Layer { fan_in, weights, biases }
            })
            .collect();
        Ok(Self {
            draw,
            activation: config.activation.clone(),
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Preactivations indexed `[layer − 1][input][neuron]`.
pub type Preactivations = Vec<Vec<Vec<f64>>>;

/// Unrolled dot product with a fixed association order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ta.iter().zip(tb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn activate(spec: &ActivationSpec, z: &[Vec<f64>], out: &mut [Vec<f64>], layer: usize) -> Result<()> {
    for (zs, hs) in z.iter().zip(out.iter_mut()) {
        hs.clear();
        for &v in zs {
            let h = spec.eval(v);
            if !h.is_finite() {
                return Err(Error::non_finite(format!("activation output {h} at layer {layer}")));
            }
            hs.push(h);
        }
    }
    Ok(())
}

fn check_dataset(n0: usize, dataset: &Dataset) -> Result<()> {
    if dataset.n0() != n0 {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match network input dimension {n0}",
            dataset.n0()
        )));
    }
    Ok(())
}

/// Evaluates the recurrence for every input; returns all layers.
pub fn forward(sample: &NetworkSample, dataset: &Dataset) -> Result<Preactivations> {
    let first = sample.layers.first().ok_or_else(|| Error::invalid("network has no layers"))?;
    check_dataset(first.fan_in, dataset)?;
    let m = dataset.len();
    let mut h: Vec<Vec<f64>> = dataset.inputs().to_vec();
    let mut out = Vec::with_capacity(sample.depth());
    for (idx, layer) in sample.layers.iter().enumerate() {
        let mut z = vec![Vec::with_capacity(layer.fan_out()); m];
        for i in 0..layer.fan_out() {
            let row = layer.row(i);
            for (za, ha) in z.iter_mut().zip(&h) {
                za.push(layer.biases[i] + dot(row, ha));
            }
        }
        activate(&sample.activation, &z, &mut h, idx + 1)?;
        out.push(z);
    }
    Ok(out)
}

/// Regenerates draw `draw` row by row and propagates `dataset` through the
/// first `layers` layers, calling `visit(layer, z)` after each one. Nothing
/// but the current activations is held in memory.
pub fn propagate<F>(config: &NetworkConfig, draw: u64, dataset: &Dataset, layers: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &[Vec<f64>]) -> Result<()>,
{
    check_dataset(config.n0, dataset)?;
    if layers > config.depth {
        return Err(Error::invalid(format!("asked for {layers} layers of a depth-{} network", config.depth)));
    }
    let m = dataset.len();
    let mut h: Vec<Vec<f64>> = dataset.inputs().to_vec();
    let mut z = vec![Vec::with_capacity(config.width); m];
    let mut row = Vec::new();
    let mut biases = vec![0.0; config.width];
    for layer in 1..=layers {
        row.resize(config.fan_in(layer), 0.0);
        fill_biases(config, draw, layer, &mut biases);
        z.iter_mut().for_each(Vec::clear);
        for (i, &b) in biases.iter().enumerate() {
            fill_row(config, draw, layer, i, &mut row);
            for (za, ha) in z.iter_mut().zip(&h) {
                za.push(b + dot(&row, ha));
            }
        }
        visit(layer, &z)?;
        if layer < layers {
            activate(&config.activation, &z, &mut h, layer)?;
        }
    }
    Ok(())
}

/// Final-layer preactivations of draw `draw`, one vector per input.
pub fn outputs(config: &NetworkConfig, draw: u64, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let mut last = Vec::new();
    propagate(config, draw, dataset, config.depth, |layer, z| {
        if layer == config.depth {
            last = z.to_vec();
        }
        Ok(())
    })?;
    Ok(last)
}
