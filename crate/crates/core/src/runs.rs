//! Self-describing experiment runs.
//!
//! A [`Run`] holds every parameter of one experiment. Executing it writes its
//! reports into a directory together with a manifest whose `config` is the
//! run itself, so [`Run::from_manifest`] re-creates and replays it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::{
    classify, gaussian_mean, hermite_coefficients, ActivationClass, ActivationSpec, HermiteSeries,
};
use crate::conjecture::{
    conjecture_network, estimate_rarity, generate_sign_dataset, RarityMode, RarityReport,
};
use crate::error::{Error, Result};
use crate::flow::{
    estimate_decay_rate, figure1_curve, figure1_grid, find_fixed_point, iterate_flow, CovarianceMap,
    FlowClassification, FlowReport, KernelTrajectory,
};
use crate::network::{Dataset, NetworkConfig};
use crate::report::{covariance_rows, curve_rows, trajectory_rows, OutputDir, RunManifest};
use crate::simulate::{
    compare_with_theory, four_point_scaling, simulate, theory_covariances, EmpiricalCovariance,
    FourPointScaling, NormalityReport, TheoryComparison, Z_FAILURE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeRun {
    pub activation: ActivationSpec,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub activation: String,
    pub mean: f64,
    pub second_moment: f64,
    pub classification: ActivationClass,
    pub captured_mass: f64,
    pub series: HermiteSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRun {
    pub activation: ActivationSpec,
    pub k0: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRunReport {
    pub k0: f64,
    pub depth: usize,
    pub final_k: f64,
    /// Per-layer factor fitted to the decaying tail of this trajectory.
    pub empirical_decay_rate: Option<f64>,
    pub flow: FlowReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Run {
    pub grid: usize,
}

/// The three activations of the figure, with their file names.
pub fn figure1_panels() -> Result<Vec<(&'static str, ActivationSpec)>> {
    Ok(vec![
        ("figure1_relu.csv", ActivationSpec::relu()),
        ("figure1_tanh4x.csv", ActivationSpec::by_name("tanh4x")?),
        ("figure1_relu_shifted.csv", ActivationSpec::by_name("relu-shifted")?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRun {
    pub network: NetworkConfig,
    pub dataset: Dataset,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub samples: usize,
    pub initial_gram: Vec<Vec<f64>>,
    pub theory: Vec<Vec<Vec<f64>>>,
    pub empirical: EmpiricalCovariance,
    pub comparison: TheoryComparison,
    pub normality: NormalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourPointRun {
    /// Configuration at the narrower width; the second run doubles it.
    pub network: NetworkConfig,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRun {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub depth_constant: f64,
    pub activation: ActivationSpec,
    pub mode: RarityMode,
    pub seed: u64,
}

impl ConjectureRun {
    pub fn network(&self) -> Result<NetworkConfig> {
        conjecture_network(self.n, self.depth_constant, self.activation.clone(), self.seed)
    }
}

/// One experiment, tagged by its subcommand name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "config", rename_all = "kebab-case")]
pub enum Run {
    Decompose(DecomposeRun),
    Flow(FlowRun),
    Figure1(Figure1Run),
    Simulate(SimulateRun),
    FourPoint(FourPointRun),
    Conjecture(ConjectureRun),
}

/// What a finished run reports back to its caller.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Decompose(DecompositionReport),
    Flow(FlowRunReport),
    Figure1(Vec<PathBuf>),
    Simulate(Box<SimulationReport>),
    FourPoint(FourPointScaling),
    Conjecture(RarityReport),
}

impl Outcome {
    /// A simulation whose worst entry lies more than six standard errors
    /// from theory.
    pub fn z_failure(&self) -> bool {
        matches!(self, Outcome::Simulate(r) if r.comparison.max_abs_z > Z_FAILURE)
    }
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Decompose(_) => "decompose",
            Run::Flow(_) => "flow",
            Run::Figure1(_) => "figure1",
            Run::Simulate(_) => "simulate",
            Run::FourPoint(_) => "four-point",
            Run::Conjecture(_) => "conjecture",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Run::Simulate(r) => Some(r.network.seed),
            Run::FourPoint(r) => Some(r.network.seed),
            Run::Conjecture(r) => Some(r.seed),
            _ => None,
        }
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        let tagged = serde_json::to_value(self).map_err(|source| Error::Json {
            context: "run".into(),
            source,
        })?;
        RunManifest::new(self.name(), &tagged["config"], self.seed())
    }

    pub fn from_manifest(manifest: &RunManifest) -> Result<Self> {
        let tagged = serde_json::json!({
            "subcommand": manifest.subcommand,
            "config": manifest.config,
        });
        serde_json::from_value(tagged).map_err(|source| Error::Json {
            context: format!("manifest for '{}'", manifest.subcommand),
            source,
        })
    }

    /// Executes the run, writing reports and the manifest into `dir`.
    pub fn execute(&self, dir: &Path) -> Result<Outcome> {
        let mut out = OutputDir::create(dir, self.manifest()?)?;
        let outcome = match self {
            Run::Decompose(r) => {
                let report = decompose(r)?;
                out.json("decomposition.json", &report)?;
                Outcome::Decompose(report)
            }
            Run::Flow(r) => {
                let (trajectory, report) = flow(r)?;
                out.csv("trajectory.csv", trajectory_rows(&trajectory))?;
                out.json("flow_report.json", &report)?;
                Outcome::Flow(report)
            }
            Run::Figure1(r) => {
                let grid = figure1_grid(r.grid)?;
                let mut paths = Vec::new();
                for (file, spec) in figure1_panels()? {
                    let curve = figure1_curve(&spec, &grid)?;
                    paths.push(out.csv(file, curve_rows(&curve))?);
                }
                Outcome::Figure1(paths)
            }
            Run::Simulate(r) => {
                let report = simulation(r)?;
                out.json("simulation.json", &report)?;
                out.csv("covariance.csv", covariance_rows(&report.comparison))?;
                Outcome::Simulate(Box::new(report))
            }
            Run::FourPoint(r) => {
                let wide = NetworkConfig {
                    width: 2 * r.network.width,
                    ..r.network.clone()
                };
                let report = four_point_scaling(&r.network, &wide, r.samples)?;
                out.json("four_point.json", &report)?;
                Outcome::FourPoint(report)
            }
            Run::Conjecture(r) => {
                let dataset = generate_sign_dataset(r.n, r.m, r.seed)?;
                let report = estimate_rarity(&r.network()?, &dataset, r.trials, r.mode)?;
                out.json("rarity.json", &report)?;
                Outcome::Conjecture(report)
            }
        };
        out.finish()?;
        Ok(outcome)
    }
}

pub fn decompose(run: &DecomposeRun) -> Result<DecompositionReport> {
    run.activation.validate()?;
    let series = hermite_coefficients(&run.activation, run.degree)?;
    Ok(DecompositionReport {
        activation: run.activation.id.clone(),
        mean: gaussian_mean(&run.activation)?,
        second_moment: series.second_moment,
        classification: classify(&run.activation, &series)?,
        captured_mass: series.captured_mass(),
        series,
    })
}

pub fn flow(run: &FlowRun) -> Result<(KernelTrajectory, FlowRunReport)> {
    let map = CovarianceMap::new(&run.activation)?;
    let trajectory = iterate_flow(run.k0, &map, run.depth)?;
    let series = hermite_coefficients(&run.activation, crate::activation::DEFAULT_TRUNCATION)?;
    let report = find_fixed_point(&map, &series)?;
    let empirical_decay_rate = match report.classification {
        FlowClassification::DecaysToZero => estimate_decay_rate(&trajectory).ok(),
        _ => None,
    };
    Ok((
        trajectory.clone(),
        FlowRunReport {
            k0: run.k0,
            depth: run.depth,
            final_k: trajectory.last(),
            empirical_decay_rate,
            flow: report,
        },
    ))
}

pub fn simulation(run: &SimulateRun) -> Result<SimulationReport> {
    let out = simulate(&run.network, &run.dataset, run.samples)?;
    let theory = theory_covariances(&run.network, &run.dataset)?;
    let comparison = compare_with_theory(&out.covariance, &theory)?;
    Ok(SimulationReport {
        samples: run.samples,
        initial_gram: run.dataset.initial_gram(),
        theory,
        empirical: out.covariance,
        comparison,
        normality: out.normality,
    })
}
