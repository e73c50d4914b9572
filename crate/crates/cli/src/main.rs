use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covflow::activation::{ActivationSpec, DEFAULT_TRUNCATION};
use covflow::conjecture::RarityMode;
use covflow::network::{Dataset, NetworkConfig};
use covflow::report::{read_json, RunManifest};
use covflow::runs::{
    ConjectureRun, DecomposeRun, Figure1Run, FlowRun, FourPointRun, Outcome, Run, SimulateRun,
};
use covflow::simulate::with_workers;
use covflow::Error;
use serde::Deserialize;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_Z_FAILURE: u8 = 3;

/// Covariance flow of wide random networks.
#[derive(Parser)]
#[command(name = "covflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hermite coefficients, moments and class of an activation.
    Decompose {
        #[command(flatten)]
        activation: ActivationArgs,
        /// Truncation degree.
        #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
        degree: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterates the covariance map and classifies its fixed point.
    Flow {
        #[command(flatten)]
        activation: ActivationArgs,
        #[arg(long, allow_negative_numbers = true)]
        k0: f64,
        #[arg(long, default_value_t = 200)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covariance map curves for ReLU, tanh(4x) and shifted ReLU.
    Figure1 {
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo covariances of a finite-width network against theory.
    Simulate {
        /// JSON file with `network`, and `dataset` or `gram`.
        #[arg(long)]
        config: PathBuf,
        /// Weight draws (overrides the file).
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        run: RandomRunArgs,
    },
    /// Connected four-point correlator at widths n and 2n.
    FourPoint {
        #[command(flatten)]
        activation: ActivationArgs,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 16)]
        n0: usize,
        #[arg(long, default_value_t = 4000)]
        samples: usize,
        #[command(flatten)]
        run: RandomRunArgs,
    },
    /// Rarity of all-negative outputs on sign-vector inputs.
    Conjecture {
        /// Input and output dimension.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Dataset rows.
        #[arg(long, default_value_t = 256)]
        m: usize,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Depth is ceil(c * log2 n).
        #[arg(long, default_value_t = 1.0)]
        depth_constant: f64,
        #[command(flatten)]
        activation: ActivationArgs,
        #[arg(long, value_enum, default_value_t = Mode::Network)]
        mode: Mode,
        #[command(flatten)]
        run: RandomRunArgs,
    },
    /// Re-runs the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "COVFLOW_WORKERS", default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Args)]
struct ActivationArgs {
    /// Registry name (relu, gelu, tanh, tanh4x, relu-shifted, gelu-shifted,
    /// identity, affine-1-1).
    #[arg(long, default_value = "tanh", conflicts_with = "activation_file")]
    activation: String,
    /// JSON activation spec.
    #[arg(long)]
    activation_file: Option<PathBuf>,
}

impl ActivationArgs {
    fn resolve(&self) -> covflow::Result<ActivationSpec> {
        let spec = match &self.activation_file {
            Some(path) => read_json(path)?,
            None => ActivationSpec::by_name(&self.activation)?,
        };
        spec.check_parameters()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct RandomRunArgs {
    #[arg(long)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "COVFLOW_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Network,
    Synthetic,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    network: serde_json::Value,
    #[serde(default)]
    dataset: Option<Dataset>,
    #[serde(default)]
    gram: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    samples: Option<usize>,
}

fn load_simulation(path: &Path, seed: u64, samples: Option<usize>) -> covflow::Result<SimulateRun> {
    let file: SimulateFile = read_json(path)?;
    let mut network = file.network;
    if let Some(obj) = network.as_object_mut() {
        obj.insert("seed".into(), seed.into());
    }
    let network: NetworkConfig = serde_json::from_value(network).map_err(|source| Error::Json {
        context: format!("{}: network", path.display()),
        source,
    })?;
    let dataset = match (file.dataset, file.gram) {
        (Some(d), None) => d,
        (None, Some(g)) => Dataset::from_gram(&g, network.n0)?,
        _ => {
            return Err(Error::Invalid(format!(
                "{}: give exactly one of `dataset` and `gram`",
                path.display()
            )))
        }
    };
    Ok(SimulateRun {
        network,
        dataset,
        samples: samples.or(file.samples).unwrap_or(1000),
    })
}

fn build(command: Command) -> covflow::Result<(Run, Option<PathBuf>, usize)> {
    Ok(match command {
        Command::Decompose { activation, degree, out } => (
            Run::Decompose(DecomposeRun {
                activation: activation.resolve()?,
                degree,
            }),
            out,
            0,
        ),
        Command::Flow { activation, k0, depth, out } => (
            Run::Flow(FlowRun {
                activation: activation.resolve()?,
                k0,
                depth,
            }),
            out,
            0,
        ),
        Command::Figure1 { grid, out } => (Run::Figure1(Figure1Run { grid }), out, 0),
        Command::Simulate { config, samples, run } => (
            Run::Simulate(load_simulation(&config, run.seed, samples)?),
            run.out,
            run.workers,
        ),
        Command::FourPoint {
            activation,
            width,
            depth,
            n0,
            samples,
            run,
        } => (
            Run::FourPoint(FourPointRun {
                network: NetworkConfig::critical(n0, width, depth, activation.resolve()?, run.seed)?,
                samples,
            }),
            run.out,
            run.workers,
        ),
        Command::Conjecture {
            n,
            m,
            trials,
            depth_constant,
            activation,
            mode,
            run,
        } => (
            Run::Conjecture(ConjectureRun {
                n,
                m,
                trials,
                depth_constant,
                activation: activation.resolve()?,
                mode: match mode {
                    Mode::Network => RarityMode::Network,
                    Mode::Synthetic => RarityMode::SyntheticIndependent,
                },
                seed: run.seed,
            }),
            run.out,
            run.workers,
        ),
        Command::Replay { manifest, out, workers } => {
            let run = Run::from_manifest(&RunManifest::load(&manifest)?)?;
            (run, out, workers)
        }
    })
}

fn print_outcome(outcome: &Outcome, dir: &Path) -> covflow::Result<()> {
    match outcome {
        Outcome::Decompose(r) => print!("{}", covflow::report::to_json_string(r, "decomposition")?),
        Outcome::Flow(r) => print!("{}", covflow::report::to_json_string(r, "flow report")?),
        Outcome::Figure1(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Outcome::Simulate(r) => println!(
            "max |z| {:.3} over {} entries; all within band: {}",
            r.comparison.max_abs_z,
            r.comparison.entries.len(),
            r.comparison.all_within_band
        ),
        Outcome::FourPoint(r) => println!(
            "connected correlator {:.6e} ± {:.2e} (n = {}), {:.6e} ± {:.2e} (n = {}); ratio {:.4}; consistent with 1/n: {}",
            r.narrow.connected_correlator,
            r.narrow.standard_error,
            r.narrow.width,
            r.wide.connected_correlator,
            r.wide.standard_error,
            r.wide.width,
            r.ratio,
            r.consistent
        ),
        Outcome::Conjecture(r) => println!("{}", r.summary()),
    }
    eprintln!("outputs written to {}", dir.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Inconclusive(_) | Error::NonFinite(_) => EXIT_INCONCLUSIVE,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = build(cli.command).and_then(|(run, out, workers)| {
        let dir = out.unwrap_or_else(|| PathBuf::from("covflow-out").join(run.name()));
        let outcome = with_workers(workers, || run.execute(&dir))??;
        print_outcome(&outcome, &dir)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) if outcome.z_failure() => {
            eprintln!("error: an entry lies more than 6 standard errors from theory");
            ExitCode::from(EXIT_Z_FAILURE)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
