use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dynconn::data::DEFAULT_EDGE_TOLERANCE;
use dynconn::experiment::Method;
use dynconn::kernels::KernelKind;
use dynconn::solver::SolverConfig;

pub const SEED_ENV: &str = "SINGLE_SEED";

#[derive(Debug, Parser)]
#[command(name = "dynconn", version, about = "Time-varying sparse precision matrices from multivariate time series")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "lowercase")]
pub enum Command {
    /// Estimate a precision sequence from a CSV time series.
    Estimate(EstimateArgs),
    /// Select h, lambda1 and lambda2 without writing an estimate.
    Tune(TuneArgs),
    /// Simulate a benchmark scenario.
    Simulate(SimulateArgs),
    /// Compare methods over simulated replicates.
    Benchmark(BenchmarkArgs),
    /// Betweenness change between on and off blocks across subjects.
    Analyze(AnalyzeArgs),
    /// Precision, recall and F of an estimate against a known graph sequence.
    Score(ScoreArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

impl Command {
    /// Applies the seed override from the environment.
    pub fn with_env_seed(mut self) -> Self {
        let Some(seed) = std::env::var(SEED_ENV).ok().and_then(|v| v.trim().parse::<u64>().ok()) else {
            return self;
        };
        match &mut self {
            Command::Simulate(a) => a.seed = Some(seed),
            Command::Benchmark(a) => a.seed = Some(seed),
            _ => {}
        }
        self
    }

    pub fn output_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::Estimate(a) => Some(&a.output),
            Command::Tune(a) => Some(&a.output),
            Command::Simulate(a) => Some(&a.output),
            Command::Benchmark(a) => Some(&a.output),
            Command::Analyze(a) => Some(&a.output),
            Command::Score(a) => Some(&a.output),
            Command::Rerun(_) => None,
        }
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Estimate(a) => a.output = dir,
            Command::Tune(a) => a.output = dir,
            Command::Simulate(a) => a.output = dir,
            Command::Benchmark(a) => a.output = dir,
            Command::Analyze(a) => a.output = dir,
            Command::Score(a) => a.output = dir,
            Command::Rerun(_) => {}
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Tune(_) => "tune",
            Command::Simulate(_) => "simulate",
            Command::Benchmark(_) => "benchmark",
            Command::Analyze(_) => "analyze",
            Command::Score(_) => "score",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// CSV with one row per time point and one column per node.
    #[arg(long)]
    pub input: PathBuf,
    /// The first row holds data rather than node labels.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Clone, Copy, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// ADMM step size.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Primal tolerance on max squared Frobenius norm of Theta - Z.
    #[arg(long, default_value_t = 1e-5)]
    pub eps1: f64,
    /// Dual tolerance on max squared Frobenius norm of the change in Z.
    #[arg(long, default_value_t = 1e-5)]
    pub eps2: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Leave diagonal entries out of the sparsity penalty.
    #[arg(long)]
    pub no_penalize_diagonal: bool,
}

impl SolverArgs {
    pub fn config(&self, lambda1: f64, lambda2: f64) -> SolverConfig {
        SolverConfig {
            lambda1,
            lambda2,
            gamma: self.gamma,
            eps1: self.eps1,
            eps2: self.eps2,
            max_iter: self.max_iter,
            penalize_diagonal: !self.no_penalize_diagonal,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Kernel widths to cross-validate (default: T/20, T/10, T/6, T/4, T/3, T/2).
    #[arg(long, value_delimiter = ',')]
    pub h_grid: Option<Vec<f64>>,
    /// Penalty values searched for lambda1, and for lambda2 unless given separately.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda2_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "gaussian")]
    pub kernel: KernelKind,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Pick h by cross-validation and the penalties by AIC.
    #[arg(long)]
    pub auto_tune: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Entries at or below this magnitude are not edges.
    #[arg(long, default_value_t = DEFAULT_EDGE_TOLERANCE)]
    pub edge_tol: f64,
    /// Write precisions as blank-line separated CSV blocks instead of JSON.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "gaussian")]
    pub kernel: KernelKind,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    /// Preset name (sim1a ... sim3b) or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Segment length override for presets.
    #[arg(long)]
    pub seglen: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Overridden by the SINGLE_SEED environment variable.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 10)]
    pub reps: u64,
    #[arg(long, value_delimiter = ',', default_value = "single,sw,gk")]
    pub methods: Vec<Method>,
    /// Overridden by the SINGLE_SEED environment variable.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = DEFAULT_EDGE_TOLERANCE)]
    pub edge_tol: f64,
    /// Also write the per-time mean F table as CSV.
    #[arg(long)]
    pub csv: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Edge-list JSON from `estimate`, or its output directory. Repeat per subject.
    #[arg(long = "subject", required = true, num_args = 1..)]
    pub subjects: Vec<PathBuf>,
    /// JSON list of `[start, end, label]` with `end` exclusive and label `on` or `off`.
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    /// Edge-list JSON of the estimate.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Edge-list JSON of the truth, e.g. `truth_edges.json` from `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
