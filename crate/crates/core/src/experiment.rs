//! Monte Carlo comparison of the fused estimator against the kernel baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::tune_baseline;
use crate::data::{precision_to_graphs, DEFAULT_EDGE_TOLERANCE};
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::metrics::{f_curve, mean_f, MeanCi, PrfCurve};
use crate::par::{self, Execution};
use crate::simgen::{simulate_replicate, SimScenario, RNG_ALGORITHM};
use crate::solver::SolverConfig;
use crate::tuning::{default_h_grid, tune, TuningGrid, DEFAULT_LAMBDA_GRID};

pub const DCR_NOTE: &str = "not implemented (out of scope)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fused estimator on Gaussian-kernel covariances.
    Single,
    /// Uniform kernel, no fusion.
    #[serde(rename = "sw")]
    SlidingWindow,
    /// Gaussian kernel, no fusion.
    #[serde(rename = "gk")]
    GaussianKernel,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Single, Method::SlidingWindow, Method::GaussianKernel];

    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::SlidingWindow => "sw",
            Method::GaussianKernel => "gk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(Method::Single),
            "sw" | "sliding-window" | "sliding_window" => Ok(Method::SlidingWindow),
            "gk" | "gaussian-kernel" | "gaussian_kernel" => Ok(Method::GaussianKernel),
            other => Err(Error::InvalidInput(format!("unknown method `{other}` (expected single, sw, gk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `None` uses the default grid for the series length.
    pub h_grid: Option<Vec<f64>>,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub solver: SolverConfig,
    pub edge_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            h_grid: None,
            lambda1_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            lambda2_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            solver: SolverConfig::default(),
            edge_tolerance: DEFAULT_EDGE_TOLERANCE,
        }
    }
}

impl ExperimentConfig {
    fn grid(&self, t: usize) -> Result<TuningGrid> {
        TuningGrid::new(
            self.h_grid.clone().unwrap_or_else(|| default_h_grid(t)),
            self.lambda1_grid.clone(),
            self.lambda2_grid.clone(),
        )
    }
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub replicate: u64,
    pub h: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Solves run during the penalty search, the chosen one included.
    pub grid_solves: usize,
    pub grid_converged: usize,
    pub runtime_secs: f64,
    pub mean_f: f64,
    /// Mean F over the middle half of every segment.
    pub mid_segment_f: f64,
    /// Time points whose edge set differs from the previous one.
    pub change_count: usize,
    #[serde(skip)]
    pub curve: PrfCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub replicate: u64,
    pub method: Method,
    pub error: String,
}

/// Tunes and scores each method on replicate `replicate` of `scenario`.
pub fn run_replicate(
    scenario: &SimScenario,
    replicate: u64,
    methods: &[Method],
    config: &ExperimentConfig,
) -> Result<Vec<std::result::Result<MethodRun, RunFailure>>> {
    let (ts, truth) = simulate_replicate(scenario, replicate)?;
    let truth = truth.true_edge_sets;
    let grid = config.grid(ts.len())?;
    let mid = mid_segment_points(scenario);
    Ok(methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let fit = match method {
                Method::Single => tune(&ts, KernelKind::Gaussian, &grid, &config.solver),
                Method::SlidingWindow | Method::GaussianKernel => {
                    let kind = if method == Method::SlidingWindow { KernelKind::Uniform } else { KernelKind::Gaussian };
                    tune_baseline(&ts, kind, &grid.h_values, &grid.lambda1_values, &config.solver)
                }
            };
            let runtime_secs = start.elapsed().as_secs_f64();
            let fail = |e: Error| RunFailure { replicate, method, error: e.to_string() };
            let fit = fit.map_err(fail)?;
            let graphs = precision_to_graphs(&fit.result.precisions, config.edge_tolerance);
            let curve = f_curve(&graphs, &truth).map_err(fail)?;
            let mid_f: Vec<f64> = mid.iter().map(|&t| curve.f[t]).collect();
            Ok(MethodRun {
                method,
                replicate,
                h: fit.report.chosen_h,
                lambda1: fit.report.chosen_lambda1,
                lambda2: fit.report.chosen_lambda2,
                converged: fit.result.converged,
                iterations: fit.result.iterations_used,
                grid_solves: fit.report.aic_table.len(),
                grid_converged: fit.report.aic_table.iter().filter(|e| e.converged).count(),
                runtime_secs,
                mean_f: curve.mean_f(),
                mid_segment_f: MeanCi::of(&mid_f).mean,
                change_count: graphs.change_count(),
                curve,
            })
        })
        .collect())
}

fn mid_segment_points(scenario: &SimScenario) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    for seg in &scenario.segments {
        let l = seg.length;
        out.extend(start + l / 4..start + l - l / 4);
        start += l;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: Method,
    pub replicates_ok: usize,
    pub non_converged: usize,
    /// Mean over replicates of the per-replicate mean F.
    pub mean_f: f64,
    /// Sample standard deviation of the per-replicate mean F.
    pub sd_f: Option<f64>,
    pub mean_mid_segment_f: f64,
    pub median_change_count: f64,
    pub mean_runtime_secs: f64,
    /// Per-time mean and interval over replicates.
    pub per_time: Vec<MeanCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub rng: String,
    pub scenario: SimScenario,
    pub reps: u64,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodSummary>,
    pub dcr: String,
    pub failures: Vec<RunFailure>,
    pub runs: Vec<MethodRun>,
}

impl BenchmarkReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == method)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Tidy per-time table: `method,t,mean_F,ci_lo,ci_hi`.
    pub fn write_per_time_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["method", "t", "mean_F", "ci_lo", "ci_hi"]).map_err(|e| csv_err(path, e))?;
        for m in &self.methods {
            for (t, v) in m.per_time.iter().enumerate() {
                let (lo, hi) = match v.ci {
                    Some((lo, hi)) => (lo.to_string(), hi.to_string()),
                    None => (String::new(), String::new()),
                };
                w.write_record([m.name.name().to_string(), t.to_string(), v.mean.to_string(), lo, hi])
                    .map_err(|e| csv_err(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &std::path::Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Runs `reps` replicates in parallel; assembly follows replicate order.
pub fn run_benchmark(
    scenario: &SimScenario,
    reps: u64,
    methods: &[Method],
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<BenchmarkReport> {
    scenario.validate()?;
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods selected".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let outcomes = par::map_range(exec, reps as usize, |r| run_replicate(scenario, r as u64, &methods, config));

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(list) => {
                for item in list {
                    match item {
                        Ok(run) => runs.push(run),
                        Err(f) => failures.push(f),
                    }
                }
            }
            Err(e) => {
                for &method in &methods {
                    failures.push(RunFailure { replicate: r as u64, method, error: e.to_string() });
                }
            }
        }
    }

    let summaries = methods.iter().map(|&m| summarise(m, &runs, scenario.total_len())).collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_ALGORITHM.to_string(),
        scenario: scenario.clone(),
        reps,
        seed: scenario.seed,
        config: config.clone(),
        methods: summaries,
        dcr: DCR_NOTE.to_string(),
        failures,
        runs,
    })
}

fn summarise(method: Method, runs: &[MethodRun], t: usize) -> Result<MethodSummary> {
    let mine: Vec<&MethodRun> = runs.iter().filter(|r| r.method == method).collect();
    if mine.is_empty() {
        return Ok(MethodSummary {
            name: method,
            replicates_ok: 0,
            non_converged: 0,
            mean_f: f64::NAN,
            sd_f: None,
            mean_mid_segment_f: f64::NAN,
            median_change_count: f64::NAN,
            mean_runtime_secs: f64::NAN,
            per_time: vec![MeanCi { mean: f64::NAN, ci: None, sd: None }; t],
        });
    }
    let curves: Vec<PrfCurve> = mine.iter().map(|r| r.curve.clone()).collect();
    let overall = MeanCi::of(&mine.iter().map(|r| r.mean_f).collect::<Vec<_>>());
    let mut changes: Vec<f64> = mine.iter().map(|r| r.change_count as f64).collect();
    changes.sort_by(f64::total_cmp);
    let n = changes.len();
    let median = if n % 2 == 1 { changes[n / 2] } else { (changes[n / 2 - 1] + changes[n / 2]) / 2.0 };
    Ok(MethodSummary {
        name: method,
        replicates_ok: mine.len(),
        non_converged: mine.iter().filter(|r| !r.converged).count(),
        mean_f: overall.mean,
        sd_f: overall.sd,
        mean_mid_segment_f: MeanCi::of(&mine.iter().map(|r| r.mid_segment_f).collect::<Vec<_>>()).mean,
        median_change_count: median,
        mean_runtime_secs: MeanCi::of(&mine.iter().map(|r| r.runtime_secs).collect::<Vec<_>>()).mean,
        per_time: mean_f(&curves)?,
    })
}
