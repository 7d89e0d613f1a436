//! Independent per-time graphical lasso on kernel covariances.
//!
//! The uniform kernel gives the sliding-window comparator and the Gaussian
//! kernel the Gaussian-kernel comparator. Both run the ADMM solver with the
//! fusion penalty switched off.

use serde::{Deserialize, Serialize};

use crate::data::{MatrixSequence, TimeSeries};
use crate::error::{Error, Result};
use crate::kernels::{estimate_covariances_with, Centering, KernelKind, KernelSpec};
use crate::solver::{solve, SingleResult, SolverConfig};
use crate::tuning::{select_h, select_lambdas_on, Complexity, TunedFit, TuningReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kernel: KernelSpec,
    pub lambda1: f64,
    /// `lambda1` and `lambda2` here are ignored.
    pub solver: SolverConfig,
}

impl BaselineConfig {
    pub fn new(kernel: KernelSpec, lambda1: f64) -> Self {
        Self { kernel, lambda1, solver: SolverConfig::default() }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { lambda1: self.lambda1, lambda2: 0.0, ..self.solver }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.check_usable()?;
        self.solver_config().validate()
    }
}

pub fn baseline_estimate(ts: &TimeSeries, config: &BaselineConfig) -> Result<SingleResult> {
    config.validate()?;
    let covs = estimate_covariances_with(ts, &config.kernel, Centering::default(), config.solver.execution)?;
    baseline_solve(&covs, config.lambda1, &config.solver)
}

/// Solve with `lambda2 = 0` on precomputed covariances.
pub fn baseline_solve(covs: &MatrixSequence, lambda1: f64, base: &SolverConfig) -> Result<SingleResult> {
    solve(covs, &SolverConfig { lambda1, lambda2: 0.0, ..*base })
}

/// Width by cross-validation, then `lambda1` by AIC counting nonzero entries.
pub fn tune_baseline(
    ts: &TimeSeries,
    kind: KernelKind,
    h_values: &[f64],
    lambda1_values: &[f64],
    base: &SolverConfig,
) -> Result<TunedFit> {
    if lambda1_values.is_empty() {
        return Err(Error::InvalidInput("empty lambda1 grid".into()));
    }
    let (h, cv_table) = select_h(ts, kind, h_values, base.execution)?;
    let spec = KernelSpec::new(kind, h)?;
    let covs = estimate_covariances_with(ts, &spec, Centering::default(), base.execution)?;
    let candidates: Vec<(f64, f64)> = lambda1_values.iter().map(|&l| (l, 0.0)).collect();
    let sel = select_lambdas_on(&covs, &candidates, base, Complexity::Entries)?;
    Ok(TunedFit {
        report: TuningReport {
            kernel: kind,
            chosen_h: h,
            cv_table,
            chosen_lambda1: sel.lambda1,
            chosen_lambda2: 0.0,
            aic_table: sel.table,
        },
        result: sel.result,
    })
}
