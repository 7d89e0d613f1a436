//! Kernel width by leave-one-out likelihood, penalties by AIC.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{MatrixSequence, TimeSeries, DEFAULT_EDGE_TOLERANCE};
use crate::error::{Error, Result};
use crate::kernels::{estimate_covariances_with, Centering, KernelKind, KernelSpec};
use crate::par::{self, Execution};
use crate::solver::{neg_loglik, solve, SingleResult, SolverConfig};

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0];

/// `T/20, T/10, T/6, T/4, T/3, T/2`, rounded, at least 1, deduplicated.
pub fn default_h_grid(t: usize) -> Vec<f64> {
    let mut hs: Vec<f64> = [20.0, 10.0, 6.0, 4.0, 3.0, 2.0].iter().map(|d| (t as f64 / d).round().max(1.0)).collect();
    hs.dedup();
    hs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub h_values: Vec<f64>,
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
}

impl TuningGrid {
    pub fn new(h_values: Vec<f64>, lambda1_values: Vec<f64>, lambda2_values: Vec<f64>) -> Result<Self> {
        let g = Self { h_values, lambda1_values, lambda2_values };
        g.validate()?;
        Ok(g)
    }

    pub fn default_for(t: usize) -> Self {
        Self {
            h_values: default_h_grid(t),
            lambda1_values: DEFAULT_LAMBDA_GRID.to_vec(),
            lambda2_values: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, vals, min_exclusive) in [
            ("h", &self.h_values, true),
            ("lambda1", &self.lambda1_values, false),
            ("lambda2", &self.lambda2_values, false),
        ] {
            if vals.is_empty() {
                return Err(Error::InvalidInput(format!("{name} grid is empty")));
            }
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0 || (min_exclusive && *v == 0.0)) {
                return Err(Error::InvalidInput(format!("{name} grid has invalid values: {vals:?}")));
            }
            if vals.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("{name} grid is not strictly ascending: {vals:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub h: f64,
    /// `null` in JSON when every held-out point was singular.
    pub cv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub lambda1: f64,
    pub lambda2: f64,
    pub aic: f64,
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub kernel: KernelKind,
    pub chosen_h: f64,
    pub cv_table: Vec<CvEntry>,
    pub chosen_lambda1: f64,
    pub chosen_lambda2: f64,
    pub aic_table: Vec<AicEntry>,
}

/// Held-out Gaussian log-likelihood of `X_i` (without the `2 pi` constant)
/// under the local mean and covariance recomputed with observation `i`
/// removed from every kernel sum.
pub fn loo_loglik(ts: &TimeSeries, spec: &KernelSpec, i: usize) -> Result<f64> {
    let ctx = LooContext::new(ts.values(), spec)?;
    if i >= ts.len() {
        return Err(Error::InvalidInput(format!("time index {i} out of range")));
    }
    Ok(ctx.score(i))
}

pub fn loo_logliks(ts: &TimeSeries, spec: &KernelSpec, exec: Execution) -> Result<Vec<f64>> {
    let ctx = LooContext::new(ts.values(), spec)?;
    Ok(par::map_range(exec, ts.len(), |i| ctx.score(i)))
}

pub fn cv_score(ts: &TimeSeries, spec: &KernelSpec) -> Result<f64> {
    Ok(loo_logliks(ts, spec, Execution::default())?.iter().sum())
}

/// Maximises the LOO score over `h_values`; ties go to the smaller width.
pub fn select_h(ts: &TimeSeries, kind: KernelKind, h_values: &[f64], exec: Execution) -> Result<(f64, Vec<CvEntry>)> {
    if h_values.is_empty() {
        return Err(Error::InvalidInput("empty h grid".into()));
    }
    let mut table = Vec::with_capacity(h_values.len());
    let mut best: Option<(f64, f64)> = None;
    for &h in h_values {
        let spec = KernelSpec::new(kind, h)?;
        let cv = match loo_logliks(ts, &spec, exec) {
            Ok(v) => v.iter().sum::<f64>(),
            Err(Error::DegenerateKernel(msg)) => {
                log::warn!("h = {h}: {msg}");
                f64::NEG_INFINITY
            }
            Err(e) => return Err(e),
        };
        let cv = if cv.is_nan() { f64::NEG_INFINITY } else { cv };
        table.push(CvEntry { h, cv });
        if cv > f64::NEG_INFINITY && best.is_none_or(|(bh, b)| cv > b || (cv == b && h < bh)) {
            best = Some((h, cv));
        }
    }
    match best {
        Some((h, _)) => Ok((h, table)),
        None => Err(Error::TuningFailed("every kernel width scored -inf".into())),
    }
}

struct LooContext<'a> {
    x: &'a DMatrix<f64>,
    t: usize,
    p: usize,
    w: Vec<f64>,
    /// `sum_l K(j, l)`.
    totals: Vec<f64>,
    /// `sum_l K(j, l) X_l`, `t x p` row-major.
    sums: Vec<f64>,
}

impl<'a> LooContext<'a> {
    fn new(x: &'a DMatrix<f64>, spec: &KernelSpec) -> Result<Self> {
        spec.check_usable()?;
        let (t, p) = x.shape();
        if t < 3 {
            return Err(Error::InvalidInput(format!("leave-one-out needs T >= 3, got {t}")));
        }
        let w = spec.weight_matrix(t);
        let mut totals = vec![0.0; t];
        let mut sums = vec![0.0; t * p];
        for j in 0..t {
            for l in 0..t {
                let wjl = w[j * t + l];
                if wjl == 0.0 {
                    continue;
                }
                totals[j] += wjl;
                for c in 0..p {
                    sums[j * p + c] += wjl * x[(l, c)];
                }
            }
        }
        Ok(Self { x, t, p, w, totals, sums })
    }

    /// Local mean at `j` with observation `i` removed.
    fn mean_without(&self, j: usize, i: usize, out: &mut [f64]) -> bool {
        let wji = self.w[j * self.t + i];
        let den = self.totals[j] - wji;
        if den <= 0.0 {
            return false;
        }
        let x = self.x;
        for (c, o) in out.iter_mut().enumerate() {
            *o = (self.sums[j * self.p + c] - wji * x[(i, c)]) / den;
        }
        true
    }

    fn score(&self, i: usize) -> f64 {
        let (t, p) = (self.t, self.p);
        let x = self.x;
        let mut mu = vec![0.0; p];
        if !self.mean_without(i, i, &mut mu) {
            return f64::NEG_INFINITY;
        }
        let row = &self.w[i * t..(i + 1) * t];
        let mut s = DMatrix::<f64>::zeros(p, p);
        let mut total = 0.0;
        let mut m = vec![0.0; p];
        let mut r = vec![0.0; p];
        for (j, &wij) in row.iter().enumerate() {
            if j == i || wij == 0.0 {
                continue;
            }
            if !self.mean_without(j, i, &mut m) {
                return f64::NEG_INFINITY;
            }
            for c in 0..p {
                r[c] = x[(j, c)] - m[c];
            }
            for b in 0..p {
                for a in b..p {
                    s[(a, b)] += wij * r[a] * r[b];
                }
            }
            total += wij;
        }
        if total <= 0.0 {
            return f64::NEG_INFINITY;
        }
        for b in 0..p {
            for a in b..p {
                let v = s[(a, b)] / total;
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        let resid = DVector::from_iterator(p, (0..p).map(|c| x[(i, c)] - mu[c]));
        gaussian_loglik(s, &resid)
    }
}

/// `-1/2 log det S - 1/2 r^T S^-1 r`, with one jitter retry.
fn gaussian_loglik(s: DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let chol = s.clone().cholesky().or_else(|| {
        let p = s.nrows();
        let jitter = 1e-6 * s.trace() / p as f64;
        (s + DMatrix::identity(p, p) * jitter).cholesky()
    });
    let Some(chol) = chol else {
        return f64::NEG_INFINITY;
    };
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(r));
    let v = -0.5 * logdet - 0.5 * quad;
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Number of nonzero constant blocks in the off-diagonal trajectories.
///
/// A block starts at the first time point when the entry is nonzero there,
/// and at every later time point where the entry is nonzero and differs
/// from its predecessor.
pub fn degrees_of_freedom(precisions: &MatrixSequence, tolerance: f64) -> usize {
    let p = precisions.dim();
    let ms = precisions.matrices();
    let mut k = 0;
    for s in 1..p {
        for r in 0..s {
            if ms.first().is_some_and(|m| m[(r, s)].abs() > tolerance) {
                k += 1;
            }
            for w in ms.windows(2) {
                let (prev, cur) = (w[0][(r, s)], w[1][(r, s)]);
                if (cur - prev).abs() > tolerance && cur.abs() > tolerance {
                    k += 1;
                }
            }
        }
    }
    k
}

/// Count of nonzero off-diagonal pairs summed over time.
pub fn nonzero_count(precisions: &MatrixSequence, tolerance: f64) -> usize {
    let p = precisions.dim();
    precisions
        .matrices()
        .iter()
        .map(|m| (1..p).flat_map(|s| (0..s).map(move |r| (r, s))).filter(|&(r, s)| m[(r, s)].abs() > tolerance).count())
        .sum()
}

/// `2 sum_i (-log det Theta_i + tr(S_i Theta_i)) + 2K`; `+inf` when some
/// `Theta_i` is not positive definite.
pub fn aic(precisions: &MatrixSequence, covs: &MatrixSequence, k: usize) -> f64 {
    if precisions.len() != covs.len() || precisions.dim() != covs.dim() {
        return f64::INFINITY;
    }
    let mut fit = 0.0;
    for (th, s) in precisions.matrices().iter().zip(covs.matrices()) {
        match neg_loglik(th, s) {
            Some(v) => fit += v,
            None => return f64::INFINITY,
        }
    }
    2.0 * fit + 2.0 * k as f64
}

/// How the AIC complexity term is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    /// Nonzero constant blocks over time.
    Blocks,
    /// Nonzero entries per time point.
    Entries,
}

pub struct LambdaSelection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub table: Vec<AicEntry>,
    pub result: SingleResult,
}

/// Solves every `(lambda1, lambda2)` candidate on fixed covariances and keeps
/// the AIC minimiser. Ties go to the larger `lambda1`, then the larger
/// `lambda2`.
pub fn select_lambdas_on(
    covs: &MatrixSequence,
    candidates: &[(f64, f64)],
    base: &SolverConfig,
    complexity: Complexity,
) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no penalty candidates".into()));
    }
    // the grid is the parallel axis; each solve runs sequentially
    let solves = par::map_range(base.execution, candidates.len(), |c| {
        let (lambda1, lambda2) = candidates[c];
        let cfg = SolverConfig { lambda1, lambda2, execution: Execution::Sequential, ..*base };
        solve(covs, &cfg)
    });
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, SingleResult)> = None;
    for (c, outcome) in solves.into_iter().enumerate() {
        let (lambda1, lambda2) = candidates[c];
        let (entry, res) = match outcome {
            Ok(res) => {
                let k = match complexity {
                    Complexity::Blocks => degrees_of_freedom(&res.precisions, DEFAULT_EDGE_TOLERANCE),
                    Complexity::Entries => nonzero_count(&res.precisions, DEFAULT_EDGE_TOLERANCE),
                };
                let entry = AicEntry {
                    lambda1,
                    lambda2,
                    aic: aic(&res.precisions, covs, k),
                    k,
                    converged: res.converged,
                    iterations: res.iterations_used,
                };
                (entry, Some(res))
            }
            Err(e) => {
                log::warn!("lambda1 = {lambda1}, lambda2 = {lambda2}: {e}");
                let entry = AicEntry { lambda1, lambda2, aic: f64::INFINITY, k: 0, converged: false, iterations: 0 };
                (entry, None)
            }
        };
        table.push(entry);
        let Some(res) = res else { continue };
        if entry.aic == f64::INFINITY {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, _)) => {
                let cur = &table[*b];
                entry.aic < cur.aic
                    || (entry.aic == cur.aic && (entry.lambda1, entry.lambda2) > (cur.lambda1, cur.lambda2))
            }
        };
        if better {
            best = Some((c, res));
        }
    }
    let Some((b, result)) = best else {
        return Err(Error::TuningFailed("every penalty pair scored +inf".into()));
    };
    Ok(LambdaSelection { lambda1: table[b].lambda1, lambda2: table[b].lambda2, table, result })
}

/// AIC search over the full `lambda1 x lambda2` grid at kernel width `h`.
pub fn select_lambdas(
    ts: &TimeSeries,
    spec: &KernelSpec,
    grid: &TuningGrid,
    base: &SolverConfig,
) -> Result<LambdaSelection> {
    let covs = estimate_covariances_with(ts, spec, Centering::default(), base.execution)?;
    let candidates: Vec<(f64, f64)> =
        grid.lambda1_values.iter().flat_map(|&a| grid.lambda2_values.iter().map(move |&b| (a, b))).collect();
    select_lambdas_on(&covs, &candidates, base, Complexity::Blocks)
}

pub struct TunedFit {
    pub report: TuningReport,
    pub result: SingleResult,
}

/// Width by cross-validation, then penalties by AIC at that width.
pub fn tune(ts: &TimeSeries, kind: KernelKind, grid: &TuningGrid, base: &SolverConfig) -> Result<TunedFit> {
    grid.validate()?;
    let (h, cv_table) = select_h(ts, kind, &grid.h_values, base.execution)?;
    let spec = KernelSpec::new(kind, h)?;
    let sel = select_lambdas(ts, &spec, grid, base)?;
    Ok(TunedFit {
        report: TuningReport {
            kernel: kind,
            chosen_h: h,
            cv_table,
            chosen_lambda1: sel.lambda1,
            chosen_lambda2: sel.lambda2,
            aic_table: sel.table,
        },
        result: sel.result,
    })
}
