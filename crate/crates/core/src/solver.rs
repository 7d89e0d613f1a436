//! ADMM solver for the fused time-varying graphical lasso.
//!
//! Minimises
//!
//! ```text
//! sum_i [-log det Theta_i + tr(S_i Theta_i)]
//!     + lambda1 sum_i ||Theta_i||_1 + lambda2 sum_{i>=2} ||Theta_i - Theta_{i-1}||_1
//! ```
//!
//! by splitting `Theta = Z`. The Theta-update is a closed-form eigenvalue
//! map, the Z-update is one fused lasso signal approximator per matrix entry
//! across time, and U is the scaled dual.
//!
//! All iterates live in flat column-major buffers, time-major for Theta, Z
//! and U. The Z-update gathers each entry's trajectory into an entry-major
//! buffer so that every FLSA instance reads and writes a contiguous slice.

use std::cell::RefCell;
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{MatrixKind, MatrixSequence};
use crate::eigen::JacobiSolver;
use crate::error::{Error, Result};
use crate::flsa::FlsaSolver;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iter: usize,
    /// When false the sparsity penalty skips the diagonal; fusion still
    /// applies to it.
    pub penalize_diagonal: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            gamma: 1.0,
            eps1: 1e-5,
            eps2: 1e-5,
            max_iter: 500,
            penalize_diagonal: true,
            execution: Execution::default(),
        }
    }
}

impl SolverConfig {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self { lambda1, lambda2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        nonneg("lambda1", self.lambda1)?;
        nonneg("lambda2", self.lambda2)?;
        pos("gamma", self.gamma)?;
        pos("eps1", self.eps1)?;
        pos("eps2", self.eps2)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Full iterate of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: MatrixSequence,
    pub z: MatrixSequence,
    pub u: MatrixSequence,
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl AdmmState {
    /// `Theta = I`, `Z = U = 0`.
    pub fn initial(t: usize, p: usize) -> Self {
        let eye = vec![DMatrix::identity(p, p); t];
        Self {
            theta: MatrixSequence::new_unchecked(MatrixKind::Precision, eye),
            z: MatrixSequence::zeros(MatrixKind::Auxiliary, t, p),
            u: MatrixSequence::zeros(MatrixKind::Dual, t, p),
            iteration: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            converged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleResult {
    /// The sparse splitting variable Z.
    pub precisions: MatrixSequence,
    pub iterations_used: usize,
    pub converged: bool,
    /// Objective at `precisions`; `+inf` when some Z_i is not positive definite.
    pub objective: f64,
    /// `(primal, dual)` residual per iteration.
    pub history: Vec<(f64, f64)>,
}

/// Objective with the sparsity penalty on every entry.
pub fn objective(thetas: &MatrixSequence, covs: &MatrixSequence, lambda1: f64, lambda2: f64) -> Result<f64> {
    objective_with(thetas, covs, lambda1, lambda2, true)
}

pub fn objective_with(
    thetas: &MatrixSequence,
    covs: &MatrixSequence,
    lambda1: f64,
    lambda2: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    check_shapes(thetas, covs)?;
    let mut total = 0.0;
    for (i, (th, s)) in thetas.matrices().iter().zip(covs.matrices()).enumerate() {
        total += neg_loglik(th, s)
            .ok_or_else(|| Error::NotPositiveDefinite(format!("precision at time {i} has no Cholesky factor")))?;
        total += lambda1 * l1_norm(th, penalize_diagonal);
    }
    for w in thetas.matrices().windows(2) {
        total += lambda2 * (&w[1] - &w[0]).iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(total)
}

/// `-log det Theta + tr(S Theta)`, or `None` when Theta is not PD.
pub(crate) fn neg_loglik(theta: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<f64> {
    let chol = theta.clone().cholesky()?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace: f64 = s.iter().zip(theta.transpose().iter()).map(|(a, b)| a * b).sum();
    let v = -logdet + trace;
    v.is_finite().then_some(v)
}

fn l1_norm(m: &DMatrix<f64>, with_diagonal: bool) -> f64 {
    let all: f64 = m.iter().map(|v| v.abs()).sum();
    if with_diagonal {
        all
    } else {
        all - m.diagonal().iter().map(|v| v.abs()).sum::<f64>()
    }
}

fn check_shapes(a: &MatrixSequence, b: &MatrixSequence) -> Result<()> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "sequence shapes differ: {}x{} vs {}x{}",
            a.len(),
            a.dim(),
            b.len(),
            b.dim()
        )));
    }
    Ok(())
}

/// Positive root of `gamma x^2 + s x - 1 = 0`.
#[inline]
pub fn theta_eigenvalue(s: f64, gamma: f64) -> f64 {
    let root = (s * s + 4.0 * gamma).sqrt();
    if s > 0.0 {
        2.0 / (s + root)
    } else {
        (root - s) / (2.0 * gamma)
    }
}

/// Theta-update for every time point, started from the identity basis.
pub fn theta_step(covs: &MatrixSequence, z: &MatrixSequence, u: &MatrixSequence, gamma: f64) -> Result<MatrixSequence> {
    check_shapes(covs, z)?;
    check_shapes(covs, u)?;
    let (t, p) = (covs.len(), covs.dim());
    let mut ws = Workspace::new(covs, &AdmmState::initial(t, p));
    ws.z = z.to_flat();
    ws.u = u.to_flat();
    ws.theta_step(gamma, Execution::Sequential)?;
    Ok(MatrixSequence::from_flat(MatrixKind::Precision, &ws.theta, p))
}

pub fn z_step(thetas: &MatrixSequence, u: &MatrixSequence, lambda1: f64, lambda2: f64, gamma: f64) -> MatrixSequence {
    z_step_with(thetas, u, lambda1, lambda2, gamma, true)
}

pub fn z_step_with(
    thetas: &MatrixSequence,
    u: &MatrixSequence,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    penalize_diagonal: bool,
) -> MatrixSequence {
    assert_eq!((thetas.len(), thetas.dim()), (u.len(), u.dim()));
    let p = thetas.dim();
    let mut ws = Workspace::new(thetas, &AdmmState::initial(thetas.len(), p));
    ws.theta = thetas.to_flat();
    ws.u = u.to_flat();
    let cfg = SolverConfig {
        lambda1,
        lambda2,
        gamma,
        penalize_diagonal,
        execution: Execution::Sequential,
        ..SolverConfig::default()
    };
    ws.z_step(&cfg);
    MatrixSequence::from_flat(MatrixKind::Auxiliary, &ws.z, p)
}

/// `U + Theta - Z`.
pub fn u_step(u: &MatrixSequence, thetas: &MatrixSequence, z: &MatrixSequence) -> MatrixSequence {
    assert_eq!((u.len(), u.dim()), (thetas.len(), thetas.dim()));
    assert_eq!((u.len(), u.dim()), (z.len(), z.dim()));
    let matrices =
        u.matrices().iter().zip(thetas.matrices()).zip(z.matrices()).map(|((a, b), c)| a + (b - c)).collect();
    MatrixSequence::new_unchecked(MatrixKind::Dual, matrices)
}

/// Runs the splitting from `Theta = I`, `Z = U = 0`.
pub fn solve(covs: &MatrixSequence, config: &SolverConfig) -> Result<SingleResult> {
    let (t, p) = (covs.len(), covs.dim());
    solve_from(covs, config, &AdmmState::initial(t, p)).map(|(r, _)| r)
}

/// Runs the splitting from an arbitrary starting iterate.
pub fn solve_from(
    covs: &MatrixSequence,
    config: &SolverConfig,
    start: &AdmmState,
) -> Result<(SingleResult, AdmmState)> {
    config.validate()?;
    if covs.is_empty() {
        return Err(Error::InvalidInput("no covariance matrices".into()));
    }
    check_shapes(covs, &start.theta)?;
    check_shapes(covs, &start.z)?;
    check_shapes(covs, &start.u)?;
    if covs.matrices().iter().flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("non-finite covariance entry".into()));
    }
    let p = covs.dim();
    let exec = config.execution;
    let mut ws = Workspace::new(covs, start);
    let mut history = Vec::new();
    let mut converged = false;
    let (mut primal, mut dual) = (start.primal_residual, start.dual_residual);
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        ws.theta_step(config.gamma, exec)?;
        ws.z_prev.copy_from_slice(&ws.z);
        ws.z_step(config);
        (primal, dual) = ws.u_step();
        history.push((primal, dual));
        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::NumericFailure(format!("non-finite residual at iteration {iterations}")));
        }
        if primal < config.eps1 && dual < config.eps2 {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("no convergence after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})");
    }

    let precisions = MatrixSequence::from_flat(MatrixKind::Precision, &ws.z, p);
    let objective = objective_with(&precisions, covs, config.lambda1, config.lambda2, config.penalize_diagonal)
        .unwrap_or(f64::INFINITY);
    let state = AdmmState {
        theta: MatrixSequence::from_flat(MatrixKind::Precision, &ws.theta, p),
        z: MatrixSequence::from_flat(MatrixKind::Auxiliary, &ws.z, p),
        u: MatrixSequence::from_flat(MatrixKind::Dual, &ws.u, p),
        iteration: start.iteration + iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
    };
    Ok((SingleResult { precisions, iterations_used: iterations, converged, objective, history }, state))
}

struct Workspace {
    t: usize,
    p: usize,
    covs: Vec<f64>,
    theta: Vec<f64>,
    z: Vec<f64>,
    z_prev: Vec<f64>,
    u: Vec<f64>,
    /// Last eigenbasis per time point; warm-starts the next decomposition.
    basis: Vec<f64>,
    /// Lower-triangle entries `(row, col)` with `row >= col`.
    pairs: Vec<(usize, usize)>,
    /// Entry-major trajectories, `pairs.len() * t`.
    traj: Vec<f64>,
}

impl Workspace {
    fn new(covs: &MatrixSequence, start: &AdmmState) -> Self {
        let (t, p) = (covs.len(), covs.dim());
        let mut eye = vec![0.0; p * p];
        for k in 0..p {
            eye[k * p + k] = 1.0;
        }
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|c| (c..p).map(move |r| (r, c))).collect();
        Self {
            t,
            p,
            covs: covs.to_flat(),
            theta: start.theta.to_flat(),
            z: start.z.to_flat(),
            z_prev: start.z.to_flat(),
            u: start.u.to_flat(),
            basis: eye.repeat(t),
            traj: vec![0.0; pairs.len() * t],
            pairs,
        }
    }

    fn theta_step(&mut self, gamma: f64, exec: Execution) -> Result<()> {
        let (p, pp) = (self.p, self.p * self.p);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let (covs, z, u) = (&self.covs, &self.z, &self.u);
        par::for_each_chunk2(exec, &mut self.theta, pp, &mut self.basis, pp, |i, theta, basis| {
            let range = i * pp..(i + 1) * pp;
            let (s, zi, ui) = (&covs[range.clone()], &z[range.clone()], &u[range]);
            // theta doubles as the work matrix A = S - gamma (Z - U)
            for k in 0..pp {
                theta[k] = s[k] - gamma * (zi[k] - ui[k]);
            }
            if theta.iter().any(|v| !v.is_finite()) {
                record(&failure, Error::NumericFailure(format!("non-finite Theta-update input at time {i}")));
                return;
            }
            SCRATCH.with_borrow_mut(|sc| {
                let jac = match &mut sc.jacobi {
                    Some(j) if j.dim() == p => j,
                    slot => slot.insert(JacobiSolver::new(p)),
                };
                if let Err(e) = jac.decompose(theta, basis) {
                    record(&failure, e);
                    return;
                }
                sc.buf.clear();
                sc.buf.extend((0..p).map(|k| theta_eigenvalue(theta[k * p + k], gamma)));
                // V diag(eig) V^T as rank-one updates of the lower triangle
                theta.iter_mut().for_each(|v| *v = 0.0);
                for (k, &ek) in sc.buf.iter().enumerate() {
                    let vk = &basis[k * p..(k + 1) * p];
                    for c in 0..p {
                        let f = ek * vk[c];
                        let col = &mut theta[c * p + c..(c + 1) * p];
                        for (o, x) in col.iter_mut().zip(&vk[c..]) {
                            *o += x * f;
                        }
                    }
                }
                for c in 0..p {
                    for r in (c + 1)..p {
                        theta[r * p + c] = theta[c * p + r];
                    }
                }
            });
        });
        match failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn z_step(&mut self, cfg: &SolverConfig) {
        let (t, p, pp) = (self.t, self.p, self.p * self.p);
        let l1 = cfg.lambda1 / cfg.gamma;
        let l2 = cfg.lambda2 / cfg.gamma;
        let (theta, u, pairs) = (&self.theta, &self.u, &self.pairs);
        par::for_each_chunk(cfg.execution, &mut self.traj, t, |e, out| {
            let (r, c) = pairs[e];
            let l1 = if r == c && !cfg.penalize_diagonal { 0.0 } else { l1 };
            SCRATCH.with_borrow_mut(|sc| {
                sc.buf.clear();
                sc.buf.extend((0..t).map(|i| theta[i * pp + c * p + r] + u[i * pp + c * p + r]));
                sc.flsa.solve_into(&sc.buf, l1, l2, out);
            });
        });
        for (e, &(r, c)) in self.pairs.iter().enumerate() {
            for i in 0..t {
                let v = self.traj[e * t + i];
                self.z[i * pp + c * p + r] = v;
                self.z[i * pp + r * p + c] = v;
            }
        }
    }

    /// Applies the dual update and returns `(max_i ||Theta_i - Z_i||^2,
    /// max_i ||Z_i - Z_i^prev||^2)`.
    fn u_step(&mut self) -> (f64, f64) {
        let pp = self.p * self.p;
        let (mut primal, mut dual) = (0.0f64, 0.0f64);
        for i in 0..self.t {
            let range = i * pp..(i + 1) * pp;
            let (mut pr, mut du) = (0.0, 0.0);
            for k in range {
                let r = self.theta[k] - self.z[k];
                self.u[k] += r;
                pr += r * r;
                let d = self.z[k] - self.z_prev[k];
                du += d * d;
            }
            primal = primal.max(pr);
            dual = dual.max(du);
        }
        (primal, dual)
    }
}

/// Per-thread buffers reused across time points, entries and iterations.
#[derive(Default)]
struct Scratch {
    jacobi: Option<JacobiSolver>,
    flsa: FlsaSolver,
    buf: Vec<f64>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

fn record(slot: &Mutex<Option<Error>>, e: Error) {
    let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
    if guard.is_none() {
        *guard = Some(e);
    }
}
