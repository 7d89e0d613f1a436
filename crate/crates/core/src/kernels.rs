//! Kernel-weighted local means and covariances.
//!
//! For time `i` with weights `w_ij = K_h(i, j)` over all `j`:
//!
//! ```text
//! mean_i = sum_j w_ij X_j / sum_j w_ij
//! S_i    = sum_j w_ij (X_j - mean_j)(X_j - mean_j)^T / sum_j w_ij
//! ```
//!
//! Residuals are centred by the local mean at the observation's own time
//! (`mean_j`) unless [`Centering::AtTarget`] is requested.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{MatrixKind, MatrixSequence, TimeSeries};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    /// Sliding window.
    Uniform,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelKind::Gaussian),
            "uniform" | "window" | "sliding-window" => Ok(KernelKind::Uniform),
            other => Err(Error::InvalidInput(format!("unknown kernel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub h: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("kernel width must be positive, got {h}")));
        }
        Ok(Self { kind, h })
    }

    pub fn gaussian(h: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, h)
    }

    pub fn uniform(h: f64) -> Result<Self> {
        Self::new(KernelKind::Uniform, h)
    }

    /// `exp(-(i-j)^2 / h)` for the Gaussian kernel, `1{|i-j| < h}` for the
    /// uniform one.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j) as f64;
        match self.kind {
            KernelKind::Gaussian => (-(d * d) / self.h).exp(),
            KernelKind::Uniform => {
                if d < self.h {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Dense `t x t` weight matrix, row `i` holding `K_h(i, .)`.
    pub(crate) fn weight_matrix(&self, t: usize) -> Vec<f64> {
        // weights depend only on |i - j|
        let profile: Vec<f64> = (0..t).map(|d| self.weight(0, d)).collect();
        let mut w = vec![0.0; t * t];
        for i in 0..t {
            for j in 0..t {
                w[i * t + j] = profile[i.abs_diff(j)];
            }
        }
        w
    }

    pub(crate) fn check_usable(&self) -> Result<()> {
        if self.kind == KernelKind::Uniform && self.h < 1.0 {
            return Err(Error::DegenerateKernel(format!("uniform kernel needs h >= 1, got {}", self.h)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Centre `X_j` by the local mean at time `j`.
    #[default]
    AtObservation,
    /// Centre `X_j` by the local mean at the target time `i`.
    AtTarget,
}

/// Kernel-weighted means, one `p`-vector per time point.
pub fn estimate_means(ts: &TimeSeries, spec: &KernelSpec) -> Result<Vec<Vec<f64>>> {
    spec.check_usable()?;
    let t = ts.len();
    let w = spec.weight_matrix(t);
    Ok(weighted_means(ts, &w))
}

fn weighted_means(ts: &TimeSeries, w: &[f64]) -> Vec<Vec<f64>> {
    let (t, p) = (ts.len(), ts.dim());
    let x = ts.values();
    (0..t)
        .map(|i| {
            let row = &w[i * t..(i + 1) * t];
            let total: f64 = row.iter().sum();
            let mut m = vec![0.0; p];
            for (j, &wij) in row.iter().enumerate() {
                if wij == 0.0 {
                    continue;
                }
                for (c, mc) in m.iter_mut().enumerate() {
                    *mc += wij * x[(j, c)];
                }
            }
            m.iter_mut().for_each(|v| *v /= total);
            m
        })
        .collect()
}

pub fn estimate_covariances(ts: &TimeSeries, spec: &KernelSpec) -> Result<MatrixSequence> {
    estimate_covariances_with(ts, spec, Centering::default(), Execution::default())
}

pub fn estimate_covariances_with(
    ts: &TimeSeries,
    spec: &KernelSpec,
    centering: Centering,
    exec: Execution,
) -> Result<MatrixSequence> {
    spec.check_usable()?;
    let (t, p) = (ts.len(), ts.dim());
    let w = spec.weight_matrix(t);
    let means = weighted_means(ts, &w);
    let x = ts.values();
    let pp = p * p;

    let mut out = vec![0.0; t * pp];
    match centering {
        Centering::AtObservation => {
            // residual outer products are fixed per j; S_i is a weighted sum of them
            let mut outer = vec![0.0; t * pp];
            for j in 0..t {
                let r: Vec<f64> = (0..p).map(|c| x[(j, c)] - means[j][c]).collect();
                let o = &mut outer[j * pp..(j + 1) * pp];
                for b in 0..p {
                    for a in 0..p {
                        o[b * p + a] = r[a] * r[b];
                    }
                }
            }
            par::for_each_chunk(exec, &mut out, pp, |i, s| {
                let row = &w[i * t..(i + 1) * t];
                let total: f64 = row.iter().sum();
                for (j, &wij) in row.iter().enumerate() {
                    if wij == 0.0 {
                        continue;
                    }
                    let o = &outer[j * pp..(j + 1) * pp];
                    for (sv, ov) in s.iter_mut().zip(o) {
                        *sv += wij * ov;
                    }
                }
                s.iter_mut().for_each(|v| *v /= total);
            });
        }
        Centering::AtTarget => {
            par::for_each_chunk(exec, &mut out, pp, |i, s| {
                let row = &w[i * t..(i + 1) * t];
                let total: f64 = row.iter().sum();
                let m = &means[i];
                let mut r = vec![0.0; p];
                for (j, &wij) in row.iter().enumerate() {
                    if wij == 0.0 {
                        continue;
                    }
                    for (c, rc) in r.iter_mut().enumerate() {
                        *rc = x[(j, c)] - m[c];
                    }
                    for b in 0..p {
                        for a in 0..p {
                            s[b * p + a] += wij * r[a] * r[b];
                        }
                    }
                }
                s.iter_mut().for_each(|v| *v /= total);
            });
        }
    }
    let matrices = out
        .chunks(pp)
        .map(|c| {
            let m = DMatrix::from_column_slice(p, p, c);
            (&m + m.transpose()) * 0.5
        })
        .collect();
    Ok(MatrixSequence::new_unchecked(MatrixKind::Covariance, matrices))
}
