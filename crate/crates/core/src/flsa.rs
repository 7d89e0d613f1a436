//! Exact one-dimensional fused lasso signal approximator.
//!
//! Minimises
//!
//! ```text
//! 1/2 sum_i (z_i - y_i)^2 + lambda1 sum_i |z_i| + lambda2 sum_{i>=2} |z_i - z_{i-1}|
//! ```
//!
//! The fusion term is handled by a forward dynamic-programming pass over the
//! derivative of the partial objective, which stays piecewise linear and is
//! stored as a deque of knots. A backward pass through the clamping bounds
//! recorded at each step recovers the minimiser. The sparsity term is then
//! applied by soft-thresholding, which is exact for this problem.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlsaProblem {
    pub y: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl FlsaProblem {
    pub fn new(y: Vec<f64>, lambda1: f64, lambda2: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("empty FLSA signal".into()));
        }
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { y, lambda1, lambda2 })
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        flsa_objective(&self.y, z, self.lambda1, self.lambda2)
    }
}

pub fn flsa_objective(y: &[f64], z: &[f64], lambda1: f64, lambda2: f64) -> f64 {
    let fit: f64 = y.iter().zip(z).map(|(a, b)| 0.5 * (b - a) * (b - a)).sum();
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    let tv: f64 = z.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    fit + lambda1 * l1 + lambda2 * tv
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn flsa_solve(prob: &FlsaProblem) -> Vec<f64> {
    let mut out = vec![0.0; prob.y.len()];
    FlsaSolver::default().solve_into(&prob.y, prob.lambda1, prob.lambda2, &mut out);
    out
}

/// Change in the derivative's linear piece `slope * x + offset` when
/// crossing `x` from left to right.
#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    slope: f64,
    offset: f64,
}

/// Reusable buffers; one per worker avoids reallocating in ADMM loops.
#[derive(Debug, Default, Clone)]
pub struct FlsaSolver {
    knots: VecDeque<Knot>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl FlsaSolver {
    /// Writes the minimiser for `(y, lambda1, lambda2)` into `out`.
    pub fn solve_into(&mut self, y: &[f64], lambda1: f64, lambda2: f64, out: &mut [f64]) {
        debug_assert_eq!(y.len(), out.len());
        if lambda2 > 0.0 && y.len() > 1 {
            self.total_variation(y, lambda2, out);
        } else {
            out.copy_from_slice(y);
        }
        if lambda1 > 0.0 {
            out.iter_mut().for_each(|z| *z = soft_threshold(*z, lambda1));
        }
    }

    /// Exact minimiser of `1/2 ||z - y||^2 + lam ||D z||_1`.
    fn total_variation(&mut self, y: &[f64], lam: f64, out: &mut [f64]) {
        let n = y.len();
        self.knots.clear();
        self.lower.clear();
        self.upper.clear();

        // Derivative of the partial objective at step k is (x - y_k) plus the
        // previous derivative clipped to [-lam, lam]. Left of every knot the
        // clipped part is the constant -lam, right of every knot it is +lam.
        for &yk in &y[..n - 1] {
            // before the first step there is no clipped term at all
            let edge = if self.knots.is_empty() { 0.0 } else { lam };
            // scan up from the left for the point where the derivative is -lam
            let (mut slope, mut offset) = (1.0, -yk - edge);
            while let Some(k) = self.knots.front() {
                if slope * k.x + offset > -lam {
                    break;
                }
                slope += k.slope;
                offset += k.offset;
                self.knots.pop_front();
            }
            let lo = (-lam - offset) / slope;
            self.knots.push_front(Knot { x: lo, slope, offset: offset + lam });

            // scan down from the right for the point where it equals +lam
            let (mut slope, mut offset) = (1.0, -yk + edge);
            while let Some(k) = self.knots.back() {
                if slope * k.x + offset < lam {
                    break;
                }
                slope -= k.slope;
                offset -= k.offset;
                self.knots.pop_back();
            }
            let hi = (lam - offset) / slope;
            self.knots.push_back(Knot { x: hi, slope: -slope, offset: lam - offset });

            self.lower.push(lo);
            self.upper.push(hi);
        }

        // the last derivative's zero is the final coordinate
        let yn = y[n - 1];
        let (mut slope, mut offset) = (1.0, -yn - lam);
        for k in &self.knots {
            if slope * k.x + offset > 0.0 {
                break;
            }
            slope += k.slope;
            offset += k.offset;
        }
        out[n - 1] = -offset / slope;

        for k in (0..n - 1).rev() {
            out[k] = out[k + 1].clamp(self.lower[k], self.upper[k]);
        }
    }
}
