//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! The ADMM precision update decomposes a slowly drifting sequence of
//! matrices, so [`JacobiSolver`] can start from the previous eigenbasis:
//! the matrix is first rotated into that basis, where it is already nearly
//! diagonal, and a sweep or two finishes the job.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sweeps stop once the off-diagonal Frobenius norm is below
/// `OFF_DIAG_TOL * ||A||_F`.
const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenPair {
    /// `V diag(f(d)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| f(x)),
        ));
        v * d * v.transpose()
    }
}

/// Eigendecomposition of the symmetric part `(A + A^T) / 2` of `a`.
pub fn eigh(a: &DMatrix<f64>) -> Result<EigenPair> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::Eigen(format!("matrix is not square: {:?}", a.shape())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite entry".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut work = sym.as_slice().to_vec();
    let mut vecs = DMatrix::<f64>::identity(p, p).as_slice().to_vec();
    jacobi_sweeps(&mut work, &mut vecs, p)?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| work[x * p + x].total_cmp(&work[y * p + y]));
    let eigenvalues = order.iter().map(|&k| work[k * p + k]).collect();
    let eigenvectors = DMatrix::from_fn(p, p, |r, c| vecs[order[c] * p + r]);
    Ok(EigenPair { eigenvalues, eigenvectors })
}

/// Reusable Jacobi state for repeated decompositions of nearby matrices.
#[derive(Debug, Clone)]
pub(crate) struct JacobiSolver {
    p: usize,
    scratch: Vec<f64>,
    rotated: Vec<f64>,
    rotations: Vec<f64>,
}

impl JacobiSolver {
    pub(crate) fn new(p: usize) -> Self {
        Self { p, scratch: vec![0.0; p * p], rotated: vec![0.0; p * p], rotations: vec![0.0; p * p] }
    }

    pub(crate) fn dim(&self) -> usize {
        self.p
    }

    /// Decomposes the symmetric column-major matrix `a` in place.
    ///
    /// On entry `basis` holds an orthonormal starting basis (identity for a
    /// cold start); on exit it holds the eigenvectors and the diagonal of
    /// `a` the matching (unsorted) eigenvalues.
    pub(crate) fn decompose(&mut self, a: &mut [f64], basis: &mut [f64]) -> Result<()> {
        let p = self.p;
        matmul(a, basis, &mut self.scratch, p);
        // B^T (A B) is symmetric; form one triangle and mirror it
        for c in 0..p {
            let sc = &self.scratch[c * p..(c + 1) * p];
            for r in c..p {
                let br = &basis[r * p..(r + 1) * p];
                let v: f64 = br.iter().zip(sc).map(|(x, y)| x * y).sum();
                self.rotated[c * p + r] = v;
                self.rotated[r * p + c] = v;
            }
        }
        self.rotations.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..p {
            self.rotations[i * p + i] = 1.0;
        }
        jacobi_sweeps(&mut self.rotated, &mut self.rotations, p)?;
        matmul(basis, &self.rotations, &mut self.scratch, p);
        basis.copy_from_slice(&self.scratch);
        a.copy_from_slice(&self.rotated);
        Ok(())
    }
}

/// `out = x * y` for column-major `p x p` matrices.
fn matmul(x: &[f64], y: &[f64], out: &mut [f64], p: usize) {
    for c in 0..p {
        let yc = &y[c * p..(c + 1) * p];
        let oc = &mut out[c * p..(c + 1) * p];
        oc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &ykc) in yc.iter().enumerate() {
            if ykc == 0.0 {
                continue;
            }
            let xk = &x[k * p..(k + 1) * p];
            for (o, xv) in oc.iter_mut().zip(xk) {
                *o += xv * ykc;
            }
        }
    }
}

/// Cyclic Jacobi on a full symmetric column-major matrix. Rotations are
/// accumulated into `v` (right-multiplied).
fn jacobi_sweeps(a: &mut [f64], v: &mut [f64], p: usize) -> Result<()> {
    let frob2: f64 = a.iter().map(|x| x * x).sum();
    if frob2 == 0.0 || p < 2 {
        return Ok(());
    }
    let target = OFF_DIAG_TOL * OFF_DIAG_TOL * frob2;
    let skip = OFF_DIAG_TOL * frob2.sqrt() / (p as f64 * 10.0);
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for c in 0..p {
            for r in (c + 1)..p {
                off += 2.0 * a[c * p + r] * a[c * p + r];
            }
        }
        if off <= target {
            return Ok(());
        }
        for q in 1..p {
            for pp in 0..q {
                let apq = a[q * p + pp];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[pp * p + pp];
                let aqq = a[q * p + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(a, v, p, pp, q, c, s);
            }
        }
    }
    Err(Error::Eigen(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")))
}

/// Two-sided rotation of rows and columns `p`, `q` with `a_pq` zeroed,
/// keeping both triangles in sync.
#[inline]
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let apq = a[q * n + p];
    let t = s / c;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[p * n + k];
        let akq = a[q * n + k];
        let np = c * akp - s * akq;
        let nq = s * akp + c * akq;
        a[p * n + k] = np;
        a[q * n + k] = nq;
        a[k * n + p] = np;
        a[k * n + q] = nq;
    }
    a[p * n + p] -= t * apq;
    a[q * n + q] += t * apq;
    a[q * n + p] = 0.0;
    a[p * n + q] = 0.0;
    let (vp, vq) = if p < q {
        let (lo, hi) = v.split_at_mut(q * n);
        (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
    } else {
        let (lo, hi) = v.split_at_mut(p * n);
        (&mut hi[..n], &mut lo[q * n..(q + 1) * n])
    };
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
