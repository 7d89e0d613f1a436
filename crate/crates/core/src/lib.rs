//! Time-varying sparse precision matrices from multivariate time series.

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod data;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod flsa;
pub mod kernels;
pub mod metrics;
pub mod par;
pub mod simgen;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
