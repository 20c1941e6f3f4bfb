//! Regime-switching autoregressive time-series models with time-varying
//! transition probabilities (TVTP).
//!
//! The library provides:
//! - model specification and an unconstrained parameterization ([`model`]),
//! - transition kernels, including an autoregressive latent-factor kernel
//!   whose transition probability is a truncated Gaussian integral
//!   ([`transition`]),
//! - the scaled forward filter, a path-enumeration likelihood oracle, and a
//!   backward smoother ([`filter`]),
//! - score, Hessian, and three asymptotic-covariance estimators with
//!   confidence intervals ([`inference`]),
//! - BFGS maximum-likelihood fitting ([`optimize`]),
//! - data-generating processes for all supported kernels ([`simulate`]),
//! - numerical stationarity and moment diagnostics ([`diagnostics`]),
//! - a parallel Monte Carlo coverage harness ([`montecarlo`]).

pub mod diagnostics;
pub mod filter;
pub mod inference;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod optimize;
pub mod simulate;
pub mod transition;

pub use model::{Dataset, KernelFamily, ModelSpec, ParamVector, TransitionKernelSpec};

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("zero predictive likelihood at period t={t}")]
    ZeroLikelihood { t: usize },
    #[error("instance too large to enumerate: {0}")]
    TooLarge(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("optimization failed: {0}")]
    OptimFailed(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
