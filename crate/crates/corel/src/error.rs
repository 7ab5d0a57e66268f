//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),

    #[error("unstable system in {context}: spectral radius {rho}")]
    Instability { rho: f64, context: String },

    #[error("solver did not converge after {iters} iterations, last residual {residual:e}")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("observability failure: {0}")]
    Observability(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("refused: {0}")]
    Refusal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
