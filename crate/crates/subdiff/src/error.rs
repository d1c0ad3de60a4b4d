//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Domain or shape violation in an input argument.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The Toeplitz matrix implied by an autocovariance sequence is not
    /// positive definite; `order` is the first order whose innovation
    /// variance was non-positive.
    #[error("autocovariance is not positive definite: innovation variance {value:.6e} at order {order}")]
    NotPositiveDefinite { order: usize, value: f64 },

    /// A small dense system (Σ, F'V⁻¹F, Hessian) was singular or not PD.
    #[error("singular or non-positive-definite matrix: {0}")]
    Singular(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("no window satisfies the power-law tolerance kappa = {kappa}")]
    NoFeasibleWindow { kappa: f64 },

    #[error("optimizer did not converge after {restarts} restarts (best objectives per restart: {trace:?})")]
    NonConvergence { restarts: usize, trace: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
