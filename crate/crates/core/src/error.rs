use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {n1}x{n2}: {reason}")]
    InvalidGrid { n1: usize, n2: usize, reason: &'static str },

    #[error("field contains a non-finite value at ({s1}, {s2})")]
    NonFinite { s1: usize, s2: usize },

    #[error("invalid block {b1}x{b2} for a {n1}x{n2} grid")]
    InvalidBlock { b1: usize, b2: usize, n1: usize, n2: usize },

    #[error("invalid bandwidth ({0}, {1}): components must lie in (0, pi]")]
    InvalidBandwidth(f64, f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {required} values, got {got}")]
    TooFewValues { required: usize, got: usize },

    #[error("lag ({0}, {1}) has no pair of observations inside the grid")]
    NoLagPairs(i64, i64),

    #[error("degenerate bootstrap: Var* = {0} is not positive")]
    DegenerateBootstrap(f64),

    #[error("quadrature did not stabilise after {0} refinements")]
    QuadratureDiverged(u32),

    #[error("model has no closed-form spectral density: {0}")]
    NoSpectralDensity(String),

    #[error("circulant embedding has negative eigenvalues and the {n}-point grid exceeds the dense limit {limit}")]
    EmbeddingFailed { n: usize, limit: usize },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("grid of {n} points exceeds the dense Cholesky limit {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("cannot parse psi descriptor `{0}`")]
    PsiDescriptor(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { location: location.into(), message: message.into() }
    }

    /// True for errors caused by user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::PsiDescriptor(_)
                | Error::InvalidParameter { .. }
                | Error::InvalidBlock { .. }
                | Error::InvalidGrid { .. }
                | Error::InvalidBandwidth(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
