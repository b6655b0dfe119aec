use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Inversion with `eta = 0` requested on a matrix that is numerically
    /// singular.
    #[error("matrix is singular and no regularization was applied (sigma_min = {sigma_min:.3e})")]
    Singular { sigma_min: f64 },

    /// A spectral bound that must hold for regularized inverses of exact
    /// metric tensors was violated.
    #[error("spectral bound violated: {0}")]
    SpectralBound(String),

    #[error("invalid allocation plan: {0}")]
    InvalidPlan(String),

    /// Input is degenerate for the requested quantity (e.g. a report that
    /// normalizes by a total variance of zero).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
