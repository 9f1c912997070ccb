use std::path::PathBuf;

/// Errors surfaced by the library. Divergent closed-form values are *not*
/// errors; they are reported as `f64::INFINITY` sentinels by the theory
/// functions.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// SVD failed to converge; never silently returns a garbage matrix.
    #[error("singular value decomposition did not converge for a {rows}x{cols} matrix")]
    SvdFailed { rows: usize, cols: usize },

    #[error("covariance factorization failed: {0}")]
    FactorizationFailed(String),

    /// Closed forms of the shared-parameter decomposition require `h != 1`
    /// and `b != h` outside the single-node underparameterized special case.
    #[error("degenerate coefficients: {0}")]
    DegenerateCoefficients(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    DataFormat { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
