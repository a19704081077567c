use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree {degree} out of range 0..={max}")]
    DegreeOutOfRange { degree: usize, max: usize },

    #[error("invalid builder parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate simplex {index}: metric tensor is not positive-definite")]
    DegenerateSimplex { index: usize },

    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("unsupported group dimension {0} (at most 2 Killing fields)")]
    UnsupportedGroupDimension(usize),

    #[error("matrix is not symmetric positive-definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not a cochain map in degree {degree}: defect {defect:e}")]
    NotChainMap { degree: usize, defect: f64 },

    #[error("kernel not separated: relative gap {gap:e} below threshold")]
    KernelNotSeparated { gap: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (max residual {max_residual:e})")]
    NotConverged { iterations: usize, max_residual: f64, residuals: Vec<f64> },

    #[error("zero-mode count {found} does not match topological count {expected} (degree {degree})")]
    ZeroModeMismatch { degree: usize, found: usize, expected: usize },

    #[error("ill-conditioned pencil at eps = {eps}: condition estimate {cond:e}")]
    IllConditioned { eps: f64, cond: f64 },

    #[error("missing quotient data: {0}")]
    MissingQuotient(String),

    #[error("mismatched complexes: {0}")]
    MismatchedComplexes(String),

    #[error("mesh format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
