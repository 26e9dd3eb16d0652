use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("size guard: dimension {dim} exceeds limit {limit}")]
    SizeGuard { dim: usize, limit: usize },
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Unsupported(_) => "unsupported",
            Error::Divergent(_) => "divergent",
            Error::SizeGuard { .. } => "size_guard",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Solver(_) => "solver",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
