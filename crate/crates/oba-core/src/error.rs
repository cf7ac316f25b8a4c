use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped so the CLI can map them onto its exit codes:
/// everything except [`ObaError::Numeric`] is a data/usage problem.
#[derive(Debug, Error)]
pub enum ObaError {
    /// Tensor or layer shape disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or truncated on-disk artifact (bad magic, version, payload).
    #[error("format error: {0}")]
    Format(String),

    /// A model bundle is missing a required component.
    #[error("missing component: {0}")]
    MissingComponent(String),

    /// Numeric failure: divergence, NaN gradient, singular system.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, ObaError>;

impl ObaError {
    /// True for failures of the arithmetic itself rather than of inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ObaError::Numeric(_))
    }
}
