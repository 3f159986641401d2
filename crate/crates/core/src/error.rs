use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported {kind}: {reason}")]
    UnsupportedKind { kind: String, reason: String },

    #[error("defective operator: reconstruction residual {residual:.3e} exceeds {limit:.3e}")]
    DefectiveOperator { residual: f64, limit: f64 },

    #[error("operator has a complex spectrum; use the complex field")]
    ComplexSpectrum,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("divergent filter: {0}")]
    Divergent(String),

    #[error("singular mode {index}: |1 - b_i^T alpha_1| = {gap:.3e}")]
    SingularMode { index: usize, gap: f64 },

    #[error("coefficient at ({row}, {col}) lies outside the allowed support")]
    SupportViolation { row: usize, col: usize },

    #[error("locality violation: node {node} uses a value from non-neighbor {source_node}")]
    LocalityViolation { node: usize, source_node: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("retry budget exhausted after {attempts} attempts: {what}")]
    RetryBudgetExhausted { attempts: usize, what: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }
}
