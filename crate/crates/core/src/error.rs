use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The incident contact-point velocity is zero, so the energy ellipse collapses.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The contact point is not approaching the surface.
    #[error("no impact: normal contact velocity {0} is not approaching")]
    NoImpact(f64),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("gaussian process fit failed: {0}")]
    GpFit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("data leakage: {0} evaluation trials were used for training")]
    SplitLeakage(usize),

    #[error("dataset error at line {line}: {msg}")]
    Dataset { line: u64, msg: String },

    #[error("simulated trial rejected: {0}")]
    Rejected(crate::dataforge::RejectReason),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
