use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopaError {
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("series too short: need at least {needed} entries, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("infeasible ranks: {0}")]
    InfeasibleRanks(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zero-norm tensor where a positive norm is required")]
    ZeroNorm,

    #[error("unstable autoregressive coefficients: {0:?}")]
    UnstableCoefficients(Vec<f64>),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TopaError> = std::result::Result<T, E>;
