use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpinrError>;

#[derive(Debug, Error)]
pub enum SpinrError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scatterer beyond unambiguous range: fractional bin {bin:.3} >= N = {n}")]
    BeyondUnambiguousRange { bin: f64, n: usize },

    #[error("point coincides with a sensor position (tx or rx)")]
    CoincidentSensor,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unknown {kind} {name:?}; available: {available}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SpinrError {
    /// Short machine-readable class used by the CLI on stderr.
    pub fn class(&self) -> &'static str {
        match self {
            SpinrError::InvalidConfig(_) => "invalid_config",
            SpinrError::BeyondUnambiguousRange { .. } => "beyond_unambiguous_range",
            SpinrError::CoincidentSensor => "coincident_sensor",
            SpinrError::ShapeMismatch(_) => "shape_mismatch",
            SpinrError::Empty(_) => "empty_input",
            SpinrError::NonFiniteLoss { .. } => "non_finite_loss",
            SpinrError::BadMagic { .. } => "bad_magic",
            SpinrError::VersionMismatch { .. } => "version_mismatch",
            SpinrError::Truncated(_) => "truncated",
            SpinrError::MalformedHeader(_) => "malformed_header",
            SpinrError::UnknownStrategy { .. } => "unknown_strategy",
            SpinrError::Io(_) => "io",
            SpinrError::Json(_) => "json",
        }
    }
}
