use thiserror::Error;

/// Errors produced by model construction, the recursions and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system spec: field `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("state index {index} out of range (model has {num_states} states)")]
    StateOutOfRange { index: usize, num_states: usize },

    #[error("instance too large for enumeration: {count} policies exceed limit {limit}")]
    TooLarge { count: f64, limit: f64 },

    #[error("safety level {alpha} is not attainable (best is {best})")]
    Unattainable { alpha: f64, best: f64 },

    #[error("empty rollout batch")]
    EmptyBatch,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
