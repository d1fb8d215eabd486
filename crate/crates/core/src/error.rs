use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split along the exit-code contract of the CLI: configuration
/// and input problems (exit 2) versus numerical failures (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{op} failed to converge: {detail}")]
    NonConvergence { op: &'static str, detail: String },

    #[error("degenerate generator family: numerical rank {rank}, need at least {required}")]
    DegenerateFamily { rank: usize, required: usize },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True when the error reflects bad configuration or inputs rather
    /// than a numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidInput(_)
                | Error::ShapeMismatch(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
