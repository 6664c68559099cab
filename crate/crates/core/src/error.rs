use thiserror::Error;

/// Errors surfaced by the library and mapped to process exit codes by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A model assumption or config invariant is violated. Exit code 2.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Field shape does not conform to the geometry it is used with.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The time integration produced a growing or non-finite energy. Exit code 3.
    #[error("runtime instability at t = {t}: {reason}")]
    Instability { t: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for validation/config failures, 3 for runtime
    /// instability, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::ShapeMismatch(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Instability { .. } => 3,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
