use thiserror::Error;

/// Errors produced by the core library.
///
/// Each variant carries a stable machine-readable code (see [`CoreError::code`])
/// so that CLI consumers can emit single-line parseable diagnostics.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch in `{name}`: expected {expected:?}, got {got:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// Stable short code for machine consumption.
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::Parse { .. } => "E_PARSE",
            CoreError::Data(_) => "E_DATA",
            CoreError::Config(_) => "E_CONFIG",
            CoreError::Usage(_) => "E_USAGE",
            CoreError::Numeric(_) => "E_NUMERIC",
            CoreError::Shape { .. } => "E_SHAPE",
            CoreError::Checkpoint(_) => "E_CHECKPOINT",
            CoreError::Io(_) => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
