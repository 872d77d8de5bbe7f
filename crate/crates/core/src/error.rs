use thiserror::Error;

/// Errors surfaced by the navigation stack.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("causality violation: decision time {t_ctrl} precedes measurement time {t_meas}")]
    Causality { t_ctrl: f64, t_meas: f64 },
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NavError {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            NavError::InvalidInput(_) => "invalid_input",
            NavError::Config(_) => "config",
            NavError::Causality { .. } => "causality",
            NavError::Generation(_) => "generation",
            NavError::Shape(_) => "shape",
            NavError::Usage(_) => "usage",
            NavError::Divergence(_) => "divergence",
            NavError::Parse(_) => "parse",
            NavError::Io(_) => "io",
            NavError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = NavError> = std::result::Result<T, E>;
