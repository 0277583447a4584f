use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] lattrans::Error),
    /// Bad configuration or arguments; the CLI maps this to exit status 2.
    #[error("configuration: {0}")]
    Config(String),
    #[error("work estimate {estimate:.3e} cell-steps exceeds the budget {limit:.3e}")]
    Budget { estimate: f64, limit: f64 },
    #[error("{0} of {1} paths diverged")]
    Diverged(usize, usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl LabError {
    pub fn is_usage(&self) -> bool {
        matches!(self, LabError::Config(_) | LabError::Toml(_))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
