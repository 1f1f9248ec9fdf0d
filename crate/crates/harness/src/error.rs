use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{method} (seed {seed}) failed: {source}")]
    Method {
        method: String,
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    /// A shared per-seed artifact (dictionary, regression weights, ...)
    /// could not be built; every method depending on it fails with this.
    #[error("{what} unavailable: {message}")]
    Artifact { what: &'static str, message: String },
    #[error(transparent)]
    Core(#[from] dadil_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// CLI exit code: 2 for configuration/parse problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Parse(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
