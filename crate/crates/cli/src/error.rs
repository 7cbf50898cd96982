use thiserror::Error;

/// Every failure the binary reports. `Display` is the single-line message
/// written to stderr, prefixed with a machine-parseable kind.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[usage]: {0}")]
    Usage(String),
    #[error("error[config]: {0}")]
    Config(String),
    #[error("error[schema]: {0}")]
    Schema(String),
    #[error("error[runtime]: {0}")]
    Runtime(String),
    #[error("error[insufficient-data]: {0}")]
    InsufficientData(String),
    #[error("error[io]: {0}")]
    Io(String),
    #[error("error[criteria]: {0}")]
    Criteria(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Schema(_) => 2,
            CliError::Runtime(_) | CliError::InsufficientData(_) => 3,
            CliError::Io(_) | CliError::Criteria(_) => 1,
        }
    }

    /// The message with any embedded line breaks folded into spaces.
    pub fn single_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<cartpush_core::Error> for CliError {
    fn from(e: cartpush_core::Error) -> Self {
        match e {
            cartpush_core::Error::InsufficientData(m) => CliError::InsufficientData(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
