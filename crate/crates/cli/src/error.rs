use qsens_core::Error;
use thiserror::Error as ThisError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    /// Wraps a library error raised while reading, writing or checking data.
    pub fn data(context: impl std::fmt::Display, e: Error) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }

    /// Wraps a library error raised by a fit or bootstrap. Input problems
    /// surfacing there are still data errors.
    pub fn estimation(context: impl std::fmt::Display, e: Error) -> Self {
        match e {
            Error::Estimation(_) | Error::DegenerateFit(_) => CliError::Estimation(format!("{context}: {e}")),
            other => CliError::data(context, other),
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Data(format!("{context}: {e}"))
    }
}
