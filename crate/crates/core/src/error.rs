use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear or reciprocal fit cannot be inverted (zero slope/intercept,
    /// identical abscissae).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no reflectance minimum found between the critical angle and grazing incidence")]
    NoResonance,

    /// Caller broke an input contract, e.g. passed an unsorted stream.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
