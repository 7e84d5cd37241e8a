use thiserror::Error;

/// Every failure the crate can report.
///
/// `Certification` is the only variant that means "the math did not hold";
/// everything else is a caller or data problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("certification failure [{check}]: {detail}")]
    Certification { check: String, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn cert(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Certification {
            check: check.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
