use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("index out of range: {what} = {value}, allowed {allowed}")]
    Range {
        what: &'static str,
        value: usize,
        allowed: String,
    },

    #[error("degenerate spectral gap: lambda_{upper} = {lambda_upper:e} vs lambda_{lower} = {lambda_lower:e}")]
    DegenerateGap {
        upper: usize,
        lower: usize,
        lambda_upper: f64,
        lambda_lower: f64,
    },

    #[error("numeric failure in {stage}: {detail}")]
    Numeric { stage: &'static str, detail: String },

    #[error("operation requires a parametric eigenvalue profile, got {0}")]
    UnsupportedProfile(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient replicates: need at least {needed}, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
