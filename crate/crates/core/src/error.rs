use thiserror::Error;

/// Errors raised by constructors, objectives, solvers and losses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value at prompt {prompt}, response {response}")]
    NonFinite { prompt: usize, response: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: prompt {prompt}, response {response}")]
    IndexOutOfRange { prompt: usize, response: usize },

    #[error("responses must differ (got {0} twice)")]
    SameResponse(usize),

    #[error("support violation at prompt {prompt}, response {response}: {context}")]
    SupportViolation {
        prompt: usize,
        response: usize,
        context: String,
    },

    #[error("empty support at prompt {prompt}")]
    EmptySupport { prompt: usize },

    #[error("enumeration of {size} outcome tuples exceeds the cap of {cap}")]
    EnumerationCap { size: u128, cap: u64 },

    #[error("a reward table is required: {0}")]
    MissingRewards(&'static str),

    #[error("zero probability at prompt {prompt}, response {response}; {context}")]
    ZeroProbability {
        prompt: usize,
        response: usize,
        context: &'static str,
    },

    #[error("non-finite loss after {step} steps (last finite loss {last_finite})")]
    Diverged { step: usize, last_finite: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
