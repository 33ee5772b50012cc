use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("value out of domain in {op}: {reason}")]
    Domain { op: &'static str, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model state: {0}")]
    State(String),
    #[error("model has {units} units; enumeration is capped at {limit}")]
    TooLarge { units: usize, limit: usize },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(reason: impl Into<String>) -> Self {
        Error::Config(reason.into())
    }
}
