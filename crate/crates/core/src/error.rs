use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A structure grew past a hard size limit, or an exhaustive check was
    /// asked to enumerate a domain that is too large.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The declared privacy budget has been spent.
    #[error("privacy budget exhausted: {used} of {declared} queries used")]
    BudgetExhausted { used: u64, declared: u64 },

    /// A pluggable component (oracle, learner, releaser) broke its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A lookup into a finished structure referenced an unknown key.
    #[error("unknown key: {0}")]
    UnknownKey(String),

    /// Input data failed to parse or validate.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
