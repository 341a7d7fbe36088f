use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The experiment or component configuration cannot be satisfied.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller broke an operation's precondition (length mismatch, reward
    /// outside `[0, 1]`, index requested for an unplayed arm, ...).
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
