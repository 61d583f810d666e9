use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    /// A parameter regime precondition failed; the message names the inequality.
    #[error("regime violation: {0}")]
    Regime(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("size guard exceeded: {0}")]
    Size(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn regime<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Regime(msg.into()))
}
