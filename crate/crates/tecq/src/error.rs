//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A structurally invalid configuration (unsupported code, bad grid, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The request is valid but computationally infeasible by design
    /// (e.g. flat vector quantization beyond 16 feedback bits).
    #[error("refusing infeasible request: {0}")]
    Feasibility(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn feasibility(msg: impl Into<String>) -> Self {
        Error::Feasibility(msg.into())
    }

    /// Process exit code for the CLI: 2 for configuration/argument problems,
    /// 3 for i/o problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
