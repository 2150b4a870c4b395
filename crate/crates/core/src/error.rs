use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("resource guard: {what} requires {requested} qubits per axis, limit is {limit}")]
    Resource {
        what: &'static str,
        requested: u32,
        limit: u32,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The overlap matrix could not be regularized; `discarded` of `dim`
    /// eigendirections fell below the cutoff.
    #[error("overlap matrix is singular beyond regularization ({discarded} of {dim} directions discarded)")]
    Conditioning { discarded: usize, dim: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
