use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied values outside the documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed or inconsistent data read from disk.
    #[error("data error: {0}")]
    Data(String),

    /// Some transaction row has no compatible column in the EM master.
    #[error("coverage violation: row {row} has zero predicted probability")]
    Coverage { row: usize },

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
