use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or prior was handed parameters outside its support.
    #[error("invalid {what} parameters: {reason}")]
    Param { what: &'static str, reason: String },

    /// A function was evaluated outside of its domain.
    #[error("{what}: argument outside domain ({reason})")]
    Domain { what: &'static str, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The requested hyperparameter strategy cannot be applied to this data.
    #[error("hyperparameter strategy failed: {0}")]
    Strategy(String),

    #[error("chain failed at iteration {iteration} in {step}: {reason}")]
    Chain {
        iteration: usize,
        step: &'static str,
        reason: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Param {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            what,
            reason: reason.into(),
        }
    }
}
