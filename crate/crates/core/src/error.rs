use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied input was violated (bad parameter
    /// range, malformed series, inconsistent configuration).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation failed numerically (non-finite value, failed
    /// optimization, undefined statistic).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A linear system was too ill-conditioned to solve reliably.
    #[error("singular matrix in {context} (condition number {cond:.3e})")]
    Singular { context: String, cond: f64 },

    /// A sub-fit inside a multi-level routine failed; `value` identifies the
    /// quantile level or bandwidth at which the failure occurred.
    #[error("failure at {what} = {value}: {source}")]
    At {
        what: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(what: &'static str, value: f64, source: Error) -> Self {
        Error::At {
            what,
            value,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
