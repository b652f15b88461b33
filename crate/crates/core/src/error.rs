use thiserror::Error;

/// Library-wide error type.
///
/// `Domain` covers invalid parameters and inputs (bad model parameters,
/// points outside the sample space, hyperparameters outside the conjugate
/// domain, degenerate posteriors). `Refused` is reserved for computations
/// that would exceed a configured size cap; callers that drive a process
/// exit map `Domain` to exit code 1 and `Refused` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Refused(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail_domain {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Domain(format!($($arg)*)))
    };
}

macro_rules! bail_refused {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Refused(format!($($arg)*)))
    };
}

pub(crate) use {bail_domain, bail_refused};
