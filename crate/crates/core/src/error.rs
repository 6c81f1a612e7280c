use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants partition failures the way the command-line driver maps them
/// onto exit codes: `Domain` and `Parse` are caller mistakes, `Numerical`
/// covers quadrature or integration breakdowns, `BoundExpired` is the
/// comparison bound for the Riccati equation running past its validity.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("comparison bound undefined at t = {t} (denominator {denominator})")]
    BoundExpired { t: f64, denominator: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures caused by invalid input rather than by the numerics.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
