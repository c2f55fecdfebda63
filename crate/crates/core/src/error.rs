//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed (no bracket, non-finite value, singular matrix).
    #[error("numerical error: {0}")]
    Numeric(String),

    /// The requested conversion between privacy frameworks is not defined.
    #[error("unsupported conversion: {0}")]
    UnsupportedConversion(String),

    /// No finite Gaussian-DP parameter bounds this HDP level (eps >= 1).
    #[error("no finite GDP bound for eps = {0} (quantile argument reaches 1)")]
    NoFiniteGdpBound(f64),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
