use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of an operation (zero vector, pole, bad chart).
    #[error("domain error: {0}")]
    Domain(String),

    /// Metric parameters violate the Finsler conditions.
    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    /// The Hilbert form fails to be contact at a fiber point.
    #[error("degenerate contact form at {0}")]
    DegenerateContact(String),

    /// A construction could not be carried out with the given data.
    #[error("construction failed: {0}")]
    Construction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
