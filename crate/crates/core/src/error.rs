use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition of an operation was violated by the caller.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A configured resource cap would be exceeded.
    #[error("resource limit: {what} needs {requested}, cap is {cap}")]
    Resource {
        what: &'static str,
        requested: u64,
        cap: u64,
    },

    /// The time integration produced a NaN or infinite value.
    #[error("non-finite value produced at time step {step}")]
    NonFinite { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit refused: {0}")]
    Fit(String),

    #[error("invalid data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
