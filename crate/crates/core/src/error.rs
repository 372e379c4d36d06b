use thiserror::Error;

/// Errors surfaced by validation, configuration, and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural configuration is inconsistent (orders, partitions, specs).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data failed validation.
    #[error("data error: {0}")]
    Data(String),

    /// The sampler could not find a finite starting point.
    #[error("initialization failure: {0}")]
    Init(String),
}

pub type Result<T> = std::result::Result<T, Error>;
