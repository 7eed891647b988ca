//! Crate-wide error type with module-qualified messages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input file does not match the expected schema (missing column, bad header).
    #[error("{0}: schema error: {1}")]
    Schema(&'static str, String),

    /// Input values violate a documented invariant (negative response, duplicate id).
    #[error("{0}: validation error: {1}")]
    Validation(&'static str, String),

    /// A configuration value is inconsistent or out of range.
    #[error("{0}: config error: {1}")]
    Config(&'static str, String),

    /// A numerical routine failed (non-SPD matrix, degenerate system).
    #[error("{0}: numerical error: {1}")]
    Numerical(&'static str, String),

    /// A prerequisite artifact (samples directory, grid file) is absent.
    #[error("{0}: missing prerequisite: {1}")]
    MissingArtifact(&'static str, String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Schema(module, msg.into())
    }
    pub fn validation(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Validation(module, msg.into())
    }
    pub fn config(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Config(module, msg.into())
    }
    pub fn numerical(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical(module, msg.into())
    }
    pub fn missing(module: &'static str, msg: impl Into<String>) -> Self {
        Error::MissingArtifact(module, msg.into())
    }
}
