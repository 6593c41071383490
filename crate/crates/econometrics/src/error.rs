use thiserror::Error;

use supsearch_core::ModelError;

#[derive(Debug, Error)]
pub enum EconError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EconError>;

pub(crate) fn domain(msg: impl Into<String>) -> EconError {
    EconError::Domain(msg.into())
}
