//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("field contains non-finite values ({context})")]
    NonFinite { context: String },

    #[error("time {t} outside history coverage [{start}, {end}]")]
    OutsideHistory { t: f64, start: f64, end: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical blow-up detected at t = {time}")]
    BlowUp { time: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
