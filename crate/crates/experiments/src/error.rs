use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mpdp_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state space of {states} states exceeds the budget of {budget}")]
    Size { states: u64, budget: u64 },
    #[error("{0}")]
    TypeMismatch(String),
    #[error("infeasible demand: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Csv { path: PathBuf, detail: String },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
