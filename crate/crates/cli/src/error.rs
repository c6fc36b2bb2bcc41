use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] debridge::Error),
    #[error("{path}:{line}: {message}")]
    ConfigSyntax { path: PathBuf, line: usize, message: String },
    #[error("config key {key:?}: cannot parse {value:?}: {message}")]
    ConfigValue { key: String, value: String, message: String },
    #[error("unknown config keys: {0}")]
    UnknownKeys(String),
    #[error("no input files matched {0}")]
    NoInputs(String),
    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
