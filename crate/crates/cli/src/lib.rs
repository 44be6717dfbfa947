//! Command-line driver: configuration, run modes and the self-test suite.

pub mod config;
pub mod run;
pub mod selftest;

use std::path::PathBuf;

pub use config::{Mode, ModelSpec, RawConfig, RunConfig};
pub use run::{run, sha256_hex, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}` as {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("self-test failed: {0}")]
    Selftest(String),
    #[error(transparent)]
    Core(#[from] commnet::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
