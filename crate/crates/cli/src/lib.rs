//! Std companion of `jointlab-core`: configuration files, checkpoints,
//! CSV/JSON outputs, parallel Monte-Carlo evaluation and the `jointlab`
//! command line.

pub mod commands;
pub mod config;
pub mod io;
pub mod parallel;
pub mod selftest;

use jointlab_core::{ConfigError, MechanismError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{0}: malformed file: {1}")]
    Format(String, String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Config(e.to_string())
    }
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}
