//! Command-line front end for posted-price bandit experiments: config
//! loading, the `run` / `validate` / `bench-timing` commands and their CSV and
//! JSON outputs.

pub mod bench;
pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    #[error("{0}")]
    Config(String),
    /// Output directory or file cannot be written.
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Simulation(#[from] postprice::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(postprice::Error::Config(_)) => 2,
            CliError::Output(_) => 3,
            CliError::Simulation(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
