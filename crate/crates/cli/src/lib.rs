//! Operator tooling around the sensor twin: batch commands and the live
//! streaming service.

pub mod capture;
pub mod commands;
pub mod messages;
pub mod options;
pub mod service;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<prexel_core::session::SessionError> for CliError {
    fn from(e: prexel_core::session::SessionError) -> Self {
        CliError::data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e)
    }
}
