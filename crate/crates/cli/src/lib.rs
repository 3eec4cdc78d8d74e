//! `tocr`: OCR, dataset, training and serving commands.

pub mod commands;
pub mod config;
pub mod server;

use tocr_core::nn::NnError;
use tocr_core::CoreError;

/// Exit 1 for bad input, 2 for everything else.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let input = match &e {
            CoreError::Decode(_)
            | CoreError::Param(_)
            | CoreError::Taxonomy(_)
            | CoreError::Config(_)
            | CoreError::Ingest { .. }
            | CoreError::Manifest(_)
            | CoreError::NoContent(_)
            | CoreError::Io(_)
            | CoreError::Json(_) => true,
            CoreError::Nn(n) => matches!(
                n,
                NnError::Parse(_) | NnError::Load(_) | NnError::Io(_) | NnError::Data(_) | NnError::Json(_)
            ),
            CoreError::Dimension(_) => false,
        };
        if input {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CoreError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
