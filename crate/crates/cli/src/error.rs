//! Harness-level error type mapped onto process exit codes.

use std::error::Error;
use std::fmt;
use std::io;

/// Exit code 1 for anything the user can fix (bad input, bad config, bad
/// paths); exit code 2 when the numbers themselves went wrong.
#[derive(Debug)]
pub enum HarnessError {
    Validation(String),
    Numerical(String),
    Io { context: String, source: io::Error },
}

impl HarnessError {
    pub fn validation(msg: impl Into<String>) -> HarnessError {
        HarnessError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> HarnessError {
        HarnessError::Numerical(msg.into())
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> HarnessError {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Io { .. } => 1,
            HarnessError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Validation(msg) => write!(f, "{msg}"),
            HarnessError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            HarnessError::Io { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl Error for HarnessError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            HarnessError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<emofusion_model::dialog::ConfigError> for HarnessError {
    fn from(e: emofusion_model::dialog::ConfigError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}

impl From<emofusion_model::dialog::DialogError> for HarnessError {
    fn from(e: emofusion_model::dialog::DialogError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}

impl From<emofusion_model::checkpoint::CheckpointError> for HarnessError {
    fn from(e: emofusion_model::checkpoint::CheckpointError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}

impl From<emofusion_model::extractor::ExtractorError> for HarnessError {
    fn from(e: emofusion_model::extractor::ExtractorError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}

impl From<emofusion_signal::SignalError> for HarnessError {
    fn from(e: emofusion_signal::SignalError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}
