//! Library half of the `spheremark` command-line tool: file formats,
//! configuration handling and command orchestration. The binary in
//! `main.rs` is a thin argument-parsing shell around [`run`].

pub mod config;
pub mod io;
pub mod presets;
pub mod run;

use thiserror::Error;

/// Process exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numeric failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }
    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }
    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Numeric,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io error: {e}"))
    }
}

impl From<spheremark::PatternError> for CliError {
    fn from(e: spheremark::PatternError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<spheremark::GeomError> for CliError {
    fn from(e: spheremark::GeomError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<spheremark::SummaryError> for CliError {
    fn from(e: spheremark::SummaryError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<spheremark::IntensityError> for CliError {
    fn from(e: spheremark::IntensityError) -> Self {
        use spheremark::IntensityError::*;
        match e {
            EmptyComponent(_) => CliError::data(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

impl From<spheremark::SimError> for CliError {
    fn from(e: spheremark::SimError) -> Self {
        use spheremark::SimError::*;
        match e {
            BadSpec(_) => CliError::config(e.to_string()),
            Pattern(p) => CliError::data(p.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

impl From<spheremark::InferError> for CliError {
    fn from(e: spheremark::InferError) -> Self {
        use spheremark::InferError::*;
        match e {
            RotationNeedsFullSphere | MarksEqual(_) | TooFewReplicates { .. } | BadLevel(_) => {
                CliError::config(e.to_string())
            }
            MissingModel(_) | Pattern(_) => CliError::data(e.to_string()),
            Summary(s) => CliError::from(s),
            Intensity(i) => CliError::from(i),
            Sim(s) => CliError::from(s),
            GridMismatch => CliError::numeric(e.to_string()),
        }
    }
}
