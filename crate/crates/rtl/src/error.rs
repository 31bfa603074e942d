use std::path::PathBuf;

use rtl_core::RtlError;

/// Failures surfaced by the IO layer and the command line.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("cannot parse row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("{0} has no data rows")]
    EmptyFile(PathBuf),
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] RtlError),
}

/// Exit codes of the command line.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            line: None,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::InvalidFractions(_) => exit::CONFIG,
            CliError::MissingColumn(_)
            | CliError::Parse { .. }
            | CliError::EmptyFile(_)
            | CliError::Data(_)
            | CliError::Io { .. } => exit::DATA,
            CliError::Core(e) if e.is_numeric() => exit::NUMERIC,
            CliError::Core(RtlError::InvalidConfig(_) | RtlError::InvalidLevel(_) | RtlError::UnsupportedDims(_)) => {
                exit::CONFIG
            }
            CliError::Core(_) => exit::DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
