use std::fmt;
use std::path::Path;

use carshare_core::Error as CoreError;
use serde::Serialize;

/// Process exit codes. Usage errors keep clap's code 2.
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MISSING_FILE: i32 = 3;
    pub const SCHEMA: i32 = 4;
    pub const MODEL: i32 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    MissingFile,
    Schema,
    /// Bad, incompatible or unknown model bundle.
    Model,
    Other,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => exit::USAGE,
            ErrorKind::MissingFile => exit::MISSING_FILE,
            ErrorKind::Schema => exit::SCHEMA,
            ErrorKind::Model => exit::MODEL,
            ErrorKind::Other => exit::OTHER,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn model(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Model, message)
    }

    /// Classifies a core error raised while reading a data file.
    pub fn reading(path: &Path, e: CoreError) -> Self {
        match e {
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Self::new(
                ErrorKind::MissingFile,
                format!("{}: file not found", path.display()),
            ),
            other => other.into(),
        }
    }

    /// Classifies a core error raised while loading a model bundle.
    pub fn loading_bundle(path: &Path, e: CoreError) -> Self {
        match e {
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Self::new(
                ErrorKind::MissingFile,
                format!("{}: file not found", path.display()),
            ),
            CoreError::Io(io) => Self::new(ErrorKind::Other, format!("{}: {io}", path.display())),
            other => Self::model(format!("{}: {other}", path.display())),
        }
    }

    /// The single line written to stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ErrorKind::MissingFile,
            CoreError::Schema(_)
            | CoreError::UnknownFeature(_)
            | CoreError::Csv(_)
            | CoreError::Parse(_)
            | CoreError::UnknownStations(_)
            | CoreError::UnprojectedCoordinates
            | CoreError::DuplicateStations(_) => ErrorKind::Schema,
            CoreError::BundleFormat { .. } | CoreError::Unsupported(_) => ErrorKind::Model,
            CoreError::InvalidArgument(_) | CoreError::InvalidBandwidth(_) => ErrorKind::Usage,
            _ => ErrorKind::Other,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e).into()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(ErrorKind::Other, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(ErrorKind::Other, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
