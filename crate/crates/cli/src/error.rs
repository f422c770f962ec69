use garz_core::GarzError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("solver failure: {0}")]
    Solver(#[from] GarzError),

    #[error("certificate failure: {}", .0.join(", "))]
    Certificate(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Schema { .. } | CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Solver(_) => 3,
            CliError::Certificate(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Schema { .. } => "schema",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Solver(_) => "solver",
            CliError::Certificate(_) => "certificate",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            kind: self.kind(),
            exit_code: self.exit_code(),
            field: match self {
                CliError::Schema { field, .. } => Some(field.clone()),
                _ => None,
            },
            message: self.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Contents of `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}
