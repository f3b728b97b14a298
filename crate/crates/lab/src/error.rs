use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Core(#[from] nvi_core::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Report(String),
}

/// Machine-readable error record printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub exit_code: i32,
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for IO and runtime failures, 2 for invalid configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Parse(_) | LabError::Validation { .. } => 2,
            LabError::Core(e) if is_config_error(e) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let kind = match self {
            LabError::Io { .. } => "io",
            LabError::Parse(_) => "parse",
            LabError::Validation { .. } => "validation",
            LabError::Core(_) => "core",
            LabError::Csv(_) => "csv",
            LabError::Report(_) => "report",
        };
        let field = match self {
            LabError::Validation { field, .. } => Some(field.clone()),
            _ => None,
        };
        ErrorRecord {
            kind,
            message: self.to_string(),
            field,
            exit_code: self.exit_code(),
        }
    }
}

fn is_config_error(e: &nvi_core::Error) -> bool {
    match e {
        nvi_core::Error::Config(_) | nvi_core::Error::Precondition(_) => true,
        nvi_core::Error::AtStep { source, .. } => is_config_error(source),
        _ => false,
    }
}
