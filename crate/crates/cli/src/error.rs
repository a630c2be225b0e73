use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(.path, *.line, .msg))]
    Config {
        path: Option<PathBuf>,
        line: Option<usize>,
        msg: String,
    },
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: line {line}: {msg}", .path.display())]
    BadInput { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Numeric(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(path: &Option<PathBuf>, line: Option<usize>, msg: &str) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("config {}: line {l}: {msg}", p.display()),
        (None, Some(l)) => format!("config line {l}: {msg}"),
        (Some(p), None) => format!("config {}: {msg}", p.display()),
        (None, None) => format!("config: {msg}"),
    }
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config {
            path: None,
            line: None,
            msg: msg.into(),
        }
    }

    pub fn at_line(line: usize, msg: impl Into<String>) -> Self {
        CliError::Config {
            path: None,
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(path.to_path_buf())
        } else {
            CliError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn bad_input(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        CliError::BadInput {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit status: 2 configuration, 3 missing or unreadable input,
    /// 4 numeric failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::MissingInput(_) | CliError::BadInput { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
