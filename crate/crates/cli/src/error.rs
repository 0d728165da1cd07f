use serde::Serialize;
use thiserror::Error;

/// Failure categories with distinct process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Data,
    ModelDataMismatch,
    Numerical,
    Other,
}

impl ErrorKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Data => 3,
            Self::ModelDataMismatch => 4,
            Self::Numerical => 5,
            Self::Other => 1,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Offending input rows (1-based data rows), when applicable.
    pub rows: Vec<usize>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            rows: Vec::new(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn with_rows(mut self, rows: Vec<usize>) -> Self {
        self.rows = rows;
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            error: ErrorKind,
            exit_code: i32,
            message: &'a str,
            #[serde(skip_serializing_if = "<[usize]>::is_empty")]
            rows: &'a [usize],
        }
        serde_json::to_string(&Out {
            error: self.kind,
            exit_code: self.exit_code(),
            message: &self.message,
            rows: &self.rows,
        })
        .expect("error JSON")
    }
}

impl From<tvlik::Error> for CliError {
    fn from(e: tvlik::Error) -> Self {
        use tvlik::Error as E;
        let kind = match &e {
            E::InvalidConfig(_) | E::Unsupported(_) => ErrorKind::Config,
            E::InvalidData(_) => ErrorKind::ModelDataMismatch,
            _ => ErrorKind::Numerical,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
