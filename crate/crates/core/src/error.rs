use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate {kind} label `{label}`")]
    LabelCollision { kind: &'static str, label: String },

    #[error("cannot parse `{value}` at row {row}, column `{column}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("malformed table at line {line}: expected {expected} fields, found {found}")]
    Structure {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("malformed {what} at line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("artifact format mismatch: expected `{expected}`, found `{found}`")]
    Compatibility { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("node `{node}` has an empty context set in condition `{condition}`")]
    StartUnreachable { condition: String, node: String },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("non-finite numeric state: {0}")]
    NumericState(String),

    #[error("empty neighborhood for node {node}")]
    EmptyNeighborhood { node: usize },

    #[error("node `{node}` has a zero-norm vector")]
    DegenerateVector { node: String },

    #[error("node `{node}` has no positive-similarity neighbor")]
    NoPositiveNeighbor { node: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid community labels: {0}")]
    Label(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::LabelCollision { .. }
            | Error::Parse { .. }
            | Error::Structure { .. }
            | Error::Format { .. }
            | Error::Compatibility { .. }
            | Error::Consistency(_)
            | Error::Label(_) => ErrorKind::Input,
            Error::NumericState(_)
            | Error::DegenerateVector { .. }
            | Error::DegenerateData(_)
            | Error::NoPositiveNeighbor { .. }
            | Error::EmptyNeighborhood { .. } => ErrorKind::Numeric,
            Error::Config(_) | Error::StartUnreachable { .. } => ErrorKind::Config,
        }
    }
}
