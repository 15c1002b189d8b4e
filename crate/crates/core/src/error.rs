use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch at {layer}: expected {expected:?}, got {got:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: truncated record at byte offset {offset} ({len} bytes in file)")]
    Truncated { path: PathBuf, offset: u64, len: u64 },

    #[error("{path}: corrupt record {record} at byte offset {offset}: label {label} > 9")]
    CorruptRecord {
        path: PathBuf,
        record: usize,
        offset: u64,
        label: u8,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("missing ids: {0:?}")]
    MissingIds(Vec<usize>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 1,
            Error::NonFinite(_) => 3,
            Error::LayerShape { .. }
            | Error::Shape(_)
            | Error::State(_)
            | Error::Contract(_)
            | Error::Truncated { .. }
            | Error::CorruptRecord { .. }
            | Error::Format(_)
            | Error::MissingIds(_)
            | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
