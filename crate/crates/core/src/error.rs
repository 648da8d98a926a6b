use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad IDX magic 0x{observed:08X} (expected 0x00000801 or 0x00000803)")]
    IdxMagic { observed: u32 },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("line {line}: expected {expected} fields, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: cannot parse {token:?} as a number")]
    Parse {
        line: usize,
        column: usize,
        token: String,
    },

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("size limit exceeded: {what} = {got} (max {max})")]
    SizeLimit {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("compressor {name} failed: {source}")]
    Compressor {
        name: String,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown compressor {0:?}")]
    UnknownCompressor(String),

    #[error("undefined distance: {0}")]
    UndefinedDistance(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("k-means degenerate: empty cluster after {attempts} seedings")]
    KMeansDegenerate { attempts: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
