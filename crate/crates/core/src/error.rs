use std::path::PathBuf;

use thiserror::Error;

use crate::graph::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: node id {id} does not fit in a 32-bit node id")]
    NodeIdOverflow { line: usize, id: String },

    #[error("unsupported matrix market file: {0}")]
    Unsupported(String),

    #[error("malformed matrix market header: {0}")]
    MalformedHeader(String),

    #[error("invalid graph:\n{0}")]
    InvalidGraph(ValidationReport),

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tf32 mma requires 16x8 * 8x16 operands, got {m}x{k} * {k2}x{n}")]
    Tf32Shape {
        m: usize,
        k: usize,
        k2: usize,
        n: usize,
    },

    #[error("task plan: {0}")]
    Plan(String),

    #[error("binary format: {0}")]
    Format(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(what: &'static str, index: usize, limit: usize) -> Self {
        Error::IndexOutOfRange { what, index, limit }
    }
}
