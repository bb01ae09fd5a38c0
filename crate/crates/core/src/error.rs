use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the draping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-triangle face at line {line}")]
    NonTriangleFace { line: usize },

    #[error("face index {index} out of range (vertex count {count}) at line {line}")]
    IndexOutOfRange { line: usize, index: i64, count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-manifold edge ({0}, {1}) shared by more than two faces")]
    NonManifoldEdge(usize, usize),

    #[error("body mesh is not watertight: {0} boundary edges")]
    NotWatertight(usize),

    #[error("degenerate one-ring at vertex {0}: all neighbors coincide")]
    DegenerateOneRing(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid cache file: {0}")]
    Cache(String),

    #[error("non-finite gradient at solver iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
