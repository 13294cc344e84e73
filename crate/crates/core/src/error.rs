use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} (line {line}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown or unsupported format: {0}")]
    UnknownFormat(String),

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("triangle {triangle} references vertex {index} but the mesh has {count} vertices")]
    InvalidIndex {
        triangle: usize,
        index: usize,
        count: usize,
    },

    #[error("triangle {triangle} repeats a vertex index")]
    RepeatedIndex { triangle: usize },

    #[error("degenerate (zero-area) triangle {triangle}")]
    DegenerateTriangle { triangle: usize },

    #[error("mesh failed validation: {0}")]
    Validation(String),

    #[error("no source: {0}")]
    NoSource(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("curvature fit failed at vertex {vertex}: {reason}")]
    CurvatureFit { vertex: usize, reason: String },

    #[error("curvature fitting failed at {failed} of {total} vertices (limit 10%)")]
    TooManyFitFailures { failed: usize, total: usize },

    #[error("metric tensor of triangle {triangle} is not positive definite")]
    NotPositiveDefinite { triangle: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("defect injection failed: {0}")]
    Defect(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
