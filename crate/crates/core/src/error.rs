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

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("unknown emotion {name:?} at manifest line {line}")]
    UnknownEmotion { line: usize, name: String },

    #[error("feature-row count mismatch: {utterances} utterances but {rows} feature rows")]
    FeatureRowMismatch { utterances: usize, rows: usize },

    #[error("feature dim mismatch: header declares {declared}, file has {found}")]
    FeatureDimMismatch { declared: usize, found: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("corpus failed validation with {0} error(s)")]
    InvalidCorpus(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("edge attribute conflict: {0}")]
    EdgeAttr(String),

    #[error("node {0} has zero degree")]
    ZeroDegree(usize),

    #[error("empty {0} mask")]
    EmptyMask(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
