use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode map image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("malformed annotation file: {0}")]
    Annotation(String),
    #[error("too many semantic classes: {0} (at most 14 fit in a cell)")]
    TooManyClasses(usize),
    #[error("annotation box {0:?} lies entirely outside the map")]
    AnnotationOutOfBounds([i64; 4]),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("map has no occupied cells; the distance transform is undefined")]
    NoOccupiedCells,
    #[error("map has no free cells to place particles on")]
    NoFreeCells,
    #[error("start point ({x:.3}, {y:.3}) is outside the map")]
    StartOutOfBounds { x: f64, y: f64 },
    #[error("unknown semantic class index {0}")]
    UnknownClass(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trajectory segment from ({0:.2}, {1:.2}) to ({2:.2}, {3:.2}) is blocked")]
    BlockedSegment(f64, f64, f64, f64),
    #[error("pose ({0:.3}, {1:.3}) is not in free space")]
    PoseNotFree(f64, f64),
    #[error("sequence file line {line}: {message}")]
    Sequence { line: usize, message: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("particle weights sum to zero")]
    ZeroWeight,
    #[error("no estimate within 0.1 s of checkpoint at t={0}")]
    Unmatched(f64),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
