use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("frame index not strictly increasing at row {row}")]
    Order { row: usize },

    #[error("value out of range at row {row}: {message}")]
    Range { row: usize, message: String },

    #[error("unknown class {name:?} at row {row}")]
    Taxonomy { row: usize, name: String },

    #[error("empty label set at row {row}")]
    EmptyLabels { row: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("crop of side {size} does not fit a {width}x{height} frame")]
    CropTooLarge { size: u32, width: u32, height: u32 },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("point ({x}, {y}) lies outside a {width}x{height} image")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no precomputed embedding for frame {0}")]
    Lookup(u64),

    #[error("few-shot cache is empty")]
    EmptyCache,

    #[error("cannot combine single-label and multi-label scores")]
    Kind,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("metric is undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("timelines are not aligned: {0}")]
    Alignment(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("benchmark aborted: {0}")]
    BenchAborted(String),

    #[error("pipeline failed: {failed} of {total} frames could not be classified")]
    Pipeline { failed: usize, total: usize },

    #[error("invalid synthetic session: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
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

    pub(crate) fn format(row: usize, message: impl Into<String>) -> Self {
        Error::Format {
            row,
            message: message.into(),
        }
    }
}
