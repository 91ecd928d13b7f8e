use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no annotations")]
    NoAnnotations,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate global clustering: image has a single color")]
    DegenerateGlobalClustering,

    #[error("empty Voronoi supervision: every pixel is ignored")]
    EmptyVoronoiSupervision,

    #[error("non-finite model parameter in layer {layer}")]
    NonFiniteParams { layer: usize },

    #[error("image {width}x{height} is smaller than the 7x7 receptive field")]
    ImageTooSmall { width: usize, height: usize },

    #[error("training diverged at iteration {iteration} ({objective}): loss = {value}")]
    Diverged {
        iteration: u64,
        objective: String,
        value: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate channel {channel}: zero standard deviation")]
    DegenerateChannel { channel: usize },

    #[error("could only place {placed} of {requested} cells in sample {sample} after {attempts} attempts")]
    Placement {
        sample: usize,
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("invalid annotations in {path}: {}", .problems.join("; "))]
    InvalidPoints { path: PathBuf, problems: Vec<String> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
