use std::path::PathBuf;

/// Every failure the pipeline can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("hue histogram is empty")]
    EmptyHistogram,
    #[error("segmentation removed every pixel; no foreground remains")]
    EmptyForeground,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("bad model shape: {0}")]
    BadShape(String),
    #[error("epoch {epoch} out of range for a {epochs}-epoch schedule")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset of {0} items is too small to split")]
    DatasetTooSmall(usize),
    #[error("too many classes: {0} (synthetic generator supports at most 24)")]
    TooManyClasses(usize),
    #[error("k = {k} out of range for {classes} classes")]
    KOutOfRange { k: usize, classes: usize },
    #[error("class sets differ: {0}")]
    ClassSetMismatch(String),
    #[error("missing file {path} (labels row {row})")]
    MissingFile { path: PathBuf, row: usize },
    #[error("bad labels row {row}: {reason}")]
    BadLabelRow { row: usize, reason: String },
    #[error("labels are not contiguous from 0: {0}")]
    NonContiguousLabels(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
