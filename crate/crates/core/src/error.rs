use std::path::PathBuf;
use thiserror::Error;

/// All failure modes surfaced by this crate.
///
/// Every variant names the offending path, band, parameter or cell so a
/// caller (or a CLI user) can act on the message without a stack trace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {detail}")]
    Unwritable { path: PathBuf, detail: String },

    #[error("unsupported raster format for {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("{path} is not georeferenced: {detail}")]
    MissingGeoreference { path: PathBuf, detail: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    #[error("grids are not aligned: {detail}")]
    Misaligned { detail: String },

    #[error("duplicate band name {name:?} in stack")]
    DuplicateBand { name: String },

    #[error("{context} requires band {band:?}, which is not in the stack")]
    MissingBand { band: String, context: String },

    #[error("cell ({row}, {col}) holds {value}, which is not in the category list")]
    UnknownCategory { value: f64, row: usize, col: usize },

    #[error("natural-log transform rejected: {count} sample(s) have non-positive target values")]
    NonPositiveTarget { count: usize },

    #[error("fold count {k} exceeds sample count {n}")]
    TooManyFolds { k: usize, n: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{name} has zero variance")]
    ZeroVariance { name: String },

    #[error("{context}: need at least {needed} feature(s), have {have}")]
    TooFewFeatures {
        context: String,
        needed: usize,
        have: usize,
    },

    #[error("{context} received no samples")]
    EmptyInput { context: String },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} predictions vs {right} observations")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: String, detail: String },

    #[error("baseline R^2 must be positive, got {value}")]
    NonPositiveBaseline { value: f64 },

    #[error("hyper-parameter grid for {technique} is empty")]
    EmptyGrid { technique: String },

    #[error("no predictor set named {name:?} for target {target}")]
    UnknownSpec { name: String, target: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the fold index it occurred in.
    pub fn in_fold(self, fold: usize) -> Error {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }
}
