use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("non-finite sample at bin {bin}, frame {frame}")]
    NonFinite { bin: usize, frame: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing required key `{key}`{}", section_suffix(.section))]
    MissingKey { key: String, section: Option<String> },

    #[error("signal of length {len} is shorter than required {required}")]
    SignalTooShort { len: usize, required: usize },

    #[error("band [{f_lo}, {f_hi}] Hz is invalid for sampling rate {fps} Hz")]
    InvalidBand { f_lo: f64, f_hi: f64, fps: f64 },

    #[error("no spectral bins fall inside [{f_lo}, {f_hi}] Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },

    #[error("spectrum has no peak (all-zero magnitude)")]
    FlatSpectrum,

    #[error("non-finite intermediate value at level {level}, bin {bin}")]
    NonFiniteIntermediate { level: usize, bin: usize },

    #[error("zero amplitude in region of interest at level {level}")]
    ZeroAmplitude { level: usize },

    #[error("target {target} leaves the range window at t = {time_s:.4} s")]
    TargetOutOfRange { target: usize, time_s: f64 },

    #[error("region of interest is flat; no peak to localize")]
    FlatRoi,

    #[error("cannot split {rows} rows into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
}

fn section_suffix(section: &Option<String>) -> String {
    match section {
        Some(s) => format!(" in {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics going wrong inside the pipeline
    /// rather than by bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::NonFiniteIntermediate { .. })
    }
}
