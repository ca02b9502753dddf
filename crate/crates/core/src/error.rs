// SPDX-License-Identifier: Apache-2.0

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("truncated or oversized file: header declares {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("unsupported image shape {rows}x{cols}, only 28x28 is accepted")]
    BadShape { rows: u32, cols: u32 },

    #[error("label byte {value} at index {index} is not a digit class")]
    BadLabel { index: usize, value: u8 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("cache holds a {found} matrix but {requested} was requested")]
    MetricMismatch { requested: MetricId, found: MetricId },

    #[error("unknown metric id {0}")]
    UnknownMetric(u8),

    #[error("cached distance {value} at offset {offset} exceeds the representable maximum")]
    DistanceOutOfRange { offset: usize, value: u32 },

    #[error("{len} examples cannot be split into {folds} equal folds")]
    IndivisibleFold { len: usize, folds: usize },

    #[error("fold index {index} out of range for {folds} folds")]
    FoldOutOfRange { index: usize, folds: usize },

    #[error("k = {k} is invalid for rows of length {row_len}")]
    BadK { k: usize, row_len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("proportion {0} is outside [0, 1]")]
    BadProportion(f64),

    #[error("critical value {0} must be positive and finite")]
    BadCriticalValue(f64),

    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("class {0} has no members")]
    MissingClass(u8),

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("worker count must be at least 1")]
    ZeroWorkers,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
