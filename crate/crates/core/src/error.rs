use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the windregime library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition or type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An index window or coordinate fell outside its parent grid.
    #[error("range error: {0}")]
    Range(String),

    /// A named channel or file entry was not present.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A data file is inconsistent with its manifest.
    #[error("corrupt dataset: {0}")]
    Corrupt(String),

    /// The manifest declares a format version this build does not read.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        // Written as a negation so NaN comparisons fail the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
