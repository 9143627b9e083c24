use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("constant column {column}: every value equals {value}")]
    ConstantColumn { column: usize, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("k exceeds n (k = {k}, n = {n})")]
    KExceedsN { k: usize, n: usize },

    #[error("input is not scaled to [-1, 1]: row {row}, column {column} holds {value}")]
    Unscaled {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("design is rank deficient: term {term} is linearly dependent on earlier terms")]
    RankDeficient { term: String },

    #[error("underdetermined system: {rows} rows for {cols} design columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("exhaustive search needs {subsets} subsets, above the cap of {cap}")]
    EnumerationCap { subsets: u128, cap: u128 },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the filesystem rather than of the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
