//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data loading, linear algebra, and model fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error("non-numeric value '{value}' in column '{column}' (row {row})")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("response column '{0}' not found")]
    ResponseMissing(String),

    #[error("column '{0}' is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("column {0} has zero norm")]
    ZeroNormColumn(usize),

    #[error("requested subset of {requested} columns but only {available} have positive weight")]
    TooFewPositiveWeights { requested: usize, available: usize },

    #[error("selected submatrix is rank deficient")]
    RankDeficient,

    #[error("selection of {selected} columns is too large for n={n}")]
    OversizedSelection { selected: usize, n: usize },

    #[error("all grid points failed; last error: {0}")]
    AllGridPointsFailed(String),

    #[error("at grid value v0={v0}: {source}")]
    AtGridValue {
        v0: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replicates failed, aborting")]
    TooManyFailures { failed: usize, total: usize },

    #[error("unknown reference row '{0}'")]
    UnknownReference(String),
}

pub type Result<T> = std::result::Result<T, Error>;
