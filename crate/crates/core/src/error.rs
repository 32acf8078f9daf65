use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix of dimension {dim} is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite {
        dim: usize,
        column: usize,
        pivot: f64,
    },

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("w = {w} is outside the support {{1, 1/eta}} (eta = {eta})")]
    InvalidSupport { w: f64, eta: f64 },

    #[error("weighted scatter matrix is degenerate")]
    DegenerateScatter,

    #[error("matrix R of the factor update is singular")]
    SingularR,

    #[error("invalid factor rank q = {q} for p = {p} variables")]
    InvalidRank { p: usize, q: usize },

    #[error("component {component} is empty (n_g = {size:.3})")]
    EmptyComponent { component: usize, size: f64 },

    #[error("alternative log-likelihood {alt} is below the null log-likelihood {null}")]
    InvalidNesting { null: f64, alt: f64 },

    #[error("all {0} candidate models failed to fit")]
    AllCandidatesFailed(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column '{0}' is not numeric")]
    NonNumericColumn(String),

    #[error("model document schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("contour grids need p = 2 variables, model has p = {0}")]
    DimensionUnsupported(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
