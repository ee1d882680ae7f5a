use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cluster column's total probability fell below the degeneracy floor.
    #[error("cluster {cluster} is degenerate (column sum {mass:e} below floor)")]
    DegenerateCluster { cluster: usize, mass: f64 },

    /// N Nᵀ is singular: the active set no longer has full row rank.
    #[error("active constraint matrix is rank deficient (point {point})")]
    RankDeficient { point: usize },

    /// The candidate row is already in the span of the active rows.
    #[error("constraint row {coordinate} is already spanned by the active set")]
    DegenerateDirection { coordinate: usize },

    #[error("problem size L*K = {lk} exceeds the dense projection cap {cap}")]
    DimensionCap { lk: usize, cap: usize },

    #[error("two cluster centers coincide ({first} and {second})")]
    IdenticalCenters { first: usize, second: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::EmptyDataset
                | Error::NonFiniteValue { .. }
                | Error::Io { .. }
                | Error::DimensionCap { .. }
        )
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateCluster { .. } => "degenerate_cluster",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::DegenerateDirection { .. } => "degenerate_direction",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::IdenticalCenters { .. } => "identical_centers",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse_error",
            Error::EmptyDataset => "empty_dataset",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::Io { .. } => "io_error",
        }
    }
}
