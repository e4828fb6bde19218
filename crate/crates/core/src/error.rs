use thiserror::Error;

pub type Result<T, E = McpcaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum McpcaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("slice {slice} is not symmetric (max deviation {deviation:e})")]
    Asymmetric { slice: usize, deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested rank {requested} exceeds the numerical rank of the flattening; largest admissible rank is {max_rank}")]
    RankDeficient { requested: usize, max_rank: usize },

    #[error("degenerate start: contraction T_A(a, b, *) vanished")]
    DegenerateStart,

    #[error("all {restarts} restarts were degenerate for component {component}")]
    AllRestartsDegenerate { component: usize, restarts: usize },

    #[error("deflation failed for component {component}: found direction is orthogonal to the working subspace")]
    DeflationFailed { component: usize },

    #[error("Gram matrix of components is numerically singular (condition {condition:e}); columns {first} and {second} are nearly parallel")]
    GramSingular {
        first: usize,
        second: usize,
        condition: f64,
    },

    #[error("component matrix is rank deficient (condition {condition:e})")]
    RankDeficientComponents { condition: f64 },

    #[error("context {context} has {samples} samples; at least 2 are required")]
    TooFewSamples { context: String, samples: usize },

    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: line {line}, column {column}: not a finite number: {value:?}")]
    NonNumeric {
        path: String,
        line: usize,
        column: usize,
        value: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl McpcaError {
    /// True for failures of the numerics (as opposed to bad input or arguments).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            McpcaError::RankDeficient { .. }
                | McpcaError::DegenerateStart
                | McpcaError::AllRestartsDegenerate { .. }
                | McpcaError::DeflationFailed { .. }
                | McpcaError::GramSingular { .. }
                | McpcaError::RankDeficientComponents { .. }
        )
    }
}
