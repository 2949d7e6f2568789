use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("domain is empty")]
    EmptyDomain,

    #[error("measure {requested} outside [0, {available}]")]
    MeasureOutOfRange { requested: f64, available: f64 },

    #[error("grids are incompatible: {0}")]
    Incompatible(String),

    #[error("malformed SGRID at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("eigensolver did not converge after {iterations} iterations (worst relative residual {worst_residual:.3e})")]
    NotConverged {
        iterations: usize,
        worst_residual: f64,
    },

    #[error("functions are linearly dependent (Gram condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("no legal move: {0}")]
    NoLegalMove(String),
}
