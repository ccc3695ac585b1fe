use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid privacy budget: epsilon must be positive and finite, got {0}")]
    InvalidBudget(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty cohort")]
    EmptyCohort,
    #[error("cohort size {actual} does not match configured n = {expected}")]
    CohortSizeMismatch { expected: usize, actual: usize },
    #[error("value {value} outside the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("{0} model has no closed-form fatness constant")]
    NoFatnessConstant(&'static str),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("singular design matrix: {0}")]
    Singular(String),
    #[error("infeasible model placement: x_min = {x_min}, width = {width} exceeds 1")]
    InfeasiblePlacement { x_min: f64, width: f64 },
    #[error("protocol aborted: {0}")]
    Aborted(String),
    #[error("wire protocol error: {0}")]
    Wire(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
