use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("{what} index {index} out of range (max {max})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("spec exhausted before tolerance was reached at n={n}: achieved gap {achieved}")]
    ToleranceNotReached { n: u64, achieved: String },

    #[error("sequence does not cover [{start}, {end}]")]
    NotCovered { start: i64, end: i64 },

    #[error("incompatible cell structure: {0}")]
    IncompatibleCells(String),

    #[error("forbidden interval [{start}, {end}] lies inside the existing distance range (height {height})")]
    OrderingViolated { start: u64, end: u64, height: u64 },

    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("infeasible schedule parameters: {0}")]
    InfeasibleSchedule(String),

    #[error("schedule geometry incompatible with height growth at block {block}: {detail}")]
    IncompatibleGeometry { block: usize, detail: String },

    #[error("time {0} is not the height of a matching generic stage")]
    NotGenericTime(u64),

    #[error("correlation sequence is not normalized: entry 0 is {0}")]
    Unnormalized(String),

    #[error("covariance is not positive semidefinite: leading minor of size {minor} has eigenvalue {eigenvalue:e}")]
    NotPositiveSemidefinite { minor: usize, eigenvalue: f64 },

    #[error("escaping mass fraction {fraction} exceeds cap {cap}")]
    EscapeCapExceeded { fraction: f64, cap: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
