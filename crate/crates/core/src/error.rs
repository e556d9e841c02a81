use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid judgment: {0}")]
    InvalidJudgment(String),

    #[error("conflicting judgments for pair ({i}, {j}) from expert {expert}")]
    Conflict { expert: usize, i: usize, j: usize },

    #[error("value {0} lies outside (0, 1]")]
    Domain(f64),

    #[error("invalid binning: {0}")]
    InvalidBinning(String),

    #[error("spectrum has zero total mass")]
    UndefinedSpectrum,

    #[error("no data to aggregate")]
    NoData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("no eligible comparison to revise; facilitator action required")]
    Escalate,

    #[error("every eligible comparison was declined in the previous round")]
    AllDeclined,

    #[error("stale revision request: issued at version {issued}, state is at version {current}")]
    StaleRequest { issued: u64, current: u64 },

    #[error("invalid session: {0}")]
    InvalidSession(String),

    #[error("unknown expert {0}")]
    UnknownExpert(String),

    #[error("version conflict: expected {expected}, got {got}")]
    VersionConflict { expected: u64, got: u64 },

    #[error("no open revision request")]
    NoOpenRequest,

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("session is not complete: {0}")]
    Incomplete(String),
}

pub type Result<T> = std::result::Result<T, Error>;
