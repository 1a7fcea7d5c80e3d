use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApoError {
    #[error("trajectory {trajectory}: {field} has length {found}, expected {expected}")]
    LengthMismatch {
        trajectory: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("trajectory {trajectory}: {field}[{token}] = {value} is not a finite log-probability <= 0")]
    NonFiniteLogProb {
        trajectory: usize,
        field: &'static str,
        token: usize,
        value: f64,
    },
    #[error("group difficulty is {stored} but {incorrect} of {group_size} trajectories are incorrect")]
    DifficultyMismatch {
        stored: f64,
        incorrect: usize,
        group_size: usize,
    },
    #[error("mean correct length presence does not match the number of correct trajectories ({correct})")]
    CorrectLengthMismatch { correct: usize },
    #[error("trajectory {trajectory}: reward flag {field} = {value} is not 0 or 1")]
    InvalidRewardFlag {
        trajectory: usize,
        field: &'static str,
        value: u8,
    },
    #[error("group has {found} trajectories, expected {expected}")]
    GroupSize { expected: usize, found: usize },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("difficulty {0} outside [0, 1]")]
    DomainError(f64),
    #[error("group is all-correct and must be filtered before KL shaping")]
    FilteredGroup,
    #[error("group was skipped by the all-correct filter and contributes no loss")]
    SkippedGroup,
    #[error("every group in the batch was filtered; no optimizer step taken")]
    EmptyBatch,
    #[error("coefficient of variation undefined: mean {0} is not positive")]
    DegenerateMean(f64),
    #[error("enumeration of {0} sequences exceeds the hard cap")]
    ExplosionGuard(u128),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for ApoError {
    fn from(e: std::io::Error) -> Self {
        ApoError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ApoError {
    fn from(e: serde_json::Error) -> Self {
        ApoError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ApoError>;
