use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A comparison stayed undecided up to the precision cap.
    #[error("precision exhausted at {bits} bits: {context}")]
    PrecisionExhausted { bits: u32, context: String },

    /// The enclosure at the current precision is too wide to decide.
    /// Internal signal caught by [`crate::real::Precision::refine`].
    #[error("indeterminate at current precision")]
    Indeterminate,

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("root bracket failure: {0}")]
    BracketFailure(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("flow convention violated: {0}")]
    ConventionViolation(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("dichotomy violation: {0}")]
    DichotomyViolation(String),

    #[error("node budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("construction extinct at level {level}: {detail}")]
    Extinction { level: usize, detail: String },

    #[error("local characteristic exceeds 1 at level {0}")]
    CharacteristicExceeded(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
