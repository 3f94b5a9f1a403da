use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty cohort: {0}")]
    EmptyCohort(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("likelihood undefined: no observed events")]
    EmptyLikelihood,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}
