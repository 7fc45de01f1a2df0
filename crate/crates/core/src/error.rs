//! Error type shared across the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: cannot multiply {left_rows}x{left_cols} by {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix entries must be {rows}x{cols} = {expected}, got {got}")]
    EntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-finite matrix entry at flat index {index}")]
    NonFinite { index: usize },

    #[error("dimension {dim} does not factor as {first} x {second}")]
    BadFactorization {
        dim: usize,
        first: usize,
        second: usize,
    },

    #[error("not a valid density operator: {reason}")]
    InvalidState { reason: String },

    #[error("not a valid channel: {reason}")]
    InvalidChannel { reason: String },

    #[error("not a valid process: {reason}")]
    InvalidProcess { reason: String },

    #[error("outcome {outcome} out of range for dimension {dim}")]
    OutcomeOutOfRange { outcome: usize, dim: usize },

    #[error("schedule covers {schedule_times} times but the process has {process_times}")]
    ScheduleMismatch {
        schedule_times: usize,
        process_times: usize,
    },

    #[error("invalid pattern string {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },

    #[error("{n_times} probe times exceed the supported maximum of {max} for exhaustive pattern enumeration")]
    TooManyTimes { n_times: usize, max: usize },

    #[error("outcome tuple has {got} entries, expected {expected}")]
    OutcomeCount { expected: usize, got: usize },

    #[error("probabilities sum to {sum}, expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("negative probability {value} at flat index {index}")]
    NegativeProbability { value: f64, index: usize },

    #[error("distribution is not valid: {reason}")]
    InvalidDistribution { reason: String },

    #[error("time t{} is not measured in pattern {pattern}", time + 1)]
    TimeNotMeasured { time: usize, pattern: String },

    #[error("conditioning history must only contain times earlier than the target t{}", target + 1)]
    HistoryNotEarlier { target: usize },

    #[error("family is missing the every-time-measured pattern {pattern}")]
    MissingFullPattern { pattern: String },

    #[error("family is incomplete: missing {} of {expected} patterns ({})", missing.len(), missing.join(", "))]
    IncompleteFamily {
        missing: Vec<String>,
        expected: usize,
    },

    #[error("family already contains an entry for pattern {pattern}")]
    DuplicatePattern { pattern: String },

    #[error("not a valid stochastic matrix: {reason}")]
    InvalidStochastic { reason: String },

    #[error("not a valid model: {reason}")]
    InvalidModel { reason: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("internal invariant violated: {reason}")]
    Internal { reason: String },
}
