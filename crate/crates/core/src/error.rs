use thiserror::Error;

use crate::pd::PdOutcome;
use crate::solvers::DualState;

/// Errors raised across the crate.
///
/// The CLI maps each variant to an exit code through [`QsvmError::exit_code`].
#[derive(Debug, Error)]
pub enum QsvmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid label {label:?} at sample {index}: expected -1 or +1")]
    InvalidLabel { index: usize, label: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The dual QP hit its iteration cap; carries the best iterate.
    #[error("dual solver stopped after {iterations} iterations with violation {residual:e}")]
    DualNotConverged {
        iterations: usize,
        residual: f64,
        best: Box<DualState>,
    },

    /// The outer penalty loop hit `max_outer`; carries the model extracted
    /// from the last iterate.
    #[error("penalty decomposition did not converge after {outer} outer iterations (|z-u|_inf = {gap:e})")]
    PenaltyNotConverged {
        outer: usize,
        gap: f64,
        best: Box<PdOutcome>,
    },

    /// A subproblem solve failed inside the penalty loop.
    #[error("z-step failed at outer iteration {outer}, inner iteration {inner}: {source}")]
    Subproblem {
        outer: usize,
        inner: usize,
        #[source]
        source: Box<QsvmError>,
    },

    #[error("unsupported model document version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stratification error: class {class:?} has {count} members, fewer than {folds} folds")]
    Stratification {
        class: String,
        count: usize,
        folds: usize,
    },

    #[error("random search failed: all {trials} trials failed")]
    SearchFailure { trials: usize, log: Vec<String> },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QsvmError {
    /// Process exit code: 2 configuration, 3 data, 4 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            QsvmError::InvalidArgument(_)
            | QsvmError::Config(_)
            | QsvmError::Stratification { .. }
            | QsvmError::Dimension(_) => 2,
            QsvmError::InvalidData(_)
            | QsvmError::InvalidLabel { .. }
            | QsvmError::Version { .. }
            | QsvmError::Parse(_)
            | QsvmError::Io(_) => 3,
            QsvmError::Numeric(_)
            | QsvmError::DualNotConverged { .. }
            | QsvmError::PenaltyNotConverged { .. }
            | QsvmError::Subproblem { .. }
            | QsvmError::SearchFailure { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, QsvmError>;
