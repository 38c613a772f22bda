use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which standing hypothesis a problem instance failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    Smoothness,
    ConstraintSet,
    BlockDominance,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Hypothesis::Smoothness => "smoothness",
            Hypothesis::ConstraintSet => "product constraint set",
            Hypothesis::BlockDominance => "strict block diagonal dominance",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionViolation {
    pub hypothesis: Hypothesis,
    pub epoch: Option<usize>,
    pub block: Option<usize>,
    /// Dominance margin at the witness, when one was computed.
    pub margin: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

impl AssumptionViolation {
    pub fn new(hypothesis: Hypothesis, detail: impl Into<String>) -> Self {
        Self {
            hypothesis,
            epoch: None,
            block: None,
            margin: None,
            witness: None,
            detail: detail.into(),
        }
    }

    pub fn at_epoch(mut self, epoch: usize) -> Self {
        self.epoch = Some(epoch);
        self
    }
}

impl fmt::Display for AssumptionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated", self.hypothesis)?;
        if let Some(t) = self.epoch {
            write!(f, " at epoch {t}")?;
        }
        if let Some(b) = self.block {
            write!(f, " in block {b}")?;
        }
        if let Some(m) = self.margin {
            write!(f, " (beta = {m})")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("partitions differ")]
    PartitionMismatch,
    #[error("block index {index} out of range for {blocks} blocks")]
    BlockIndex { index: usize, blocks: usize },
    #[error("invalid box constraint: {0}")]
    InvalidBox(String),
    #[error("{0}")]
    Assumption(Box<AssumptionViolation>),
    #[error("invalid stepsize: {0}")]
    InvalidStepsize(String),
    #[error("minimizer oracle did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("{what} {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("solver failure: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),
    #[error("enumeration too large: {0}")]
    SizeCap(String),
    #[error("trace does not match problem: {0}")]
    TraceMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<AssumptionViolation> for Error {
    fn from(v: AssumptionViolation) -> Self {
        Error::Assumption(Box::new(v))
    }
}
