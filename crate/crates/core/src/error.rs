use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an input contract (shape, domain, finiteness).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An LP ended in a state the caller could not interpret.
    #[error("numerical failure: LP ended with status {0:?}")]
    Numerical(LpStatus),

    #[error("polytope is unbounded in the requested direction")]
    Unbounded,

    #[error("operation on an empty polytope: {0}")]
    EmptySet(&'static str),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{what} did not converge after {iterations} iterations (last metric {metric:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        metric: f64,
    },

    /// A set-design assumption failed (empty tightened sets, tube larger than constraints).
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    #[error("no persistently exciting candidate survives the lookahead: {0}")]
    FeasibilityLoss(String),

    #[error("could not build an initial excitation buffer after {attempts} attempts: {hint}")]
    Initialization { attempts: usize, hint: String },

    /// The nominal QP has no solution from the current nominal state.
    #[error("controller infeasible: {0}")]
    Infeasible(String),

    #[error("QP solver failure: {0}")]
    Qp(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
