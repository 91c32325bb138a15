use thiserror::Error;

use crate::consumer::Trajectory;

/// Failure modes shared by every analysis module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid price scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid perception kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid environment: {0}")]
    InvalidEnv(String),

    /// A custom kernel whose mean is not a fixed fraction of q.
    #[error("kernel violates the linear-mean assumption: {0}")]
    AssumptionViolation(String),

    /// A named hypothesis of a closed-form result does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("cutoff map is not monotone: {0}")]
    NonmonotoneCutoff(String),

    #[error("demand is unbounded below the search cap q_max = {cap}")]
    UnboundedDemand { cap: f64 },

    #[error("maximum quantity is unbounded; the functional has no finite domain")]
    UnboundedDomain,

    #[error("adjustment dynamics did not converge within {steps} steps")]
    ConvergenceFailure {
        steps: usize,
        trajectory: Box<Trajectory>,
    },

    #[error("degenerate scheme: {0}")]
    DegenerateScheme(String),

    #[error("evaluation point q = {q} lies on a tariff kink")]
    AtKink { q: f64 },

    #[error("oracle disagreement: {0}")]
    OracleDisagreement(String),

    #[error("regime precondition failed: {0}")]
    Regime(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn hypothesis(name: impl Into<String>) -> Self {
        Error::Hypothesis(name.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
