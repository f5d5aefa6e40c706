use thiserror::Error;

/// Errors surfaced by rollouts, solvers, and diagnostics.
///
/// Problem validation issues are reported as data by [`crate::model::validate`],
/// not through this type.
#[derive(Debug, Error)]
pub enum Error {
    /// A state entry became NaN or infinite during integration.
    #[error("non-finite state at grid node {node}")]
    NonFiniteState { node: usize },

    /// The dynamics or cost model lacks the Jacobian/gradient evaluators
    /// required by linearization or gradient computations.
    #[error("dynamics model provides no Jacobian evaluators")]
    MissingJacobian,

    /// Brute-force enumeration would exceed the candidate budget.
    #[error("search space of {candidates:.3e} candidates exceeds the {limit:.1e} budget")]
    SearchSpaceTooLarge { candidates: f64, limit: f64 },

    /// Requested corpus entry does not exist.
    #[error("unknown example `{0}`")]
    UnknownExample(String),

    /// A reference point handed to a diagnostic is not feasible.
    #[error("reference point is infeasible (residual {residual:.3e} > {tolerance:.3e})")]
    NotFeasibleReference { residual: f64, tolerance: f64 },

    /// The descent-rate estimate is non-positive, so L/a is undefined.
    #[error("descent rate a = {rate:.3e} is not positive")]
    NonPositiveRate { rate: f64 },

    /// The operation requires linear dynamics.
    #[error("operation requires linear (A(t), B(t)) dynamics")]
    UnsupportedDynamics,

    /// The admissible control set exposes no pointwise support function.
    #[error("admissible control set has no pointwise support oracle")]
    MissingSupportOracle,

    /// No infeasible sample survived the preconditions of an estimator.
    #[error("no usable infeasible sample (all penalties below tolerance)")]
    NoInfeasibleSamples,

    /// Malformed problem description (file parsing / construction).
    #[error("invalid problem description: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
