//! Exact-penalty toolkit for constrained optimal control.
//!
//! Constrained problems (fixed endpoint, variable endpoint, pointwise
//! state constraints) are transcribed by direct single shooting on a
//! uniform grid and reduced to penalized free-endpoint problems
//! `Phi_lambda = I + lambda * phi`. The crate provides:
//!
//! * [`model`] — problem data types, validation, feasibility residuals,
//!   and a declarative JSON problem-file format;
//! * [`simulate`] — RK4 rollout, linearization, cost quadrature;
//! * [`penalty`] — the penalty terms and smoothed adjoint gradients;
//! * [`solver`] — projected-gradient minimization of the smoothed
//!   objective, lambda-continuation sweeps with an exactness verdict, and
//!   a brute-force oracle for small instances;
//! * [`diagnostics`] — executable checks of the classical exactness
//!   hypotheses (controllability Gramian, Slater margin, reachable-set
//!   relative-interior probe, MFCQ, descent-rate and Lipschitz estimates,
//!   and the L/a penalty threshold bound);
//! * [`corpus`] — built-in worked examples with frozen expected values.

pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod penalty;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    feasibility_residuals, validate, AdmissibleControlSet, ConstraintSpec, ControlSignal,
    CostModel, DynamicsModel, FeasibilityResiduals, Problem, TerminalConstraint, TimeGrid,
    Trajectory,
};
pub use penalty::{PenaltyBreakdown, PenaltyConfig};
pub use solver::{SolveOptions, SolveReport, SweepReport, Verdict};
