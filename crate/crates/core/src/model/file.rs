//! Declarative problem files (JSON). Unknown keys are rejected.
//!
//! ```json
//! {
//!   "state_dim": 2, "control_dim": 1, "horizon": 1.0, "grid_nodes": 101,
//!   "x0": [0.0, 0.0],
//!   "dynamics": {"name": "double_integrator"},
//!   "cost": {"name": "quadratic_control", "params": [1.0]},
//!   "controls": {"variant": "pointwise_box", "lo": [-1.0], "hi": [1.0]},
//!   "constraints": {
//!     "terminal": {"kind": "fixed", "target": [0.5, 1.0]},
//!     "state": {"inequalities": [{"w": [0.0, 1.0], "b": 0.0}]}
//!   }
//! }
//! ```
//!
//! `dynamics.name == "linear"` takes `A`/`B` instead of `params`: either a
//! single matrix (held constant) or one matrix per grid node.

use super::{builtins, sets, ConstraintSpec, EndpointFn, Problem, StateFn, TerminalConstraint, TimeGrid};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    grid_nodes: usize,
    x0: Vec<f64>,
    dynamics: DynamicsFile,
    cost: CostFile,
    controls: ControlsFile,
    constraints: ConstraintsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsFile {
    name: String,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(rename = "A")]
    a: Option<MatrixSamples>,
    #[serde(rename = "B")]
    b: Option<MatrixSamples>,
}

/// A constant matrix or one matrix per grid node.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixSamples {
    Constant(Vec<Vec<f64>>),
    PerNode(Vec<Vec<Vec<f64>>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    name: String,
    #[serde(default)]
    params: Vec<f64>,
    /// Optional terminal cost `zeta(x_T) = <terminal_linear, x_T>`.
    terminal_linear: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlsFile {
    variant: String,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintsFile {
    terminal: TerminalFile,
    #[serde(default)]
    state: StateConstraintsFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalFile {
    kind: String,
    target: Option<Vec<f64>>,
    #[serde(default)]
    inequalities: Vec<AffineFile>,
    #[serde(default)]
    equalities: Vec<AffineFile>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StateConstraintsFile {
    #[serde(default)]
    inequalities: Vec<AffineStateFile>,
    equality: Option<AffineStateFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    w: Vec<f64>,
    #[serde(default)]
    b: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineStateFile {
    w: Vec<f64>,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    time_coeff: f64,
}

fn matrices(samples: MatrixSamples, rows: usize, cols: usize, nodes: usize, what: &str) -> Result<Vec<DMatrix<f64>>> {
    let build = |m: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
        if m.len() != rows || m.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidProblem(format!("{what} matrix must be {rows}x{cols}")));
        }
        Ok(DMatrix::from_fn(rows, cols, |r, c| m[r][c]))
    };
    match samples {
        MatrixSamples::Constant(m) => Ok(vec![build(&m)?; nodes]),
        MatrixSamples::PerNode(ms) => {
            if ms.len() != nodes {
                return Err(Error::InvalidProblem(format!(
                    "{what} needs one matrix per grid node ({nodes}), got {}",
                    ms.len()
                )));
            }
            ms.iter().map(build).collect()
        }
    }
}

/// Parse a problem description from JSON text.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidProblem(e.to_string()))?;
    build(file)
}

fn build(file: ProblemFile) -> Result<Problem> {
    if file.horizon <= 0.0 || file.grid_nodes < 2 {
        return Err(Error::InvalidProblem("horizon must be positive and grid_nodes >= 2".into()));
    }
    let grid = TimeGrid::new(file.horizon, file.grid_nodes);
    let d = file.state_dim;
    let m = file.control_dim;

    let dynamics = if file.dynamics.name == "linear" {
        let a = file
            .dynamics
            .a
            .ok_or_else(|| Error::InvalidProblem("linear dynamics needs an A matrix".into()))?;
        let b = file
            .dynamics
            .b
            .ok_or_else(|| Error::InvalidProblem("linear dynamics needs a B matrix".into()))?;
        super::DynamicsModel::linear(
            matrices(a, d, d, grid.node_count(), "A")?,
            matrices(b, d, m, grid.node_count(), "B")?,
            &grid,
        )
    } else {
        if file.dynamics.a.is_some() || file.dynamics.b.is_some() {
            return Err(Error::InvalidProblem(
                "A/B matrices are only valid with dynamics name `linear`".into(),
            ));
        }
        builtins::dynamics(&file.dynamics.name, &file.dynamics.params, d, m, &grid)?
    };

    let mut cost = builtins::cost(&file.cost.name, &file.cost.params, d, m)?;
    if let Some(w) = file.cost.terminal_linear {
        if w.len() != d {
            return Err(Error::InvalidProblem("terminal_linear has wrong dimension".into()));
        }
        cost = builtins::with_linear_terminal_cost(cost, w);
    }

    let controls = match file.controls.variant.as_str() {
        "unconstrained" => super::AdmissibleControlSet::Unconstrained,
        "pointwise_box" => {
            let lo = file.controls.lo.ok_or_else(|| Error::InvalidProblem("box needs lo".into()))?;
            let hi = file.controls.hi.ok_or_else(|| Error::InvalidProblem("box needs hi".into()))?;
            super::AdmissibleControlSet::PointwiseBox { lo, hi }
        }
        "global_l2_ball" => super::AdmissibleControlSet::GlobalL2Ball {
            radius: file.controls.radius.ok_or_else(|| Error::InvalidProblem("ball needs radius".into()))?,
        },
        "nonneg_l2_ball" => super::AdmissibleControlSet::NonnegL2Ball {
            radius: file.controls.radius.ok_or_else(|| Error::InvalidProblem("ball needs radius".into()))?,
        },
        "rotated_parabola_cap" => {
            if m != 2 {
                return Err(Error::InvalidProblem("rotated_parabola_cap needs control_dim = 2".into()));
            }
            super::AdmissibleControlSet::PointwiseConvex(sets::PointwiseConvexSet::rotated_parabola_cap())
        }
        other => return Err(Error::InvalidProblem(format!("unknown control-set variant `{other}`"))),
    };

    let affine_endpoint = |a: &AffineFile, label: String| -> Result<EndpointFn> {
        if a.w.len() != d {
            return Err(Error::InvalidProblem(format!("{label}: gradient dimension mismatch")));
        }
        Ok(EndpointFn::affine(label, a.w.clone(), a.b))
    };
    let terminal = match file.constraints.terminal.kind.as_str() {
        "free" => TerminalConstraint::Free,
        "fixed" => {
            let target = file
                .constraints
                .terminal
                .target
                .ok_or_else(|| Error::InvalidProblem("fixed terminal needs target".into()))?;
            if target.len() != d {
                return Err(Error::InvalidProblem("terminal target dimension mismatch".into()));
            }
            TerminalConstraint::Fixed(target)
        }
        "variable" => {
            let inequalities = file
                .constraints
                .terminal
                .inequalities
                .iter()
                .enumerate()
                .map(|(i, a)| affine_endpoint(a, format!("endpoint-ineq-{i}")))
                .collect::<Result<Vec<_>>>()?;
            let equalities = file
                .constraints
                .terminal
                .equalities
                .iter()
                .enumerate()
                .map(|(i, a)| affine_endpoint(a, format!("endpoint-eq-{i}")))
                .collect::<Result<Vec<_>>>()?;
            TerminalConstraint::Variable { inequalities, equalities }
        }
        other => return Err(Error::InvalidProblem(format!("unknown terminal kind `{other}`"))),
    };

    let affine_state = |a: &AffineStateFile, label: String| -> Result<StateFn> {
        if a.w.len() != d {
            return Err(Error::InvalidProblem(format!("{label}: gradient dimension mismatch")));
        }
        Ok(StateFn::affine(label, a.w.clone(), a.b, a.time_coeff))
    };
    let state_inequalities = file
        .constraints
        .state
        .inequalities
        .iter()
        .enumerate()
        .map(|(i, a)| affine_state(a, format!("state-ineq-{i}")))
        .collect::<Result<Vec<_>>>()?;
    let state_equality = match &file.constraints.state.equality {
        Some(a) => Some(affine_state(a, "state-eq".into())?),
        None => None,
    };

    let problem = Problem {
        grid,
        x0: file.x0,
        dynamics,
        cost,
        controls,
        constraints: ConstraintSpec { terminal, state_inequalities, state_equality },
    };
    let violations = super::validate(&problem);
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations.join("; ")));
    }
    Ok(problem)
}
