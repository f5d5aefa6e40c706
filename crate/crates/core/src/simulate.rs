//! Forward rollout, linearization along a trajectory, cost quadrature,
//! and discrete control norms.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ControlSignal, Problem, TimeGrid, Trajectory};
use nalgebra::DMatrix;
use std::io::Write;

/// One classical RK4 step with the interval's constant control.
pub(crate) fn rk4_step(
    f: &dyn Fn(&[f64], &[f64], f64) -> Vec<f64>,
    x: &[f64],
    u: &[f64],
    t: f64,
    h: f64,
) -> Vec<f64> {
    let k1 = f(x, u, t);
    let k2 = f(&linalg::add_scaled(x, 0.5 * h, &k1), u, t + 0.5 * h);
    let k3 = f(&linalg::add_scaled(x, 0.5 * h, &k2), u, t + 0.5 * h);
    let k4 = f(&linalg::add_scaled(x, h, &k3), u, t + h);
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Roll the dynamics forward from `problem.x0` under a piecewise-constant
/// control, one RK4 step per grid interval.
pub fn rollout(problem: &Problem, control: &ControlSignal) -> Result<Trajectory> {
    let grid = &problem.grid;
    let h = grid.step();
    let mut states = Vec::with_capacity(grid.node_count());
    states.push(problem.x0.clone());
    let f = |x: &[f64], u: &[f64], t: f64| problem.dynamics.eval(x, u, t);
    for k in 0..grid.interval_count() {
        let next = rk4_step(&f, &states[k], &control.values[k], grid.node_time(k), h);
        if !linalg::all_finite(&next) {
            return Err(Error::NonFiniteState { node: k + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory { states, state_dim: problem.state_dim() })
}

/// Dynamics Jacobians sampled at the left node of every interval.
#[derive(Debug, Clone)]
pub struct LinearizationAlongTrajectory {
    pub a_seq: Vec<DMatrix<f64>>,
    pub b_seq: Vec<DMatrix<f64>>,
}

impl LinearizationAlongTrajectory {
    /// Constant coefficients replicated on every interval of `grid`.
    pub fn constant(a: DMatrix<f64>, b: DMatrix<f64>, grid: &TimeGrid) -> Self {
        LinearizationAlongTrajectory {
            a_seq: vec![a; grid.interval_count()],
            b_seq: vec![b; grid.interval_count()],
        }
    }
}

/// Linearize the dynamics along `(trajectory, control)` at left nodes.
pub fn linearize(
    problem: &Problem,
    trajectory: &Trajectory,
    control: &ControlSignal,
) -> Result<LinearizationAlongTrajectory> {
    if !problem.dynamics.has_jacobians() {
        return Err(Error::MissingJacobian);
    }
    let grid = &problem.grid;
    let mut a_seq = Vec::with_capacity(grid.interval_count());
    let mut b_seq = Vec::with_capacity(grid.interval_count());
    for k in 0..grid.interval_count() {
        let t = grid.node_time(k);
        a_seq.push(problem.dynamics.jac_x(&trajectory.states[k], &control.values[k], t)?);
        b_seq.push(problem.dynamics.jac_u(&trajectory.states[k], &control.values[k], t)?);
    }
    Ok(LinearizationAlongTrajectory { a_seq, b_seq })
}

/// Integral cost by the midpoint rule per interval (midpoint-interpolated
/// state, the interval's control), plus the terminal cost if present.
pub fn running_cost(problem: &Problem, trajectory: &Trajectory, control: &ControlSignal) -> f64 {
    let grid = &problem.grid;
    let h = grid.step();
    let mut total = 0.0;
    for k in 0..grid.interval_count() {
        let mid: Vec<f64> = trajectory.states[k]
            .iter()
            .zip(&trajectory.states[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        total += h * problem.cost.theta(&mid, &control.values[k], grid.node_time(k) + 0.5 * h);
    }
    total + problem.cost.terminal(trajectory.terminal_state())
}

/// Discrete L^q norm of a piecewise-constant signal; `q = f64::INFINITY`
/// gives the sup of the interval Euclidean norms. Requires `q > 1`.
pub fn control_norm(control: &ControlSignal, grid: &TimeGrid, q: f64) -> f64 {
    assert!(q > 1.0, "control norms are defined for q in (1, inf]");
    let h = grid.step();
    if q.is_infinite() {
        control.values.iter().map(|u| linalg::norm2(u)).fold(0.0, f64::max)
    } else {
        control
            .values
            .iter()
            .map(|u| h * linalg::norm2(u).powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// Write `t, x_1..x_d, u_1..u_m` per node; the control is repeated on its
/// interval and the last row leaves the control columns blank.
pub fn write_trajectory_csv<W: Write>(
    problem: &Problem,
    trajectory: &Trajectory,
    control: &ControlSignal,
    out: &mut W,
) -> std::io::Result<()> {
    let d = problem.state_dim();
    let m = problem.control_dim();
    write!(out, "t")?;
    for i in 1..=d {
        write!(out, ",x_{i}")?;
    }
    for i in 1..=m {
        write!(out, ",u_{i}")?;
    }
    writeln!(out)?;
    for (k, x) in trajectory.states.iter().enumerate() {
        write!(out, "{}", problem.grid.node_time(k))?;
        for v in x {
            write!(out, ",{v}")?;
        }
        if k < control.values.len() {
            for v in &control.values[k] {
                write!(out, ",{v}")?;
            }
        } else {
            for _ in 0..m {
                write!(out, ",")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
