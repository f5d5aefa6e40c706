//! Penalty terms for terminal, endpoint, and pointwise state constraints,
//! the penalized objective `Phi_lambda = I + lambda * phi`, and the
//! gradient of its smoothed counterpart via a discrete adjoint sweep.
//!
//! The nonsmooth terms are reported unsmoothed; smoothing (parameter
//! `epsilon`) exists only so the solver can take gradients:
//! `|v| -> sqrt(|v|^2 + eps^2)`, `max{a, 0} -> (a + sqrt(a^2 + eps^2))/2`,
//! and sup-over-nodes -> log-sum-exp with temperature `eps`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    ControlSignal, Problem, StateFn, TerminalConstraint, TimeGrid, Trajectory,
};
use crate::simulate;
use nalgebra::DMatrix;

/// Penalty applied to the terminal constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalMode {
    None,
    /// `|x(T) - x_T|` (Euclidean norm).
    Euclidean,
}

/// Penalty applied to variable-endpoint constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointMode {
    None,
    /// `sum_i max{g_i(x(T)), 0} + sum_k |g_k(x(T))|`.
    SumHingePlusAbs,
}

/// Penalty applied to pointwise state constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateMode {
    None,
    /// `sup_t max{g_1, ..., g_l, 0}` (equality contributes `|g|`).
    Sup,
    /// Discrete `L^p` norm of the pointwise violation, `p` in (1, inf).
    Lp(f64),
}

/// Which constraints are penalized, the penalty parameter, and the
/// smoothing width used for gradients.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    pub terminal: TerminalMode,
    pub endpoint: EndpointMode,
    pub state: StateMode,
    pub lambda: f64,
    pub epsilon: f64,
}

impl PenaltyConfig {
    pub fn new(terminal: TerminalMode, endpoint: EndpointMode, state: StateMode, lambda: f64) -> Self {
        PenaltyConfig { terminal, endpoint, state, lambda, epsilon: 1e-3 }
    }

    /// Modes matching the problem's constraint specification: Euclidean for
    /// a fixed endpoint, hinge-plus-abs for a variable endpoint, sup for
    /// state constraints.
    pub fn for_problem(problem: &Problem, lambda: f64) -> Self {
        let terminal = match &problem.constraints.terminal {
            TerminalConstraint::Fixed(_) => TerminalMode::Euclidean,
            _ => TerminalMode::None,
        };
        let endpoint = match &problem.constraints.terminal {
            TerminalConstraint::Variable { .. } => EndpointMode::SumHingePlusAbs,
            _ => EndpointMode::None,
        };
        let state = if problem.constraints.has_state_constraints() {
            StateMode::Sup
        } else {
            StateMode::None
        };
        PenaltyConfig::new(terminal, endpoint, state, lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltyConfig { lambda, ..self.clone() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        PenaltyConfig { epsilon, ..self.clone() }
    }

    /// Number of smoothed elementary terms; the smoothed and unsmoothed
    /// objectives differ by at most `lambda * epsilon * count`.
    pub fn smoothed_term_count(&self, problem: &Problem) -> usize {
        let n = problem.grid.node_count();
        let mut count = 0;
        if matches!(self.terminal, TerminalMode::Euclidean)
            && matches!(problem.constraints.terminal, TerminalConstraint::Fixed(_))
        {
            count += 1;
        }
        if matches!(self.endpoint, EndpointMode::SumHingePlusAbs) {
            if let TerminalConstraint::Variable { inequalities, equalities } = &problem.constraints.terminal {
                count += inequalities.len() + equalities.len();
            }
        }
        match self.state {
            StateMode::Sup => {
                let l = problem.constraints.state_inequalities.len()
                    + 2 * usize::from(problem.constraints.state_equality.is_some());
                count += l * n + 1;
            }
            StateMode::Lp(_) => count += n,
            StateMode::None => {}
        }
        count
    }
}

/// Decomposition of the penalized objective at a point.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PenaltyBreakdown {
    pub cost: f64,
    pub terminal: f64,
    pub endpoint: f64,
    pub state: f64,
    pub total: f64,
}

impl PenaltyBreakdown {
    pub fn penalty_sum(&self) -> f64 {
        self.terminal + self.endpoint + self.state
    }
}

/// `|x(T) - x_T|`.
pub fn terminal_penalty(trajectory: &Trajectory, x_t: &[f64]) -> f64 {
    linalg::norm2(&linalg::sub(trajectory.terminal_state(), x_t))
}

/// `sum_i max{g_i(x(T)), 0} + sum_k |g_k(x(T))|` over variable-endpoint
/// constraints.
pub fn endpoint_penalty(
    trajectory: &Trajectory,
    inequalities: &[crate::model::EndpointFn],
    equalities: &[crate::model::EndpointFn],
) -> f64 {
    let x = trajectory.terminal_state();
    inequalities.iter().map(|g| g.eval(x).max(0.0)).sum::<f64>()
        + equalities.iter().map(|g| g.eval(x).abs()).sum::<f64>()
}

fn node_violation(
    x: &[f64],
    t: f64,
    inequalities: &[StateFn],
    equality: Option<&StateFn>,
) -> f64 {
    let mut v: f64 = 0.0;
    for g in inequalities {
        v = v.max(g.eval(x, t));
    }
    if let Some(g) = equality {
        v = v.max(g.eval(x, t).abs());
    }
    v.max(0.0)
}

/// `sup` over grid nodes of the pointwise constraint violation.
pub fn state_penalty_sup(
    trajectory: &Trajectory,
    inequalities: &[StateFn],
    equality: Option<&StateFn>,
    grid: &TimeGrid,
) -> f64 {
    trajectory
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| node_violation(x, grid.node_time(k), inequalities, equality))
        .fold(0.0, f64::max)
}

/// Discrete `L^p` norm (node trapezoid quadrature) of the pointwise
/// violation, `p` in (1, inf).
pub fn state_penalty_lp(
    trajectory: &Trajectory,
    inequalities: &[StateFn],
    equality: Option<&StateFn>,
    grid: &TimeGrid,
    p: f64,
) -> f64 {
    assert!(p > 1.0 && p.is_finite(), "p must lie in (1, inf)");
    let mut acc = 0.0;
    for (k, x) in trajectory.states.iter().enumerate() {
        let v = node_violation(x, grid.node_time(k), inequalities, equality);
        acc += grid.trapezoid_weight(k) * v.powf(p);
    }
    acc.powf(1.0 / p)
}

fn active_terminal<'a>(problem: &'a Problem, config: &PenaltyConfig) -> Option<&'a [f64]> {
    match (&config.terminal, &problem.constraints.terminal) {
        (TerminalMode::Euclidean, TerminalConstraint::Fixed(x_t)) => Some(x_t),
        _ => None,
    }
}

type EndpointPair<'a> = (&'a [crate::model::EndpointFn], &'a [crate::model::EndpointFn]);

fn active_endpoint<'a>(problem: &'a Problem, config: &PenaltyConfig) -> Option<EndpointPair<'a>> {
    match (&config.endpoint, &problem.constraints.terminal) {
        (EndpointMode::SumHingePlusAbs, TerminalConstraint::Variable { inequalities, equalities }) => {
            Some((inequalities, equalities))
        }
        _ => None,
    }
}

/// Roll out `control` and assemble the (unsmoothed) penalized objective.
pub fn penalized_objective(
    problem: &Problem,
    config: &PenaltyConfig,
    control: &ControlSignal,
) -> Result<PenaltyBreakdown> {
    let trajectory = simulate::rollout(problem, control)?;
    Ok(breakdown_for(problem, config, &trajectory, control))
}

/// Assemble the penalized objective for an existing rollout.
pub fn breakdown_for(
    problem: &Problem,
    config: &PenaltyConfig,
    trajectory: &Trajectory,
    control: &ControlSignal,
) -> PenaltyBreakdown {
    let cost = simulate::running_cost(problem, trajectory, control);
    let terminal = active_terminal(problem, config)
        .map_or(0.0, |x_t| terminal_penalty(trajectory, x_t));
    let endpoint = active_endpoint(problem, config)
        .map_or(0.0, |(ineq, eq)| endpoint_penalty(trajectory, ineq, eq));
    let state = match config.state {
        StateMode::None => 0.0,
        StateMode::Sup => state_penalty_sup(
            trajectory,
            &problem.constraints.state_inequalities,
            problem.constraints.state_equality.as_ref(),
            &problem.grid,
        ),
        StateMode::Lp(p) => state_penalty_lp(
            trajectory,
            &problem.constraints.state_inequalities,
            problem.constraints.state_equality.as_ref(),
            &problem.grid,
            p,
        ),
    };
    let total = cost + config.lambda * (terminal + endpoint + state);
    PenaltyBreakdown { cost, terminal, endpoint, state, total }
}

fn smooth_abs(v: f64, eps: f64) -> f64 {
    (v * v + eps * eps).sqrt()
}

fn smooth_hinge(a: f64, eps: f64) -> f64 {
    0.5 * (a + (a * a + eps * eps).sqrt())
}

fn smooth_hinge_deriv(a: f64, eps: f64) -> f64 {
    0.5 * (1.0 + a / (a * a + eps * eps).sqrt())
}

/// Per-node smoothed violation and its gradient in `x`.
///
/// Single inequality: smoothed hinge. Single equality: smoothed absolute
/// value. Mixed or multi-constraint nodes: log-sum-exp over all signed
/// constraint values and zero.
fn smooth_node_violation(
    x: &[f64],
    t: f64,
    inequalities: &[StateFn],
    equality: Option<&StateFn>,
    eps: f64,
    grad: Option<&mut Vec<f64>>,
) -> f64 {
    let d = x.len();
    if inequalities.len() == 1 && equality.is_none() {
        let g = &inequalities[0];
        let a = g.eval(x, t);
        if let Some(out) = grad {
            let s = smooth_hinge_deriv(a, eps);
            *out = linalg::scale(&g.grad(x, t), s);
        }
        return smooth_hinge(a, eps);
    }
    if inequalities.is_empty() {
        if let Some(g) = equality {
            let a = g.eval(x, t);
            if let Some(out) = grad {
                let s = a / (a * a + eps * eps).sqrt();
                *out = linalg::scale(&g.grad(x, t), s);
            }
            return smooth_abs(a, eps);
        }
        if let Some(out) = grad {
            *out = vec![0.0; d];
        }
        return 0.0;
    }
    let mut entries = Vec::new();
    for g in inequalities {
        entries.push(g.eval(x, t));
    }
    if let Some(g) = equality {
        let a = g.eval(x, t);
        entries.push(a);
        entries.push(-a);
    }
    entries.push(0.0);
    let value = linalg::log_sum_exp(&entries, eps);
    if let Some(out) = grad {
        let w = linalg::softmax(&entries, eps);
        let mut acc = vec![0.0; d];
        for (i, g) in inequalities.iter().enumerate() {
            acc = linalg::add_scaled(&acc, w[i], &g.grad(x, t));
        }
        if let Some(g) = equality {
            let base = inequalities.len();
            acc = linalg::add_scaled(&acc, w[base] - w[base + 1], &g.grad(x, t));
        }
        *out = acc;
    }
    value
}

struct SmoothedEval {
    value: f64,
    /// d value / d x_k for every node, populated only when requested.
    node_grads: Option<Vec<Vec<f64>>>,
}

fn smoothed_eval(
    problem: &Problem,
    config: &PenaltyConfig,
    trajectory: &Trajectory,
    control: &ControlSignal,
    want_grads: bool,
) -> SmoothedEval {
    let grid = &problem.grid;
    let n = grid.node_count();
    let d = problem.state_dim();
    let eps = config.epsilon;
    let lambda = config.lambda;
    let mut node_grads = if want_grads { Some(vec![vec![0.0; d]; n]) } else { None };

    let mut value = simulate::running_cost(problem, trajectory, control);
    let x_last = trajectory.terminal_state();

    if want_grads {
        let grads = node_grads.as_mut().expect("allocated above");
        let zg = problem.cost.terminal_grad(x_last);
        grads[n - 1] = linalg::add_scaled(&grads[n - 1], 1.0, &zg);
        let h = grid.step();
        for k in 0..grid.interval_count() {
            let mid: Vec<f64> = trajectory.states[k]
                .iter()
                .zip(&trajectory.states[k + 1])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let gx = problem.cost.grad_x(&mid, &control.values[k], grid.node_time(k) + 0.5 * h);
            grads[k] = linalg::add_scaled(&grads[k], 0.5 * h, &gx);
            grads[k + 1] = linalg::add_scaled(&grads[k + 1], 0.5 * h, &gx);
        }
    }

    if let Some(x_t) = active_terminal(problem, config) {
        let diff = linalg::sub(x_last, x_t);
        let norm = linalg::norm2(&diff);
        value += lambda * (norm * norm + eps * eps).sqrt();
        if let Some(grads) = node_grads.as_mut() {
            let s = lambda / (norm * norm + eps * eps).sqrt();
            grads[n - 1] = linalg::add_scaled(&grads[n - 1], s, &diff);
        }
    }

    if let Some((inequalities, equalities)) = active_endpoint(problem, config) {
        for g in inequalities {
            let a = g.eval(x_last);
            value += lambda * smooth_hinge(a, eps);
            if let Some(grads) = node_grads.as_mut() {
                let s = lambda * smooth_hinge_deriv(a, eps);
                grads[n - 1] = linalg::add_scaled(&grads[n - 1], s, &g.grad(x_last));
            }
        }
        for g in equalities {
            let a = g.eval(x_last);
            value += lambda * smooth_abs(a, eps);
            if let Some(grads) = node_grads.as_mut() {
                let s = lambda * a / (a * a + eps * eps).sqrt();
                grads[n - 1] = linalg::add_scaled(&grads[n - 1], s, &g.grad(x_last));
            }
        }
    }

    let inequalities = &problem.constraints.state_inequalities;
    let equality = problem.constraints.state_equality.as_ref();
    match config.state {
        StateMode::None => {}
        StateMode::Sup => {
            // One log-sum-exp over every signed constraint value at every
            // node plus a literal zero entry.
            let mut entries = Vec::new();
            let mut tags: Vec<(usize, isize)> = Vec::new(); // (node, constraint id signed)
            for (k, x) in trajectory.states.iter().enumerate() {
                let t = grid.node_time(k);
                for (j, g) in inequalities.iter().enumerate() {
                    entries.push(g.eval(x, t));
                    tags.push((k, j as isize + 1));
                }
                if let Some(g) = equality {
                    let a = g.eval(x, t);
                    entries.push(a);
                    tags.push((k, -1));
                    entries.push(-a);
                    tags.push((k, -2));
                }
            }
            entries.push(0.0);
            value += lambda * linalg::log_sum_exp(&entries, eps);
            if let Some(grads) = node_grads.as_mut() {
                let w = linalg::softmax(&entries, eps);
                for (idx, (k, tag)) in tags.iter().enumerate() {
                    let x = &trajectory.states[*k];
                    let t = grid.node_time(*k);
                    let (scale, g): (f64, &StateFn) = if *tag > 0 {
                        (1.0, &inequalities[(*tag - 1) as usize])
                    } else if *tag == -1 {
                        (1.0, equality.expect("tagged equality"))
                    } else {
                        (-1.0, equality.expect("tagged equality"))
                    };
                    grads[*k] =
                        linalg::add_scaled(&grads[*k], lambda * w[idx] * scale, &g.grad(x, t));
                }
            }
        }
        StateMode::Lp(p) => {
            let mut psis = Vec::with_capacity(n);
            let mut psi_grads = if want_grads { Some(Vec::with_capacity(n)) } else { None };
            let mut s_acc = 0.0;
            for (k, x) in trajectory.states.iter().enumerate() {
                let t = grid.node_time(k);
                let mut g = if want_grads { Some(vec![0.0; d]) } else { None };
                let psi =
                    smooth_node_violation(x, t, inequalities, equality, eps, g.as_mut());
                s_acc += grid.trapezoid_weight(k) * psi.powf(p);
                psis.push(psi);
                if let Some(list) = psi_grads.as_mut() {
                    list.push(g.expect("requested gradient"));
                }
            }
            let phi = s_acc.powf(1.0 / p);
            value += lambda * phi;
            if let Some(grads) = node_grads.as_mut() {
                let list = psi_grads.expect("gradient pass");
                if s_acc > 0.0 {
                    let outer = s_acc.powf(1.0 / p - 1.0);
                    for k in 0..n {
                        let s = lambda
                            * outer
                            * grid.trapezoid_weight(k)
                            * psis[k].powf(p - 1.0);
                        grads[k] = linalg::add_scaled(&grads[k], s, &list[k]);
                    }
                }
            }
        }
    }

    SmoothedEval { value, node_grads }
}

/// The epsilon-smoothed penalized objective at `control`.
pub fn smoothed_objective(
    problem: &Problem,
    config: &PenaltyConfig,
    control: &ControlSignal,
) -> Result<f64> {
    let trajectory = simulate::rollout(problem, control)?;
    Ok(smoothed_eval(problem, config, &trajectory, control, false).value)
}

pub(crate) fn smoothed_value_with_rollout(
    problem: &Problem,
    config: &PenaltyConfig,
    trajectory: &Trajectory,
    control: &ControlSignal,
) -> f64 {
    smoothed_eval(problem, config, trajectory, control, false).value
}

fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.ncols()];
    for c in 0..m.ncols() {
        let mut acc = 0.0;
        for r in 0..m.nrows() {
            acc += m[(r, c)] * v[r];
        }
        out[c] = acc;
    }
    out
}

/// Vector-Jacobian product through one RK4 step: given the adjoint of the
/// next state, accumulate adjoints of the current state and the control.
fn rk4_vjp(
    problem: &Problem,
    x: &[f64],
    u: &[f64],
    t: f64,
    h: f64,
    incoming: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dynamics = &problem.dynamics;
    let k1 = dynamics.eval(x, u, t);
    let a2 = linalg::add_scaled(x, 0.5 * h, &k1);
    let k2 = dynamics.eval(&a2, u, t + 0.5 * h);
    let a3 = linalg::add_scaled(x, 0.5 * h, &k2);
    let k3 = dynamics.eval(&a3, u, t + 0.5 * h);
    let a4 = linalg::add_scaled(x, h, &k3);

    let jx1 = dynamics.jac_x(x, u, t)?;
    let ju1 = dynamics.jac_u(x, u, t)?;
    let jx2 = dynamics.jac_x(&a2, u, t + 0.5 * h)?;
    let ju2 = dynamics.jac_u(&a2, u, t + 0.5 * h)?;
    let jx3 = dynamics.jac_x(&a3, u, t + 0.5 * h)?;
    let ju3 = dynamics.jac_u(&a3, u, t + 0.5 * h)?;
    let jx4 = dynamics.jac_x(&a4, u, t + h)?;
    let ju4 = dynamics.jac_u(&a4, u, t + h)?;

    let mut x_bar = incoming.to_vec();
    let mut u_bar = vec![0.0; u.len()];

    let k1_bar = linalg::scale(incoming, h / 6.0);
    let k2_bar = linalg::scale(incoming, h / 3.0);
    let k3_bar = linalg::scale(incoming, h / 3.0);
    let k4_bar = linalg::scale(incoming, h / 6.0);

    // Stage 4: k4 = f(x + h k3).
    let a4_bar = mat_t_vec(&jx4, &k4_bar);
    x_bar = linalg::add_scaled(&x_bar, 1.0, &a4_bar);
    let k3_bar = linalg::add_scaled(&k3_bar, h, &a4_bar);
    u_bar = linalg::add_scaled(&u_bar, 1.0, &mat_t_vec(&ju4, &k4_bar));

    // Stage 3: k3 = f(x + h/2 k2).
    let a3_bar = mat_t_vec(&jx3, &k3_bar);
    x_bar = linalg::add_scaled(&x_bar, 1.0, &a3_bar);
    let k2_bar = linalg::add_scaled(&k2_bar, 0.5 * h, &a3_bar);
    u_bar = linalg::add_scaled(&u_bar, 1.0, &mat_t_vec(&ju3, &k3_bar));

    // Stage 2: k2 = f(x + h/2 k1).
    let a2_bar = mat_t_vec(&jx2, &k2_bar);
    x_bar = linalg::add_scaled(&x_bar, 1.0, &a2_bar);
    let k1_bar = linalg::add_scaled(&k1_bar, 0.5 * h, &a2_bar);
    u_bar = linalg::add_scaled(&u_bar, 1.0, &mat_t_vec(&ju2, &k2_bar));

    // Stage 1: k1 = f(x).
    x_bar = linalg::add_scaled(&x_bar, 1.0, &mat_t_vec(&jx1, &k1_bar));
    u_bar = linalg::add_scaled(&u_bar, 1.0, &mat_t_vec(&ju1, &k1_bar));

    Ok((x_bar, u_bar))
}

/// Exact gradient of the smoothed penalized objective with respect to all
/// control values, by one backward adjoint sweep through the RK4 rollout.
pub fn smoothed_gradient(
    problem: &Problem,
    config: &PenaltyConfig,
    control: &ControlSignal,
) -> Result<Vec<Vec<f64>>> {
    if !problem.dynamics.has_jacobians() {
        return Err(Error::MissingJacobian);
    }
    let trajectory = simulate::rollout(problem, control)?;
    smoothed_gradient_with_rollout(problem, config, control, &trajectory)
}

pub(crate) fn smoothed_gradient_with_rollout(
    problem: &Problem,
    config: &PenaltyConfig,
    control: &ControlSignal,
    trajectory: &Trajectory,
) -> Result<Vec<Vec<f64>>> {
    let grid = &problem.grid;
    let h = grid.step();
    let eval = smoothed_eval(problem, config, trajectory, control, true);
    let direct = eval.node_grads.expect("gradient pass requested");

    let n = grid.node_count();
    let mut grad = vec![vec![0.0; problem.control_dim()]; grid.interval_count()];
    let mut adjoint = direct[n - 1].clone();
    for k in (0..grid.interval_count()).rev() {
        let t = grid.node_time(k);
        let (x_bar, u_bar) =
            rk4_vjp(problem, &trajectory.states[k], &control.values[k], t, h, &adjoint)?;
        let gu = problem.cost.grad_u(
            &midpoint(&trajectory.states[k], &trajectory.states[k + 1]),
            &control.values[k],
            t + 0.5 * h,
        );
        grad[k] = linalg::add_scaled(&u_bar, h, &gu);
        adjoint = linalg::add_scaled(&x_bar, 1.0, &direct[k]);
    }
    Ok(grad)
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}
