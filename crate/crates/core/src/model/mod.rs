//! Domain types for a discretized optimal control problem.
//!
//! Controls are piecewise constant on a uniform grid (direct single
//! shooting); trajectories carry one state per grid node. Dynamics, costs,
//! and constraint functions are closures built either from the builtin
//! registry (see [`builtins`]) or directly in code.

pub mod builtins;
pub mod file;
pub mod sets;

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use sets::{AdmissibleControlSet, PointwiseConvexSet};

/// Uniform time grid on `[0, T]` with `node_count` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    node_count: usize,
}

impl TimeGrid {
    /// Panics if `horizon <= 0` or `node_count < 2`.
    pub fn new(horizon: f64, node_count: usize) -> Self {
        assert!(horizon > 0.0, "horizon must be positive");
        assert!(node_count >= 2, "grid needs at least two nodes");
        TimeGrid { horizon, node_count }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of control intervals (`node_count - 1`).
    pub fn interval_count(&self) -> usize {
        self.node_count - 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.node_count - 1) as f64
    }

    /// Node time `t_k = k * h`; the last node evaluates to `T` exactly.
    pub fn node_time(&self, k: usize) -> f64 {
        if k + 1 == self.node_count {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    /// Trapezoid quadrature weight attached to node `k` (h/2 at the ends).
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        let h = self.step();
        if k == 0 || k + 1 == self.node_count {
            0.5 * h
        } else {
            h
        }
    }
}

/// Piecewise-constant control signal: one `R^m` value per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub values: Vec<Vec<f64>>,
    pub control_dim: usize,
}

impl ControlSignal {
    pub fn new(values: Vec<Vec<f64>>, control_dim: usize) -> Self {
        ControlSignal { values, control_dim }
    }

    /// Constant signal `u(t) = value` on every interval of `grid`.
    pub fn constant(value: &[f64], grid: &TimeGrid) -> Self {
        ControlSignal {
            values: vec![value.to_vec(); grid.interval_count()],
            control_dim: value.len(),
        }
    }

    pub fn zeros(control_dim: usize, grid: &TimeGrid) -> Self {
        Self::constant(&vec![0.0; control_dim], grid)
    }

    pub fn interval_count(&self) -> usize {
        self.values.len()
    }

    /// Flat view `[u_0; u_1; ...]` used by the optimizer.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().cloned().collect()
    }

    pub fn from_flat(flat: &[f64], control_dim: usize) -> Self {
        assert_eq!(flat.len() % control_dim.max(1), 0);
        let values = flat.chunks(control_dim).map(|c| c.to_vec()).collect();
        ControlSignal { values, control_dim }
    }
}

/// Discrete trajectory: one `R^d` state per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub state_dim: usize,
}

impl Trajectory {
    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least two nodes")
    }
}

type DynFn = Box<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;
type JacFn = Box<dyn Fn(&[f64], &[f64], f64) -> DMatrix<f64> + Send + Sync>;

/// How a dynamics model was constructed; `Linear` carries node-sampled
/// coefficient matrices that are interpolated linearly in time.
#[derive(Clone)]
pub enum DynamicsKind {
    Builtin { name: String, params: Vec<f64> },
    Linear { a_nodes: Vec<DMatrix<f64>>, b_nodes: Vec<DMatrix<f64>> },
}

impl std::fmt::Debug for DynamicsKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsKind::Builtin { name, params } => {
                write!(f, "Builtin({name}, {params:?})")
            }
            DynamicsKind::Linear { .. } => write!(f, "Linear"),
        }
    }
}

/// Right-hand side `f(x, u, t)` with optional Jacobians.
pub struct DynamicsModel {
    pub kind: DynamicsKind,
    pub state_dim: usize,
    pub control_dim: usize,
    f: DynFn,
    jac_x: Option<JacFn>,
    jac_u: Option<JacFn>,
}

impl DynamicsModel {
    pub fn from_parts(
        kind: DynamicsKind,
        state_dim: usize,
        control_dim: usize,
        f: DynFn,
        jac_x: Option<JacFn>,
        jac_u: Option<JacFn>,
    ) -> Self {
        DynamicsModel { kind, state_dim, control_dim, f, jac_x, jac_u }
    }

    /// Time-varying linear dynamics from node-sampled matrices.
    pub fn linear(a_nodes: Vec<DMatrix<f64>>, b_nodes: Vec<DMatrix<f64>>, grid: &TimeGrid) -> Self {
        let d = a_nodes[0].nrows();
        let m = b_nodes[0].ncols();
        let step = grid.step();
        let interp = move |nodes: &[DMatrix<f64>], t: f64| -> DMatrix<f64> {
            let s = (t / step).clamp(0.0, (nodes.len() - 1) as f64);
            let i = (s.floor() as usize).min(nodes.len() - 2);
            let frac = s - i as f64;
            &nodes[i] * (1.0 - frac) + &nodes[i + 1] * frac
        };
        let (an, bn) = (a_nodes.clone(), b_nodes.clone());
        let f: DynFn = {
            let (an, bn) = (an.clone(), bn.clone());
            Box::new(move |x, u, t| {
                let a = interp(&an, t);
                let b = interp(&bn, t);
                let mut out = vec![0.0; a.nrows()];
                for r in 0..a.nrows() {
                    let mut v = 0.0;
                    for c in 0..a.ncols() {
                        v += a[(r, c)] * x[c];
                    }
                    for c in 0..b.ncols() {
                        v += b[(r, c)] * u[c];
                    }
                    out[r] = v;
                }
                out
            })
        };
        let jac_x: JacFn = {
            let an = an.clone();
            Box::new(move |_x, _u, t| interp(&an, t))
        };
        let jac_u: JacFn = {
            let bn = bn.clone();
            Box::new(move |_x, _u, t| interp(&bn, t))
        };
        DynamicsModel {
            kind: DynamicsKind::Linear { a_nodes, b_nodes },
            state_dim: d,
            control_dim: m,
            f,
            jac_x: Some(jac_x),
            jac_u: Some(jac_u),
        }
    }

    /// Time-invariant linear dynamics replicated on every node of `grid`.
    pub fn linear_constant(a: DMatrix<f64>, b: DMatrix<f64>, grid: &TimeGrid) -> Self {
        let n = grid.node_count();
        Self::linear(vec![a; n], vec![b; n], grid)
    }

    pub fn eval(&self, x: &[f64], u: &[f64], t: f64) -> Vec<f64> {
        (self.f)(x, u, t)
    }

    pub fn has_jacobians(&self) -> bool {
        self.jac_x.is_some() && self.jac_u.is_some()
    }

    pub fn jac_x(&self, x: &[f64], u: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.jac_x.as_ref().map(|j| j(x, u, t)).ok_or(Error::MissingJacobian)
    }

    pub fn jac_u(&self, x: &[f64], u: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.jac_u.as_ref().map(|j| j(x, u, t)).ok_or(Error::MissingJacobian)
    }

    /// Node-sampled coefficient matrices when the dynamics is linear.
    pub fn linear_coefficients(&self) -> Option<(&[DMatrix<f64>], &[DMatrix<f64>])> {
        match &self.kind {
            DynamicsKind::Linear { a_nodes, b_nodes } => Some((a_nodes, b_nodes)),
            DynamicsKind::Builtin { .. } => None,
        }
    }
}

impl std::fmt::Debug for DynamicsModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsModel")
            .field("kind", &self.kind)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .finish()
    }
}

type ScalarFn = Box<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;
type TerminalFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type TerminalGradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Running cost `theta(x, u, t)` plus optional terminal cost `zeta(x_T)`.
pub struct CostModel {
    pub descriptor: String,
    theta: ScalarFn,
    grad_x: GradFn,
    grad_u: GradFn,
    zeta: Option<TerminalFn>,
    zeta_grad: Option<TerminalGradFn>,
}

impl CostModel {
    pub fn from_parts(
        descriptor: String,
        theta: ScalarFn,
        grad_x: GradFn,
        grad_u: GradFn,
        zeta: Option<TerminalFn>,
        zeta_grad: Option<TerminalGradFn>,
    ) -> Self {
        CostModel { descriptor, theta, grad_x, grad_u, zeta, zeta_grad }
    }

    pub fn theta(&self, x: &[f64], u: &[f64], t: f64) -> f64 {
        (self.theta)(x, u, t)
    }

    pub fn grad_x(&self, x: &[f64], u: &[f64], t: f64) -> Vec<f64> {
        (self.grad_x)(x, u, t)
    }

    pub fn grad_u(&self, x: &[f64], u: &[f64], t: f64) -> Vec<f64> {
        (self.grad_u)(x, u, t)
    }

    pub fn terminal(&self, x_t: &[f64]) -> f64 {
        self.zeta.as_ref().map_or(0.0, |z| z(x_t))
    }

    pub fn terminal_grad(&self, x_t: &[f64]) -> Vec<f64> {
        match &self.zeta_grad {
            Some(g) => g(x_t),
            None => vec![0.0; x_t.len()],
        }
    }

    pub fn has_terminal(&self) -> bool {
        self.zeta.is_some()
    }
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CostModel({})", self.descriptor)
    }
}

/// Scalar endpoint constraint function `g(x_T)` with gradient.
pub struct EndpointFn {
    pub label: String,
    eval: TerminalFn,
    grad: TerminalGradFn,
}

impl EndpointFn {
    pub fn new(label: impl Into<String>, eval: TerminalFn, grad: TerminalGradFn) -> Self {
        EndpointFn { label: label.into(), eval, grad }
    }

    /// `g(x) = <w, x> + b`.
    pub fn affine(label: impl Into<String>, w: Vec<f64>, b: f64) -> Self {
        let wg = w.clone();
        EndpointFn {
            label: label.into(),
            eval: Box::new(move |x| linalg::dot(&w, x) + b),
            grad: Box::new(move |_| wg.clone()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
}

impl std::fmt::Debug for EndpointFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EndpointFn({})", self.label)
    }
}

type StateConstraintFn = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type StateConstraintGradFn = Box<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

/// Scalar pointwise state constraint `g(x, t)` with state gradient.
pub struct StateFn {
    pub label: String,
    eval: StateConstraintFn,
    grad: StateConstraintGradFn,
}

impl StateFn {
    pub fn new(label: impl Into<String>, eval: StateConstraintFn, grad: StateConstraintGradFn) -> Self {
        StateFn { label: label.into(), eval, grad }
    }

    /// `g(x, t) = <w, x> + b + c*t`.
    pub fn affine(label: impl Into<String>, w: Vec<f64>, b: f64, time_coeff: f64) -> Self {
        let wg = w.clone();
        StateFn {
            label: label.into(),
            eval: Box::new(move |x, t| linalg::dot(&w, x) + b + time_coeff * t),
            grad: Box::new(move |_, _| wg.clone()),
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.eval)(x, t)
    }

    pub fn grad(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.grad)(x, t)
    }
}

impl std::fmt::Debug for StateFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StateFn({})", self.label)
    }
}

/// Terminal constraint: free endpoint, fixed endpoint, or a variable
/// endpoint described by inequality/equality functions of `x(T)`.
#[derive(Debug)]
pub enum TerminalConstraint {
    Free,
    Fixed(Vec<f64>),
    Variable { inequalities: Vec<EndpointFn>, equalities: Vec<EndpointFn> },
}

/// Constraint data: terminal constraint plus pointwise state constraints
/// (`g_j(x, t) <= 0` for each inequality, `g(x, t) = 0` for the optional
/// equality).
#[derive(Debug)]
pub struct ConstraintSpec {
    pub terminal: TerminalConstraint,
    pub state_inequalities: Vec<StateFn>,
    pub state_equality: Option<StateFn>,
}

impl ConstraintSpec {
    pub fn free() -> Self {
        ConstraintSpec {
            terminal: TerminalConstraint::Free,
            state_inequalities: Vec::new(),
            state_equality: None,
        }
    }

    pub fn fixed_endpoint(x_t: Vec<f64>) -> Self {
        ConstraintSpec {
            terminal: TerminalConstraint::Fixed(x_t),
            state_inequalities: Vec::new(),
            state_equality: None,
        }
    }

    pub fn has_state_constraints(&self) -> bool {
        !self.state_inequalities.is_empty() || self.state_equality.is_some()
    }
}

/// A complete problem instance.
#[derive(Debug)]
pub struct Problem {
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub dynamics: DynamicsModel,
    pub cost: CostModel,
    pub controls: AdmissibleControlSet,
    pub constraints: ConstraintSpec,
}

impl Problem {
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim
    }
}

/// Non-negative feasibility residuals; all three vanish exactly on
/// feasible discrete points.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FeasibilityResiduals {
    pub terminal: f64,
    pub state: f64,
    pub control: f64,
}

impl FeasibilityResiduals {
    pub fn max(&self) -> f64 {
        self.terminal.max(self.state).max(self.control)
    }

    pub fn feasible(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

const PROBE_SEED: u64 = 0x0c_5eed;
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-4;
const PROBE_COUNT: usize = 10;

fn fd_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_REL_TOL * (1.0 + numeric.abs())
}

/// Check a problem for dimensional consistency and evaluator coherence.
///
/// Returns every violation found; an empty list means the problem is
/// well formed. Gradient and Jacobian evaluators are compared against
/// central finite differences on seeded random probes.
pub fn validate(problem: &Problem) -> Vec<String> {
    let mut violations = Vec::new();
    let d = problem.state_dim();
    let m = problem.control_dim();

    if problem.x0.len() != d {
        violations.push(format!("x0 dimension mismatch: got {}, expected {}", problem.x0.len(), d));
    }
    if !linalg::all_finite(&problem.x0) {
        violations.push("x0 has non-finite entries".to_string());
    }

    match &problem.controls {
        AdmissibleControlSet::PointwiseBox { lo, hi } => {
            if lo.len() != m || hi.len() != m {
                violations.push("control box bounds dimension mismatch".to_string());
            } else if lo.iter().zip(hi).any(|(l, h)| l > h) {
                violations.push("control box has lo > hi".to_string());
            }
        }
        AdmissibleControlSet::GlobalL2Ball { radius }
        | AdmissibleControlSet::NonnegL2Ball { radius } => {
            if *radius <= 0.0 {
                violations.push("control ball radius must be positive".to_string());
            }
        }
        _ => {}
    }

    if let TerminalConstraint::Fixed(x_t) = &problem.constraints.terminal {
        if x_t.len() != d {
            violations.push("terminal target dimension mismatch".to_string());
        }
    }

    if let Some((a_nodes, b_nodes)) = problem.dynamics.linear_coefficients() {
        let n = problem.grid.node_count();
        if a_nodes.len() != n || b_nodes.len() != n {
            violations.push(format!(
                "linear dynamics sampled on {} nodes, grid has {}",
                a_nodes.len(),
                n
            ));
        }
        if a_nodes.iter().any(|a| a.nrows() != d || a.ncols() != d)
            || b_nodes.iter().any(|b| b.nrows() != d || b.ncols() != m)
        {
            violations.push("linear dynamics matrix dimensions mismatch".to_string());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let probe = |rng: &mut ChaCha8Rng, dim: usize| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };

    let mut dyn_jac_bad = false;
    let mut cost_grad_bad = false;
    let mut constraint_grad_bad = false;
    for _ in 0..PROBE_COUNT {
        let x = probe(&mut rng, d);
        let u = probe(&mut rng, m);
        let t = rng.gen_range(0.0..problem.grid.horizon());

        let fx = problem.dynamics.eval(&x, &u, t);
        if fx.len() != d {
            violations.push("dynamics evaluator returns wrong dimension".to_string());
            break;
        }

        if problem.dynamics.has_jacobians() && !dyn_jac_bad {
            let jx = problem.dynamics.jac_x(&x, &u, t).expect("checked");
            let ju = problem.dynamics.jac_u(&x, &u, t).expect("checked");
            'outer: for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += FD_STEP;
                xm[c] -= FD_STEP;
                let fp = problem.dynamics.eval(&xp, &u, t);
                let fm = problem.dynamics.eval(&xm, &u, t);
                for r in 0..d {
                    let fd = (fp[r] - fm[r]) / (2.0 * FD_STEP);
                    if !fd_close(jx[(r, c)], fd) {
                        dyn_jac_bad = true;
                        break 'outer;
                    }
                }
            }
            'outer_u: for c in 0..m {
                let mut up = u.clone();
                let mut um = u.clone();
                up[c] += FD_STEP;
                um[c] -= FD_STEP;
                let fp = problem.dynamics.eval(&x, &up, t);
                let fm = problem.dynamics.eval(&x, &um, t);
                for r in 0..d {
                    let fd = (fp[r] - fm[r]) / (2.0 * FD_STEP);
                    if !fd_close(ju[(r, c)], fd) {
                        dyn_jac_bad = true;
                        break 'outer_u;
                    }
                }
            }
        }

        if let Some((a_nodes, b_nodes)) = problem.dynamics.linear_coefficients() {
            if a_nodes.len() == problem.grid.node_count() && b_nodes.len() == a_nodes.len() {
                let jx = problem.dynamics.jac_x(&x, &u, t).expect("linear has jacobians");
                let ju = problem.dynamics.jac_u(&x, &u, t).expect("linear has jacobians");
                for r in 0..d {
                    let mut lin = 0.0;
                    for c in 0..d {
                        lin += jx[(r, c)] * x[c];
                    }
                    for c in 0..m {
                        lin += ju[(r, c)] * u[c];
                    }
                    if (fx[r] - lin).abs() > 1e-12 * (1.0 + lin.abs()) {
                        violations.push("linear dynamics evaluator disagrees with A(t)x + B(t)u".to_string());
                        break;
                    }
                }
            }
        }

        if !cost_grad_bad {
            let gx = problem.cost.grad_x(&x, &u, t);
            let gu = problem.cost.grad_u(&x, &u, t);
            for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += FD_STEP;
                xm[c] -= FD_STEP;
                let fd = (problem.cost.theta(&xp, &u, t) - problem.cost.theta(&xm, &u, t)) / (2.0 * FD_STEP);
                if !fd_close(gx[c], fd) {
                    cost_grad_bad = true;
                }
            }
            for c in 0..m {
                let mut up = u.clone();
                let mut um = u.clone();
                up[c] += FD_STEP;
                um[c] -= FD_STEP;
                let fd = (problem.cost.theta(&x, &up, t) - problem.cost.theta(&x, &um, t)) / (2.0 * FD_STEP);
                if !fd_close(gu[c], fd) {
                    cost_grad_bad = true;
                }
            }
            if problem.cost.has_terminal() {
                let gz = problem.cost.terminal_grad(&x);
                for c in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += FD_STEP;
                    xm[c] -= FD_STEP;
                    let fd = (problem.cost.terminal(&xp) - problem.cost.terminal(&xm)) / (2.0 * FD_STEP);
                    if !fd_close(gz[c], fd) {
                        cost_grad_bad = true;
                    }
                }
            }
        }

        if !constraint_grad_bad {
            let mut check_endpoint = |g: &EndpointFn| {
                let grad = g.grad(&x);
                for c in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += FD_STEP;
                    xm[c] -= FD_STEP;
                    let fd = (g.eval(&xp) - g.eval(&xm)) / (2.0 * FD_STEP);
                    if !fd_close(grad[c], fd) {
                        return true;
                    }
                }
                false
            };
            if let TerminalConstraint::Variable { inequalities, equalities } = &problem.constraints.terminal {
                constraint_grad_bad = inequalities.iter().any(&mut check_endpoint)
                    || equalities.iter().any(&mut check_endpoint);
            }
            let mut check_state = |g: &StateFn| {
                let grad = g.grad(&x, t);
                for c in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += FD_STEP;
                    xm[c] -= FD_STEP;
                    let fd = (g.eval(&xp, t) - g.eval(&xm, t)) / (2.0 * FD_STEP);
                    if !fd_close(grad[c], fd) {
                        return true;
                    }
                }
                false
            };
            if !constraint_grad_bad {
                constraint_grad_bad = problem.constraints.state_inequalities.iter().any(&mut check_state)
                    || problem.constraints.state_equality.iter().any(&mut check_state);
            }
        }
    }

    if dyn_jac_bad {
        violations.push("dynamics Jacobian inconsistent with finite differences".to_string());
    }
    if cost_grad_bad {
        violations.push("cost gradient inconsistent with finite differences".to_string());
    }
    if constraint_grad_bad {
        violations.push("constraint gradient inconsistent with finite differences".to_string());
    }

    // Projection idempotence / membership spot check on random points.
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 0xff);
    for _ in 0..PROBE_COUNT {
        let u: Vec<Vec<f64>> = (0..problem.grid.interval_count())
            .map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let sig = ControlSignal::new(u, m);
        let p = problem.controls.project(&sig, &problem.grid);
        let pp = problem.controls.project(&p, &problem.grid);
        let drift = p
            .values
            .iter()
            .zip(&pp.values)
            .map(|(a, b)| linalg::norm2(&linalg::sub(a, b)))
            .fold(0.0f64, f64::max);
        if drift > 1e-10 {
            violations.push("control-set projection is not idempotent".to_string());
            break;
        }
        if !problem.controls.contains(&p, &problem.grid, 1e-10) {
            violations.push("projected control fails the membership test".to_string());
            break;
        }
    }

    violations
}

/// Residuals of a (trajectory, control) pair against the problem's
/// constraint specification. The trajectory is assumed to be the rollout
/// of the control; this is not re-verified here.
pub fn feasibility_residuals(
    problem: &Problem,
    trajectory: &Trajectory,
    control: &ControlSignal,
) -> FeasibilityResiduals {
    let terminal = match &problem.constraints.terminal {
        TerminalConstraint::Free => 0.0,
        TerminalConstraint::Fixed(x_t) => linalg::norm2(&linalg::sub(trajectory.terminal_state(), x_t)),
        TerminalConstraint::Variable { inequalities, equalities } => {
            let x = trajectory.terminal_state();
            inequalities.iter().map(|g| g.eval(x).max(0.0)).sum::<f64>()
                + equalities.iter().map(|g| g.eval(x).abs()).sum::<f64>()
        }
    };

    let mut state: f64 = 0.0;
    for (k, x) in trajectory.states.iter().enumerate() {
        let t = problem.grid.node_time(k);
        for g in &problem.constraints.state_inequalities {
            state = state.max(g.eval(x, t).max(0.0));
        }
        if let Some(g) = &problem.constraints.state_equality {
            state = state.max(g.eval(x, t).abs());
        }
    }

    let projected = problem.controls.project(control, &problem.grid);
    let control_res = control
        .values
        .iter()
        .zip(&projected.values)
        .map(|(a, b)| linalg::norm2(&linalg::sub(a, b)))
        .fold(0.0f64, f64::max);

    FeasibilityResiduals { terminal, state, control: control_res }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtins;

    fn two_state_problem() -> Problem {
        let grid = TimeGrid::new(1.0, 11);
        Problem {
            x0: vec![0.0, 0.0],
            dynamics: builtins::dynamics("double_integrator", &[], 2, 1, &grid).unwrap(),
            cost: builtins::cost("quadratic_control", &[1.0], 2, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::free(),
            grid,
        }
    }

    #[test]
    fn well_formed_problem_validates() {
        assert!(validate(&two_state_problem()).is_empty());
    }

    #[test]
    fn x0_dimension_mismatch_is_reported() {
        let mut p = two_state_problem();
        p.x0 = vec![0.0, 0.0, 0.0];
        let v = validate(&p);
        assert!(v.iter().any(|s| s.contains("x0 dimension mismatch")), "{v:?}");
    }

    #[test]
    fn inconsistent_jacobian_is_reported() {
        let grid = TimeGrid::new(1.0, 11);
        // f = u but claimed d f / d u = 2 (off by a factor of two).
        let dynamics = DynamicsModel::from_parts(
            DynamicsKind::Builtin { name: "broken".into(), params: vec![] },
            1,
            1,
            Box::new(|_x, u, _t| vec![u[0]]),
            Some(Box::new(|_, _, _| DMatrix::from_element(1, 1, 0.0))),
            Some(Box::new(|_, _, _| DMatrix::from_element(1, 1, 2.0))),
        );
        let p = Problem {
            x0: vec![0.0],
            dynamics,
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::free(),
            grid,
        };
        let v = validate(&p);
        assert!(v.iter().any(|s| s.contains("dynamics Jacobian inconsistent")), "{v:?}");
    }

    #[test]
    fn validate_is_deterministic() {
        let mut p = two_state_problem();
        p.x0 = vec![0.0; 3];
        assert_eq!(validate(&p), validate(&p));
    }

    #[test]
    fn box_distance_residual() {
        let grid = TimeGrid::new(1.0, 5);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
            constraints: ConstraintSpec::free(),
            grid: grid.clone(),
        };
        let u = ControlSignal::constant(&[1.5], &grid);
        let x = crate::simulate::rollout(&p, &u).unwrap();
        let r = feasibility_residuals(&p, &x, &u);
        assert!((r.control - 0.5).abs() < 1e-12);
        assert_eq!(r.terminal, 0.0);
        assert_eq!(r.state, 0.0);
    }

    #[test]
    fn grid_last_node_hits_horizon_exactly() {
        let grid = TimeGrid::new(0.3, 7);
        assert_eq!(grid.node_time(6), 0.3);
    }

    #[test]
    fn problem_data_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Problem>();
        assert_send_sync::<ControlSignal>();
        assert_send_sync::<Trajectory>();
    }
}
