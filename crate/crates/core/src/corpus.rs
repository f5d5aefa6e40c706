//! Built-in registry of worked examples with closed-form expected
//! outcomes, used as acceptance fixtures and regression anchors.
//!
//! Each entry carries a fully constructed problem, the penalty modes it is
//! meant to be solved with, witness controls whose objective values are
//! known in closed form, and the expected sweep/diagnostic outcomes, every
//! numeric expectation with its tolerance.

use crate::diagnostics::{self, DescentSample, ProbeVerdict};
use crate::error::{Error, Result};
use crate::model::{
    builtins, AdmissibleControlSet, ConstraintSpec, ControlSignal, DynamicsModel, EndpointFn,
    PointwiseConvexSet, Problem, StateFn, TerminalConstraint, TimeGrid,
};
use crate::penalty::{self, EndpointMode, PenaltyConfig, StateMode, TerminalMode};
use crate::simulate;
use crate::solver::{self, SolveOptions, SweepOptions, Verdict};
use nalgebra::DMatrix;

/// A numeric expectation with its tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Expectation {
    pub value: f64,
    pub tolerance: f64,
}

impl Expectation {
    pub fn new(value: f64, tolerance: f64) -> Self {
        Expectation { value, tolerance }
    }

    pub fn check(&self, got: f64) -> bool {
        (got - self.value).abs() <= self.tolerance
    }
}

/// A named control with known objective values at a given lambda.
#[derive(Debug)]
pub struct Witness {
    pub name: String,
    pub control: ControlSignal,
    pub lambda: f64,
    pub total: Option<Expectation>,
    pub cost: Option<Expectation>,
    pub terminal_penalty: Option<Expectation>,
    pub state_penalty: Option<Expectation>,
}

#[derive(Debug, Clone)]
pub struct ProbeExpectation {
    pub x_t: Vec<f64>,
    pub verdict: ProbeVerdict,
    /// A direction whose gap must vanish (within 1e-6).
    pub zero_gap_direction: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct DescentExpectation {
    pub samples: Vec<DescentSample>,
    pub interval: (f64, f64),
    pub alpha: f64,
}

/// One corpus entry: problem, penalty modes, sweep setup, and expected
/// outcomes.
#[derive(Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub problem: Problem,
    pub config: PenaltyConfig,
    pub sweep_grid: Vec<f64>,
    pub sweep_tol_feas: f64,
    /// Warm start handed to the sweep's first solve.
    pub sweep_initial_guess: Option<ControlSignal>,
    pub feasible_reference: ControlSignal,
    pub witnesses: Vec<Witness>,
    pub expected_verdict: Verdict,
    pub expected_lambda_star: Option<Expectation>,
    pub expected_slater: Option<Expectation>,
    pub expected_gramian_controllable: Option<bool>,
    pub probe: Option<ProbeExpectation>,
    pub descent: Option<DescentExpectation>,
}

const NAMES: [&str; 7] = [
    "no-rint-endpoint",
    "degenerate-linearization",
    "state-eq-counterexample",
    "state-ineq-counterexample",
    "state-ineq-exact",
    "state-eq-exact",
    "lq-scalar",
];

/// Names of all registered examples.
pub fn list_examples() -> Vec<&'static str> {
    NAMES.to_vec()
}

/// Load an entry on its default grid.
pub fn load_example(name: &str) -> Result<CorpusEntry> {
    build_example(name, None)
}

/// The endpoint-shifting control pair `((s + sqrt(s))/2, (s - sqrt(s))/2)`
/// that steers the planar sum-input system to `x2(T) = s`.
pub fn shift_endpoint_control(s: f64, grid: &TimeGrid) -> ControlSignal {
    let r = s.sqrt();
    ControlSignal::constant(&[(s + r) / 2.0, (s - r) / 2.0], grid)
}

/// Bang-bang control alternating +-1 on 2n segments of length T/2n.
pub fn alternating_control(n: usize, grid: &TimeGrid) -> ControlSignal {
    let seg = grid.horizon() / (2 * n) as f64;
    let h = grid.step();
    let values = (0..grid.interval_count())
        .map(|k| {
            let mid = k as f64 * h + 0.5 * h;
            let idx = (mid / seg).floor() as usize;
            vec![if idx % 2 == 0 { 1.0 } else { -1.0 }]
        })
        .collect();
    ControlSignal::new(values, 1)
}

/// Spike control: value n on [0, 1/n^2], zero afterwards (unit L2 norm).
pub fn spike_control(n: usize, grid: &TimeGrid) -> ControlSignal {
    let cutoff = 1.0 / (n * n) as f64;
    let h = grid.step();
    let values = (0..grid.interval_count())
        .map(|k| {
            let mid = k as f64 * h + 0.5 * h;
            vec![if mid < cutoff { n as f64 } else { 0.0 }]
        })
        .collect();
    ControlSignal::new(values, 1)
}

/// Tent control for the planar drift system: +amplitude for `width`
/// intervals, -amplitude for the next `width`, zero after; the second
/// state rises to a peak and returns to zero.
fn tent_control(amplitude: f64, width: usize, grid: &TimeGrid) -> ControlSignal {
    let values = (0..grid.interval_count())
        .map(|k| {
            if k < width {
                vec![amplitude]
            } else if k < 2 * width {
                vec![-amplitude]
            } else {
                vec![0.0]
            }
        })
        .collect();
    ControlSignal::new(values, 1)
}

/// Planar tent control with independent component amplitudes.
fn tent_control_2d(a: f64, b: f64, width: usize, grid: &TimeGrid) -> ControlSignal {
    let values = (0..grid.interval_count())
        .map(|k| {
            if k < width {
                vec![a, b]
            } else if k < 2 * width {
                vec![-a, -b]
            } else {
                vec![0.0, 0.0]
            }
        })
        .collect();
    ControlSignal::new(values, 2)
}

fn no_rint_endpoint(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let a = DMatrix::zeros(2, 2);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
    let problem = Problem {
        x0: vec![0.0, 0.0],
        dynamics: DynamicsModel::linear_constant(a, b, &grid),
        cost: builtins::cost("linear_control", &[-1.0, 1.0], 2, 2).unwrap(),
        controls: AdmissibleControlSet::PointwiseConvex(PointwiseConvexSet::rotated_parabola_cap()),
        constraints: ConstraintSpec::fixed_endpoint(vec![0.0, 0.0]),
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(TerminalMode::Euclidean, EndpointMode::None, StateMode::None, 1.0);
    let s = 1.0 / 64.0;
    let witnesses = vec![
        Witness {
            name: "zero-control".into(),
            control: ControlSignal::zeros(2, &grid),
            lambda: 1.0,
            total: Some(Expectation::new(0.0, 1e-12)),
            cost: Some(Expectation::new(0.0, 1e-12)),
            terminal_penalty: Some(Expectation::new(0.0, 1e-12)),
            state_penalty: None,
        },
        Witness {
            name: "endpoint-shift-s-1-64".into(),
            control: shift_endpoint_control(s, &grid),
            lambda: 4.0,
            // -sqrt(s) + lambda s = -1/8 + 4/64 = -0.0625.
            total: Some(Expectation::new(-0.0625, 1e-6)),
            cost: Some(Expectation::new(-s.sqrt(), 1e-9)),
            terminal_penalty: Some(Expectation::new(s, 1e-9)),
            state_penalty: None,
        },
    ];
    CorpusEntry {
        name: "no-rint-endpoint",
        feasible_reference: ControlSignal::zeros(2, &grid),
        problem,
        config,
        sweep_grid: vec![0.5, 2.0, 8.0, 32.0],
        sweep_tol_feas: 1e-6,
        sweep_initial_guess: Some(shift_endpoint_control(0.25, &grid)),
        witnesses,
        expected_verdict: Verdict::NonExact,
        expected_lambda_star: None,
        expected_slater: None,
        expected_gramian_controllable: Some(false),
        probe: Some(ProbeExpectation {
            x_t: vec![0.0, 0.0],
            verdict: ProbeVerdict::Boundary,
            zero_gap_direction: Some(vec![0.0, -1.0]),
        }),
        descent: None,
    }
}

fn degenerate_linearization(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let problem = Problem {
        x0: vec![0.0],
        dynamics: builtins::dynamics("x_plus_u_squared", &[], 1, 1, &grid).unwrap(),
        cost: builtins::cost("quadratic_control", &[-1.0], 1, 1).unwrap(),
        controls: AdmissibleControlSet::Unconstrained,
        constraints: ConstraintSpec::fixed_endpoint(vec![0.0]),
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(TerminalMode::Euclidean, EndpointMode::None, StateMode::None, 1.0);
    let e = 1.0f64.exp();
    let witnesses = vec![
        Witness {
            name: "zero-control".into(),
            control: ControlSignal::zeros(1, &grid),
            lambda: 1.0,
            total: Some(Expectation::new(0.0, 1e-12)),
            cost: Some(Expectation::new(0.0, 1e-12)),
            terminal_penalty: Some(Expectation::new(0.0, 1e-12)),
            state_penalty: None,
        },
        Witness {
            name: "unit-control".into(),
            control: ControlSignal::constant(&[1.0], &grid),
            lambda: 1.0,
            // x(1) = e - 1, so Phi = -1 + (e - 1) = e - 2.
            total: Some(Expectation::new(e - 2.0, 1e-6)),
            cost: Some(Expectation::new(-1.0, 1e-9)),
            terminal_penalty: Some(Expectation::new(e - 1.0, 1e-6)),
            state_penalty: None,
        },
    ];
    CorpusEntry {
        name: "degenerate-linearization",
        feasible_reference: ControlSignal::zeros(1, &grid),
        problem,
        config,
        sweep_grid: vec![0.5, 0.75, 1.0, 1.5, 2.0],
        sweep_tol_feas: 1e-6,
        sweep_initial_guess: None,
        witnesses,
        expected_verdict: Verdict::Exact,
        // One grid step around the analytic threshold lambda* = 1.
        expected_lambda_star: Some(Expectation::new(1.0, 0.5 + 1e-9)),
        expected_slater: None,
        expected_gramian_controllable: Some(false),
        probe: None,
        descent: None,
    }
}

fn state_eq_counterexample(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let problem = Problem {
        x0: vec![0.0, 0.0],
        dynamics: builtins::dynamics("drift_integrator", &[1.0], 2, 1, &grid).unwrap(),
        cost: builtins::cost("quadratic_control", &[-1.0], 2, 1).unwrap(),
        controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
        constraints: ConstraintSpec {
            terminal: TerminalConstraint::Fixed(vec![1.0, 0.0]),
            state_inequalities: Vec::new(),
            state_equality: Some(StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)),
        },
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(TerminalMode::Euclidean, EndpointMode::None, StateMode::Sup, 1.0);
    let mut witnesses = Vec::new();
    for n_osc in [5usize, 10, 20] {
        let phi = 1.0 / (2 * n_osc) as f64;
        witnesses.push(Witness {
            name: format!("alternating-{n_osc}"),
            control: alternating_control(n_osc, &grid),
            lambda: 5.0,
            total: Some(Expectation::new(-1.0 + 5.0 * phi, 1e-6)),
            cost: Some(Expectation::new(-1.0, 1e-9)),
            terminal_penalty: Some(Expectation::new(0.0, 1e-9)),
            state_penalty: Some(Expectation::new(phi, 1e-9)),
        });
    }
    CorpusEntry {
        name: "state-eq-counterexample",
        feasible_reference: ControlSignal::zeros(1, &grid),
        sweep_initial_guess: Some(alternating_control(20, &grid)),
        problem,
        config,
        sweep_grid: vec![1.0, 2.0, 5.0],
        sweep_tol_feas: 1e-6,
        witnesses,
        expected_verdict: Verdict::NonExact,
        expected_lambda_star: None,
        expected_slater: None,
        expected_gramian_controllable: Some(false),
        probe: None,
        descent: None,
    }
}

fn state_ineq_counterexample(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let problem = Problem {
        x0: vec![0.0, 0.0],
        dynamics: builtins::dynamics("drift_integrator", &[1.0], 2, 1, &grid).unwrap(),
        cost: builtins::cost("quadratic_control", &[-1.0], 2, 1).unwrap(),
        controls: AdmissibleControlSet::NonnegL2Ball { radius: 1.0 },
        constraints: ConstraintSpec {
            terminal: TerminalConstraint::Free,
            state_inequalities: vec![StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)],
            state_equality: None,
        },
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(TerminalMode::None, EndpointMode::None, StateMode::Sup, 1.0);
    let mut witnesses = Vec::new();
    for n_spike in [5usize, 10, 20] {
        let phi = 1.0 / n_spike as f64;
        witnesses.push(Witness {
            name: format!("spike-{n_spike}"),
            control: spike_control(n_spike, &grid),
            lambda: 5.0,
            total: Some(Expectation::new(-1.0 + 5.0 * phi, 1e-6)),
            cost: Some(Expectation::new(-1.0, 1e-9)),
            terminal_penalty: None,
            state_penalty: Some(Expectation::new(phi, 1e-9)),
        });
    }
    CorpusEntry {
        name: "state-ineq-counterexample",
        feasible_reference: ControlSignal::zeros(1, &grid),
        sweep_initial_guess: Some(spike_control(20, &grid)),
        problem,
        config,
        sweep_grid: vec![1.0, 2.0, 5.0],
        sweep_tol_feas: 1e-6,
        witnesses,
        expected_verdict: Verdict::NonExact,
        expected_lambda_star: None,
        expected_slater: Some(Expectation::new(0.0, 1e-12)),
        expected_gramian_controllable: Some(false),
        probe: None,
        descent: None,
    }
}

fn state_ineq_exact(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let t_final = grid.horizon();
    let beta = 0.5;
    let problem = Problem {
        x0: vec![0.0, 0.0],
        dynamics: builtins::dynamics("drift_integrator", &[1.0], 2, 1, &grid).unwrap(),
        // theta = -x2 rewards riding above the constraint.
        cost: builtins::cost("linear_state", &[0.0, -1.0], 2, 1).unwrap(),
        controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
        constraints: ConstraintSpec {
            terminal: TerminalConstraint::Variable {
                inequalities: vec![
                    EndpointFn::affine("x2-upper", vec![0.0, 1.0], 0.0),
                    EndpointFn::affine("x2-lower", vec![0.0, -1.0], -beta),
                ],
                equalities: vec![EndpointFn::affine("clock", vec![1.0, 0.0], -t_final)],
            },
            state_inequalities: vec![StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)],
            state_equality: None,
        },
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(
        TerminalMode::None,
        EndpointMode::SumHingePlusAbs,
        StateMode::Lp(2.0),
        1.0,
    );
    // Infeasible tents returning to the endpoint set, shifted toward the
    // zero reference (the violation-scaled shift collapses to it here).
    let widths = [5usize, 8, 10, 12, 15];
    let amplitudes = [0.4, 0.6, 0.8, 1.0];
    let mut samples = Vec::new();
    for &w in &widths {
        for &a in &amplitudes {
            samples.push(DescentSample::toward_reference(tent_control(a, w, &grid)));
        }
    }
    // Unit tent over 10 + 10 intervals: the violation is piecewise linear,
    // so the cost quadrature is exact and the discrete L2 penalty has the
    // closed form sqrt(h^3 (w(w-1)(2w-1)/3 + w^2)).
    let h = grid.step();
    let w = 10.0_f64;
    let tent_area = (w * h) * (w * h);
    let tent_l2 = (h * h * h * (w * (w - 1.0) * (2.0 * w - 1.0) / 3.0 + w * w)).sqrt();
    let witnesses = vec![Witness {
        name: "unit-tent".into(),
        control: tent_control(1.0, 10, &grid),
        lambda: 2.0,
        total: Some(Expectation::new(-tent_area + 2.0 * tent_l2, 1e-9)),
        cost: Some(Expectation::new(-tent_area, 1e-12)),
        terminal_penalty: None,
        state_penalty: Some(Expectation::new(tent_l2, 1e-12)),
    }];
    CorpusEntry {
        name: "state-ineq-exact",
        feasible_reference: ControlSignal::zeros(1, &grid),
        sweep_initial_guess: None,
        problem,
        config,
        sweep_grid: vec![0.5, 1.5, 3.0, 6.0],
        sweep_tol_feas: 1e-4,
        witnesses,
        expected_verdict: Verdict::Exact,
        expected_lambda_star: Some(Expectation::new(1.5, 1.5 + 1e-9)),
        expected_slater: Some(Expectation::new(0.0, 1e-12)),
        expected_gramian_controllable: Some(false),
        probe: None,
        descent: Some(DescentExpectation { samples, interval: (0.9, 1.1), alpha: 1e-3 }),
    }
}

fn state_eq_exact(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let problem = Problem {
        x0: vec![0.0, 0.0],
        dynamics: builtins::dynamics("integrator", &[], 2, 2, &grid).unwrap(),
        cost: builtins::cost("linear_state", &[-1.0, -1.0], 2, 2).unwrap(),
        controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] },
        constraints: ConstraintSpec {
            terminal: TerminalConstraint::Variable {
                inequalities: vec![
                    EndpointFn::affine("x1-upper", vec![1.0, 0.0], -1.0),
                    EndpointFn::affine("x1-lower", vec![-1.0, 0.0], -1.0),
                ],
                equalities: vec![EndpointFn::affine("sum", vec![1.0, 1.0], 0.0)],
            },
            state_inequalities: Vec::new(),
            state_equality: Some(StateFn::affine("sum", vec![1.0, 1.0], 0.0, 0.0)),
        },
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(
        TerminalMode::None,
        EndpointMode::SumHingePlusAbs,
        StateMode::Lp(2.0),
        1.0,
    );
    // Tents with both symmetric and skew amplitudes; each sample's target
    // is the violation-scaled shift along (1, 1), which keeps the box and
    // the endpoint set.
    let mut samples = Vec::new();
    let cases: [(f64, f64, usize); 20] = [
        (0.5, 0.5, 5),
        (0.8, 0.8, 5),
        (1.0, 1.0, 5),
        (0.5, 0.5, 10),
        (0.8, 0.8, 10),
        (1.0, 1.0, 10),
        (0.9, 0.3, 5),
        (0.3, 0.9, 5),
        (0.9, 0.3, 10),
        (0.3, 0.9, 10),
        (1.0, 0.2, 8),
        (0.2, 1.0, 8),
        (0.7, 0.5, 12),
        (0.5, 0.7, 12),
        (-0.6, -0.6, 6),
        (-0.9, -0.3, 6),
        (0.6, 0.6, 15),
        (1.0, 0.6, 15),
        (0.4, 0.4, 20),
        (1.0, 1.0, 20),
    ];
    for (a, b, w) in cases {
        let control = tent_control_2d(a, b, w, &grid);
        let shift = 0.5 * (a + b);
        let target = tent_control_2d(a - shift, b - shift, w, &grid);
        samples.push(DescentSample::with_target(control, target));
    }
    // Symmetric unit tent: g = 2 * tent, so cost and penalty double the
    // scalar closed forms.
    let h = grid.step();
    let w = 10.0_f64;
    let tent_area = (w * h) * (w * h);
    let tent_l2 = (h * h * h * (w * (w - 1.0) * (2.0 * w - 1.0) / 3.0 + w * w)).sqrt();
    let witnesses = vec![Witness {
        name: "unit-tent".into(),
        control: tent_control_2d(1.0, 1.0, 10, &grid),
        lambda: 2.0,
        total: Some(Expectation::new(-2.0 * tent_area + 4.0 * tent_l2, 1e-9)),
        cost: Some(Expectation::new(-2.0 * tent_area, 1e-12)),
        terminal_penalty: None,
        state_penalty: Some(Expectation::new(2.0 * tent_l2, 1e-12)),
    }];
    CorpusEntry {
        name: "state-eq-exact",
        feasible_reference: ControlSignal::zeros(2, &grid),
        sweep_initial_guess: None,
        problem,
        config,
        sweep_grid: vec![0.5, 1.5, 3.0, 6.0],
        sweep_tol_feas: 1e-4,
        witnesses,
        expected_verdict: Verdict::Exact,
        expected_lambda_star: Some(Expectation::new(1.5, 1.5 + 1e-9)),
        expected_slater: None,
        expected_gramian_controllable: Some(true),
        probe: None,
        descent: Some(DescentExpectation {
            samples,
            interval: (1.3, 1.5),
            alpha: 1e-3,
        }),
    }
}

fn lq_scalar(n: usize) -> CorpusEntry {
    let grid = TimeGrid::new(1.0, n);
    let problem = Problem {
        x0: vec![0.0],
        dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
        cost: builtins::cost("quadratic_control", &[1.0], 1, 1).unwrap(),
        controls: AdmissibleControlSet::Unconstrained,
        constraints: ConstraintSpec::fixed_endpoint(vec![1.0]),
        grid: grid.clone(),
    };
    let config = PenaltyConfig::new(TerminalMode::Euclidean, EndpointMode::None, StateMode::None, 1.0);
    let witnesses = vec![
        Witness {
            name: "unit-control".into(),
            control: ControlSignal::constant(&[1.0], &grid),
            lambda: 1.0,
            total: Some(Expectation::new(1.0, 1e-9)),
            cost: Some(Expectation::new(1.0, 1e-9)),
            terminal_penalty: Some(Expectation::new(0.0, 1e-9)),
            state_penalty: None,
        },
        Witness {
            name: "half-control".into(),
            control: ControlSignal::constant(&[0.5], &grid),
            lambda: 1.0,
            total: Some(Expectation::new(0.75, 1e-9)),
            cost: Some(Expectation::new(0.25, 1e-9)),
            terminal_penalty: Some(Expectation::new(0.5, 1e-9)),
            state_penalty: None,
        },
    ];
    CorpusEntry {
        name: "lq-scalar",
        feasible_reference: ControlSignal::constant(&[1.0], &grid),
        sweep_initial_guess: None,
        problem,
        config,
        sweep_grid: vec![0.5, 1.0, 1.5, 2.0, 3.0],
        sweep_tol_feas: 1e-6,
        witnesses,
        expected_verdict: Verdict::Exact,
        expected_lambda_star: Some(Expectation::new(2.0, 1.0 + 1e-9)),
        expected_slater: None,
        expected_gramian_controllable: Some(true),
        probe: None,
        descent: None,
    }
}

fn default_nodes(name: &str) -> usize {
    match name {
        "state-eq-counterexample" => 201,
        "state-ineq-counterexample" => 401,
        _ => 101,
    }
}

/// Build an entry, optionally overriding the grid node count.
pub fn build_example(name: &str, grid_nodes: Option<usize>) -> Result<CorpusEntry> {
    let n = grid_nodes.unwrap_or_else(|| default_nodes(name));
    match name {
        "no-rint-endpoint" => Ok(no_rint_endpoint(n)),
        "degenerate-linearization" => Ok(degenerate_linearization(n)),
        "state-eq-counterexample" => Ok(state_eq_counterexample(n)),
        "state-ineq-counterexample" => Ok(state_ineq_counterexample(n)),
        "state-ineq-exact" => Ok(state_ineq_exact(n)),
        "state-eq-exact" => Ok(state_eq_exact(n)),
        "lq-scalar" => Ok(lq_scalar(n)),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

/// Options for [`verify_example`].
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub grid_nodes: Option<usize>,
    pub solve: SolveOptions,
    /// Skip the sweep and diagnostics (witness checks only).
    pub witnesses_only: bool,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub sweep: Option<crate::solver::SweepReport>,
}

fn push_numeric(
    checks: &mut Vec<CheckOutcome>,
    label: String,
    expect: &Expectation,
    got: f64,
) {
    checks.push(CheckOutcome {
        passed: expect.check(got),
        detail: format!("expected {} within {:.1e}, got {}", expect.value, expect.tolerance, got),
        label,
    });
}

/// Re-run an entry's witnesses, sweep, and diagnostics and compare against
/// the stored expectations.
pub fn verify_example(name: &str, options: &VerifyOptions) -> Result<VerifyReport> {
    let entry = build_example(name, options.grid_nodes)?;
    let mut checks = Vec::new();

    let violations = crate::model::validate(&entry.problem);
    checks.push(CheckOutcome {
        label: "problem validates".into(),
        passed: violations.is_empty(),
        detail: if violations.is_empty() { "ok".into() } else { violations.join("; ") },
    });

    for witness in &entry.witnesses {
        let cfg = entry.config.with_lambda(witness.lambda);
        match penalty::penalized_objective(&entry.problem, &cfg, &witness.control) {
            Ok(b) => {
                if let Some(e) = &witness.total {
                    push_numeric(
                        &mut checks,
                        format!("witness {} total objective", witness.name),
                        e,
                        b.total,
                    );
                }
                if let Some(e) = &witness.cost {
                    push_numeric(&mut checks, format!("witness {} cost", witness.name), e, b.cost);
                }
                if let Some(e) = &witness.terminal_penalty {
                    push_numeric(
                        &mut checks,
                        format!("witness {} terminal penalty", witness.name),
                        e,
                        b.terminal,
                    );
                }
                if let Some(e) = &witness.state_penalty {
                    push_numeric(
                        &mut checks,
                        format!("witness {} state penalty", witness.name),
                        e,
                        b.state,
                    );
                }
            }
            Err(e) => checks.push(CheckOutcome {
                label: format!("witness {} evaluates", witness.name),
                passed: false,
                detail: e.to_string(),
            }),
        }
    }

    let mut sweep_report = None;
    if !options.witnesses_only {
        let mut solve = options.solve.clone();
        solve.tol_feas = entry.sweep_tol_feas;
        let sweep_options = SweepOptions {
            solve,
            feasible_reference: Some(entry.feasible_reference.clone()),
        };
        let report = run_entry_sweep(&entry, &sweep_options);
        checks.push(CheckOutcome {
            label: "sweep verdict".into(),
            passed: report.verdict == entry.expected_verdict,
            detail: format!("expected {}, got {}", entry.expected_verdict, report.verdict),
        });
        if let Some(e) = &entry.expected_lambda_star {
            let got = report.estimated_lambda_star;
            checks.push(CheckOutcome {
                label: "estimated lambda-star".into(),
                passed: got.map_or(false, |v| e.check(v)),
                detail: format!("expected {} within {:.1e}, got {:?}", e.value, e.tolerance, got),
            });
        }
        sweep_report = Some(report);

        if let Some(e) = &entry.expected_slater {
            match diagnostics::slater_margin(&entry.problem, &entry.feasible_reference, 1e-6) {
                Ok(margin) => push_numeric(&mut checks, "slater margin".into(), e, margin),
                Err(err) => checks.push(CheckOutcome {
                    label: "slater margin".into(),
                    passed: false,
                    detail: err.to_string(),
                }),
            }
        }

        if let Some(expected) = entry.expected_gramian_controllable {
            let result = simulate::rollout(&entry.problem, &entry.feasible_reference)
                .and_then(|x| simulate::linearize(&entry.problem, &x, &entry.feasible_reference))
                .and_then(|lin| diagnostics::controllability_gramian(&lin, &entry.problem.grid));
            match result {
                Ok(g) => checks.push(CheckOutcome {
                    label: "gramian controllability".into(),
                    passed: g.controllable == expected,
                    detail: format!(
                        "expected controllable = {expected}, got {} (min eig {:.3e})",
                        g.controllable, g.min_eigenvalue
                    ),
                }),
                Err(e) => checks.push(CheckOutcome {
                    label: "gramian controllability".into(),
                    passed: false,
                    detail: e.to_string(),
                }),
            }
        }

        if let Some(probe) = &entry.probe {
            let tol = diagnostics::default_flat_tolerance(&probe.x_t);
            let count = diagnostics::default_direction_count(entry.problem.state_dim());
            match diagnostics::relative_interior_probe(&entry.problem, &probe.x_t, count, tol) {
                Ok(report) => {
                    checks.push(CheckOutcome {
                        label: "reachable-set probe verdict".into(),
                        passed: report.verdict == probe.verdict,
                        detail: format!("expected {:?}, got {:?}", probe.verdict, report.verdict),
                    });
                    if let Some(dir) = &probe.zero_gap_direction {
                        let gap = report
                            .directions
                            .iter()
                            .find(|p| &p.direction == dir)
                            .map(|p| p.gap);
                        checks.push(CheckOutcome {
                            label: format!("probe gap at {dir:?}"),
                            passed: gap.map_or(false, |g| g.abs() <= 1e-6),
                            detail: format!("expected 0 within 1e-6, got {gap:?}"),
                        });
                    }
                }
                Err(e) => checks.push(CheckOutcome {
                    label: "reachable-set probe verdict".into(),
                    passed: false,
                    detail: e.to_string(),
                }),
            }
        }

        if let Some(descent) = &entry.descent {
            match diagnostics::descent_rate_estimate(
                &entry.problem,
                &entry.config,
                &descent.samples,
                &entry.feasible_reference,
                descent.alpha,
                1e-6,
            ) {
                Ok(a) => checks.push(CheckOutcome {
                    label: "descent rate".into(),
                    passed: a >= descent.interval.0 && a <= descent.interval.1,
                    detail: format!(
                        "expected within [{}, {}], got {a}",
                        descent.interval.0, descent.interval.1
                    ),
                }),
                Err(e) => checks.push(CheckOutcome {
                    label: "descent rate".into(),
                    passed: false,
                    detail: e.to_string(),
                }),
            }
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { name: name.to_string(), passed, checks, sweep: sweep_report })
}

/// Run an entry's lambda sweep (warm-started from its initial guess).
pub fn run_entry_sweep(entry: &CorpusEntry, options: &SweepOptions) -> crate::solver::SweepReport {
    let mut options = options.clone();
    if options.feasible_reference.is_none() {
        options.feasible_reference = Some(entry.feasible_reference.clone());
    }
    solver::lambda_sweep_with_guess(
        &entry.problem,
        &entry.config,
        &entry.sweep_grid,
        &options,
        entry.sweep_initial_guess.as_ref(),
    )
}
