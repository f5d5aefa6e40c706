//! Shared generators for randomized property suites.

use nalgebra::DMatrix;
use ocexact::model::builtins;
use ocexact::model::{
    AdmissibleControlSet, ConstraintSpec, ControlSignal, DynamicsModel, PointwiseConvexSet,
    Problem, StateFn, TerminalConstraint, TimeGrid,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_control(dims: (usize, usize), grid: &TimeGrid, rng: &mut ChaCha8Rng, scale: f64) -> ControlSignal {
    let (_, m) = dims;
    let values = (0..grid.interval_count())
        .map(|_| (0..m).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect();
    ControlSignal::new(values, m)
}

/// Random stable-ish linear problem with a quadratic cost and free
/// constraints; callers attach constraints as needed.
pub fn random_linear_problem(rng: &mut ChaCha8Rng, nodes: usize) -> Problem {
    let d = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let grid = TimeGrid::new(1.0, nodes);
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(d, m, |_, _| rng.gen_range(-1.0..1.0));
    let cx = rng.gen_range(0.1..1.0);
    let cu = rng.gen_range(0.1..1.0);
    Problem {
        x0: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        dynamics: DynamicsModel::linear_constant(a, b, &grid),
        cost: builtins::cost("quadratic", &[cx, cu], d, m).unwrap(),
        controls: AdmissibleControlSet::Unconstrained,
        constraints: ConstraintSpec::free(),
        grid,
    }
}

/// Attach constraints that the rollout of `feasible` satisfies: its own
/// endpoint as the fixed target plus a state cap with positive margin.
pub fn constrain_around(problem: &mut Problem, feasible: &ControlSignal, margin: f64) {
    let x = ocexact::simulate::rollout(problem, feasible).expect("finite rollout");
    let d = problem.state_dim();
    let cap = x
        .states
        .iter()
        .map(|s| s[0])
        .fold(f64::NEG_INFINITY, f64::max)
        + margin;
    problem.constraints = ConstraintSpec {
        terminal: TerminalConstraint::Fixed(x.terminal_state().to_vec()),
        state_inequalities: vec![StateFn::affine(
            "x1-cap",
            {
                let mut w = vec![0.0; d];
                w[0] = 1.0;
                w
            },
            -cap,
            0.0,
        )],
        state_equality: None,
    };
}

pub fn random_set(rng: &mut ChaCha8Rng, m: usize) -> AdmissibleControlSet {
    match rng.gen_range(0..5) {
        0 => AdmissibleControlSet::Unconstrained,
        1 => {
            let lo: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.1..2.0)).collect();
            AdmissibleControlSet::PointwiseBox { lo, hi }
        }
        2 => AdmissibleControlSet::GlobalL2Ball { radius: rng.gen_range(0.2..2.0) },
        3 => AdmissibleControlSet::NonnegL2Ball { radius: rng.gen_range(0.2..2.0) },
        _ if m == 2 => {
            AdmissibleControlSet::PointwiseConvex(PointwiseConvexSet::rotated_parabola_cap())
        }
        _ => AdmissibleControlSet::Unconstrained,
    }
}
