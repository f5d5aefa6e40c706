//! Minimization of the penalized objective over admissible controls,
//! lambda-continuation sweeps with an empirical exactness verdict, and a
//! brute-force enumeration oracle for small instances.
//!
//! The solver is projected gradient with Armijo backtracking on the
//! smoothed objective, a Barzilai-Borwein trial step, and a geometric
//! smoothing-continuation schedule. The reported objective is always the
//! unsmoothed `Phi_lambda`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    feasibility_residuals, AdmissibleControlSet, ControlSignal, FeasibilityResiduals, Problem,
    TimeGrid,
};
use crate::penalty::{self, PenaltyBreakdown, PenaltyConfig};
use crate::simulate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Tolerances, smoothing schedule, Armijo parameters, and the seed for
/// randomized restarts.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub tol_feas: f64,
    pub objective_tolerance: f64,
    /// Smoothing schedule: epsilon starts at `eps_init` and is multiplied
    /// by `eps_factor` down to `eps_floor`.
    pub eps_init: f64,
    pub eps_factor: f64,
    pub eps_floor: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 2800,
            tol_feas: 1e-6,
            objective_tolerance: 1e-9,
            eps_init: 1e-2,
            eps_factor: 0.1,
            eps_floor: 1e-8,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn epsilon_schedule(&self) -> Vec<f64> {
        let mut eps = self.eps_init;
        let mut schedule = Vec::new();
        while eps > self.eps_floor * 1.001 {
            schedule.push(eps);
            eps *= self.eps_factor;
        }
        schedule.push(self.eps_floor);
        schedule
    }
}

/// Result of one penalized minimization.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub control: ControlSignal,
    pub breakdown: PenaltyBreakdown,
    pub residuals: FeasibilityResiduals,
    pub iterations: usize,
    pub converged: bool,
    /// Line search failed at the smoothing floor.
    pub stalled: bool,
    pub termination: String,
    /// Accepted smoothed-objective values per smoothing stage, for
    /// monotonicity checks.
    pub stage_traces: Vec<(f64, Vec<f64>)>,
}

/// Project a control onto the admissible set (box clamp, radial scaling,
/// or the pointwise oracle). Idempotent.
pub fn project_onto_set(
    set: &AdmissibleControlSet,
    control: &ControlSignal,
    grid: &TimeGrid,
) -> ControlSignal {
    set.project(control, grid)
}

fn discrete_l2_flat(flat: &[f64], h: f64) -> f64 {
    (h * linalg::dot(flat, flat)).sqrt()
}

struct Candidate {
    control: ControlSignal,
    trajectory: crate::model::Trajectory,
    smoothed: f64,
}

fn eval_candidate(
    problem: &Problem,
    config: &PenaltyConfig,
    control: ControlSignal,
) -> Option<Candidate> {
    let trajectory = simulate::rollout(problem, &control).ok()?;
    let smoothed =
        penalty::smoothed_value_with_rollout(problem, config, &trajectory, &control);
    smoothed.is_finite().then_some(Candidate { control, trajectory, smoothed })
}

/// Minimize the smoothed penalized objective over the admissible set by
/// projected gradient with Armijo backtracking, driving the smoothing
/// width down its schedule. Returns the best control found, judged by the
/// unsmoothed objective. Deterministic given the options' seed.
pub fn minimize_penalized(
    problem: &Problem,
    config: &PenaltyConfig,
    u_init: &ControlSignal,
    options: &SolveOptions,
) -> Result<SolveReport> {
    let grid = &problem.grid;
    let h = grid.step();
    let m = problem.control_dim();
    let schedule = options.epsilon_schedule();
    let stage_budget = (options.max_iterations / schedule.len()).max(50);

    let projected_init = project_onto_set(&problem.controls, u_init, grid);
    let mut current = eval_candidate(problem, &config.with_epsilon(schedule[0]), projected_init)
        .ok_or(Error::NonFiniteState { node: 0 })?;

    let mut best_control = current.control.clone();
    let mut best_breakdown =
        penalty::breakdown_for(problem, config, &current.trajectory, &current.control);

    let mut iterations = 0usize;
    let mut converged = false;
    let mut stalled = false;
    let mut diverged = false;
    let mut stage_traces = Vec::new();

    for (stage, &eps) in schedule.iter().enumerate() {
        let cfg = config.with_epsilon(eps);
        let last_stage = stage + 1 == schedule.len();
        let stage_tol = if last_stage {
            options.objective_tolerance
        } else {
            options.objective_tolerance.max(1e-2 * eps)
        };
        // Re-evaluate the smoothed objective at the new epsilon.
        current = match eval_candidate(problem, &cfg, current.control.clone()) {
            Some(c) => c,
            None => break,
        };
        let mut trace = vec![current.smoothed];
        let mut grad_flat: Vec<f64> = penalty::smoothed_gradient_with_rollout(
            problem,
            &cfg,
            &current.control,
            &current.trajectory,
        )?
        .into_iter()
        .flatten()
        .collect();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (u_flat, grad_flat)
        let mut stage_iter = 0usize;

        loop {
            let u_flat = current.control.flatten();
            // Projected-gradient stationarity residual at unit step.
            let trial = ControlSignal::from_flat(
                &linalg::sub(&u_flat, &grad_flat),
                m,
            );
            let projected = project_onto_set(&problem.controls, &trial, grid);
            let pg_flat = linalg::sub(&u_flat, &projected.flatten());
            let pg_norm = discrete_l2_flat(&pg_flat, h);
            if pg_norm <= stage_tol {
                if last_stage {
                    converged = true;
                }
                break;
            }
            if stage_iter >= stage_budget || iterations >= options.max_iterations {
                break;
            }

            // Barzilai-Borwein trial step, clipped, Armijo safeguarded.
            let mut step = match &prev {
                Some((pu, pg)) => {
                    let du = linalg::sub(&u_flat, pu);
                    let dg = linalg::sub(&grad_flat, pg);
                    let denom = linalg::dot(&du, &dg);
                    if denom > 1e-300 {
                        (linalg::dot(&du, &du) / denom).clamp(1e-12, 1e8)
                    } else {
                        options.initial_step
                    }
                }
                None => options.initial_step,
            };

            let mut accepted: Option<Candidate> = None;
            for _ in 0..60 {
                let cand_flat = linalg::add_scaled(&u_flat, -step, &grad_flat);
                let cand = project_onto_set(
                    &problem.controls,
                    &ControlSignal::from_flat(&cand_flat, m),
                    grid,
                );
                let decrease = linalg::dot(&grad_flat, &linalg::sub(&u_flat, &cand.flatten()));
                if let Some(c) = eval_candidate(problem, &cfg, cand) {
                    if c.smoothed <= current.smoothed - options.armijo_c1 * decrease.max(0.0)
                        && c.smoothed < current.smoothed
                    {
                        accepted = Some(c);
                        break;
                    }
                }
                step *= options.backtrack;
                if step < 1e-16 {
                    break;
                }
            }

            match accepted {
                Some(c) => {
                    prev = Some((u_flat, grad_flat.clone()));
                    current = c;
                    trace.push(current.smoothed);
                    iterations += 1;
                    stage_iter += 1;
                    grad_flat = penalty::smoothed_gradient_with_rollout(
                        problem,
                        &cfg,
                        &current.control,
                        &current.trajectory,
                    )?
                    .into_iter()
                    .flatten()
                    .collect();
                    let b = penalty::breakdown_for(
                        problem,
                        config,
                        &current.trajectory,
                        &current.control,
                    );
                    if b.total < best_breakdown.total {
                        best_breakdown = b;
                        best_control = current.control.clone();
                    }
                    if current.smoothed < -1e12 {
                        diverged = true;
                        break;
                    }
                }
                None => {
                    if last_stage {
                        stalled = true;
                    }
                    break;
                }
            }
        }
        stage_traces.push((eps, trace));
        if diverged {
            break;
        }
    }

    let trajectory = simulate::rollout(problem, &best_control)?;
    let residuals = feasibility_residuals(problem, &trajectory, &best_control);
    let termination = if diverged {
        "diverged".to_string()
    } else if converged {
        "converged".to_string()
    } else if stalled {
        "stalled".to_string()
    } else {
        "max_iterations".to_string()
    };
    Ok(SolveReport {
        control: best_control,
        breakdown: best_breakdown,
        residuals,
        iterations,
        converged,
        stalled,
        termination,
    stage_traces,
    })
}

/// Sample a control inside the admissible set, for cold restarts.
pub fn random_admissible_control(problem: &Problem, rng: &mut ChaCha8Rng) -> ControlSignal {
    let m = problem.control_dim();
    let grid = &problem.grid;
    let raw: Vec<Vec<f64>> = (0..grid.interval_count())
        .map(|_| {
            (0..m)
                .map(|i| match &problem.controls {
                    AdmissibleControlSet::PointwiseBox { lo, hi } => rng.gen_range(lo[i]..=hi[i]),
                    AdmissibleControlSet::NonnegL2Ball { .. } => rng.gen_range(0.0..1.0),
                    _ => rng.gen_range(-1.0..1.0),
                })
                .collect()
        })
        .collect();
    project_onto_set(&problem.controls, &ControlSignal::new(raw, m), grid)
}

/// Exactness verdict of a lambda sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    Exact,
    NonExact,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Exact => write!(f, "exact"),
            Verdict::NonExact => write!(f, "non-exact"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Per-lambda outcome of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub lambda: f64,
    pub phi: f64,
    pub cost: f64,
    pub residuals: FeasibilityResiduals,
    pub converged: bool,
    pub control: ControlSignal,
    pub error: Option<String>,
}

/// Outcome of a lambda-continuation sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub verdict: Verdict,
    /// Smallest grid lambda from which every larger grid lambda is
    /// feasible within tolerance; an upper estimate of lambda-star.
    pub estimated_lambda_star: Option<f64>,
    pub best_feasible_cost: Option<f64>,
}

/// Sweep options: solver options plus an optional known-feasible control
/// whose cost anchors the non-exactness comparison.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub solve: SolveOptions,
    pub feasible_reference: Option<ControlSignal>,
}

impl SweepOptions {
    pub fn with_reference(solve: SolveOptions, reference: ControlSignal) -> Self {
        SweepOptions { solve, feasible_reference: Some(reference) }
    }
}

fn mix_seed(base: u64, index: usize) -> u64 {
    base ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1))
}

/// Solve the penalized problem over an increasing lambda grid with warm
/// starts plus one cold restart per lambda, and classify the outcome:
///
/// * `exact` — a feasibility plateau exists: from some grid lambda on,
///   every solve is feasible within `tol_feas`;
/// * `non-exact` — at the largest lambda the solver still returns an
///   infeasible point (residual above `10 * tol_feas`) whose objective
///   undercuts the best known feasible cost;
/// * `inconclusive` — anything else.
pub fn lambda_sweep(
    problem: &Problem,
    config: &PenaltyConfig,
    lambda_grid: &[f64],
    options: &SweepOptions,
) -> SweepReport {
    lambda_sweep_with_guess(problem, config, lambda_grid, options, None)
}

/// [`lambda_sweep`] with an explicit warm start for the first lambda.
pub fn lambda_sweep_with_guess(
    problem: &Problem,
    config: &PenaltyConfig,
    lambda_grid: &[f64],
    options: &SweepOptions,
    initial_guess: Option<&ControlSignal>,
) -> SweepReport {
    assert!(
        lambda_grid.windows(2).all(|w| w[0] < w[1]) && lambda_grid.iter().all(|l| *l > 0.0),
        "lambda grid must be increasing and positive"
    );
    let tol_feas = options.solve.tol_feas;
    let mut records: Vec<SweepRecord> = Vec::new();
    let mut warm: Option<ControlSignal> = initial_guess.cloned();
    let mut best_feasible_cost: Option<f64> = None;

    if let Some(reference) = &options.feasible_reference {
        if let Ok(x) = simulate::rollout(problem, reference) {
            let res = feasibility_residuals(problem, &x, reference);
            if res.feasible(tol_feas) {
                best_feasible_cost = Some(simulate::running_cost(problem, &x, reference));
            }
        }
    }

    for (index, &lambda) in lambda_grid.iter().enumerate() {
        let cfg = config.with_lambda(lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(options.solve.seed, index));
        let cold = random_admissible_control(problem, &mut rng);
        let mut starts = Vec::new();
        if let Some(w) = &warm {
            starts.push(w.clone());
        }
        starts.push(cold);
        // The feasible reference competes as a start at every lambda: past
        // the exactness threshold it should win outright.
        if let Some(reference) = &options.feasible_reference {
            starts.push(reference.clone());
        }

        let mut best: Option<SolveReport> = None;
        let mut first_error: Option<String> = None;
        for start in starts {
            match minimize_penalized(problem, &cfg, &start, &options.solve) {
                Ok(report) => {
                    if best
                        .as_ref()
                        .map_or(true, |b| report.breakdown.total < b.breakdown.total)
                    {
                        best = Some(report);
                    }
                }
                Err(e) => first_error = Some(e.to_string()),
            }
        }

        match best {
            Some(report) => {
                if report.residuals.feasible(tol_feas) {
                    let c = report.breakdown.cost;
                    best_feasible_cost =
                        Some(best_feasible_cost.map_or(c, |b: f64| b.min(c)));
                }
                warm = Some(report.control.clone());
                records.push(SweepRecord {
                    lambda,
                    phi: report.breakdown.total,
                    cost: report.breakdown.cost,
                    residuals: report.residuals,
                    converged: report.converged,
                    control: report.control,
                    error: None,
                });
            }
            None => {
                records.push(SweepRecord {
                    lambda,
                    phi: f64::NAN,
                    cost: f64::NAN,
                    residuals: FeasibilityResiduals {
                        terminal: f64::INFINITY,
                        state: f64::INFINITY,
                        control: f64::INFINITY,
                    },
                    converged: false,
                    control: ControlSignal::zeros(problem.control_dim(), &problem.grid),
                    error: first_error,
                });
            }
        }
    }

    // Feasibility plateau: the earliest suffix of the grid that is
    // entirely feasible within tolerance.
    let mut plateau_start = None;
    for i in 0..records.len() {
        if records[i..].iter().all(|r| r.residuals.feasible(tol_feas)) {
            plateau_start = Some(i);
            break;
        }
    }

    let (verdict, estimated_lambda_star) = if let Some(i) = plateau_start {
        (Verdict::Exact, Some(records[i].lambda))
    } else {
        let last = records.last().expect("non-empty grid");
        let undercuts = match best_feasible_cost {
            Some(best) => last.phi.is_finite() && last.phi < best - 1e-9,
            None => false,
        };
        if last.residuals.max() > 10.0 * tol_feas && undercuts {
            (Verdict::NonExact, None)
        } else {
            (Verdict::Inconclusive, None)
        }
    };

    SweepReport { records, verdict, estimated_lambda_star, best_feasible_cost }
}

/// CSV export: `lambda, Phi, I, terminal_res, state_res, control_res,
/// converged`, ordered by lambda.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "lambda,Phi,I,terminal_res,state_res,control_res,converged")?;
    for r in &report.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.lambda, r.phi, r.cost, r.residuals.terminal, r.residuals.state, r.residuals.control, r.converged
        )?;
    }
    Ok(())
}

/// Result of brute-force enumeration over alphabet-valued controls.
#[derive(Debug, Clone)]
pub struct OracleReport {
    /// Feasible candidate with the smallest cost, if any is feasible.
    pub best_feasible: Option<(ControlSignal, f64)>,
    /// Candidate minimizing the penalized objective (when a config is given).
    pub best_penalized: Option<(ControlSignal, f64)>,
    pub candidates: usize,
}

const ORACLE_BUDGET: f64 = 1e7;

/// Exhaustively enumerate piecewise-constant controls drawing each
/// interval value from `alphabet`, on the problem's own grid. Feasibility
/// is judged by [`feasibility_residuals`] against `tol_feas`.
pub fn brute_force_oracle(
    problem: &Problem,
    alphabet: &[Vec<f64>],
    config: Option<&PenaltyConfig>,
    tol_feas: f64,
) -> Result<OracleReport> {
    let intervals = problem.grid.interval_count();
    let count = (alphabet.len() as f64).powi(intervals as i32);
    if count > ORACLE_BUDGET {
        return Err(Error::SearchSpaceTooLarge { candidates: count, limit: ORACLE_BUDGET });
    }
    let m = problem.control_dim();
    let mut digits = vec![0usize; intervals];
    let mut best_feasible: Option<(ControlSignal, f64)> = None;
    let mut best_penalized: Option<(ControlSignal, f64)> = None;
    let mut candidates = 0usize;
    loop {
        let control = ControlSignal::new(
            digits.iter().map(|&i| alphabet[i].clone()).collect(),
            m,
        );
        candidates += 1;
        if let Ok(x) = simulate::rollout(problem, &control) {
            let res = feasibility_residuals(problem, &x, &control);
            let cost = simulate::running_cost(problem, &x, &control);
            if res.feasible(tol_feas)
                && best_feasible.as_ref().map_or(true, |(_, c)| cost < *c)
            {
                best_feasible = Some((control.clone(), cost));
            }
            if let Some(cfg) = config {
                let b = penalty::breakdown_for(problem, cfg, &x, &control);
                if best_penalized.as_ref().map_or(true, |(_, p)| b.total < *p) {
                    best_penalized = Some((control.clone(), b.total));
                }
            }
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == intervals {
                return Ok(OracleReport { best_feasible, best_penalized, candidates });
            }
            digits[pos] += 1;
            if digits[pos] < alphabet.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtins;
    use crate::model::{ConstraintSpec, PointwiseConvexSet};
    use crate::penalty::{EndpointMode, StateMode, TerminalMode};
    use approx::assert_abs_diff_eq;

    fn scalar_endpoint_problem(n: usize) -> Problem {
        // xdot = u, theta = u^2, x(1) = 1.
        let grid = TimeGrid::new(1.0, n);
        Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("quadratic_control", &[1.0], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::fixed_endpoint(vec![1.0]),
            grid,
        }
    }

    #[test]
    fn projection_examples() {
        let grid = TimeGrid::new(1.0, 3);
        let boxed = AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] };
        let u = ControlSignal::constant(&[1.7], &grid);
        assert_eq!(project_onto_set(&boxed, &u, &grid).values[0][0], 1.0);

        let ball = AdmissibleControlSet::GlobalL2Ball { radius: 1.0 };
        let v = ControlSignal::constant(&[2.0], &grid);
        let pv = project_onto_set(&ball, &v, &grid);
        assert_abs_diff_eq!(pv.values[0][0], 1.0, epsilon = 1e-12);

        let q = AdmissibleControlSet::PointwiseConvex(PointwiseConvexSet::rotated_parabola_cap());
        let w = ControlSignal::constant(&[1.0, 1.0], &grid);
        let pw = project_onto_set(&q, &w, &grid);
        // Exact projection onto the cap segment (checked against the dense
        // grid oracle in the set's own tests).
        assert_abs_diff_eq!(pw.values[0][0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(pw.values[0][1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn minimizes_scalar_endpoint_problem() {
        // Optimal control is u = 1/2 with Phi = 3/4 at lambda = 1.
        let p = scalar_endpoint_problem(51);
        let config = PenaltyConfig::for_problem(&p, 1.0);
        let report = minimize_penalized(
            &p,
            &config,
            &ControlSignal::zeros(1, &p.grid),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(report.breakdown.total, 0.75, epsilon = 1e-3);
        for u in &report.control.values {
            assert_abs_diff_eq!(u[0], 0.5, epsilon = 5e-3);
        }
    }

    #[test]
    fn unconstrained_zero_cost_converges_immediately() {
        let grid = TimeGrid::new(1.0, 11);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::free(),
            grid: grid.clone(),
        };
        let config = PenaltyConfig::new(TerminalMode::None, EndpointMode::None, StateMode::None, 1.0);
        let init = ControlSignal::constant(&[0.37], &grid);
        let report = minimize_penalized(&p, &config, &init, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.breakdown.total, 0.0);
        assert_eq!(report.control.values[0][0], 0.37);
    }

    #[test]
    fn degenerate_squared_control_problem_is_driven_to_zero() {
        // xdot = x + u^2, theta = -u^2, penalty |x(1)|: for lambda = 2 the
        // penalized objective is positive definite in u.
        let grid = TimeGrid::new(1.0, 101);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("x_plus_u_squared", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("quadratic_control", &[-1.0], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::fixed_endpoint(vec![0.0]),
            grid: grid.clone(),
        };
        let config = PenaltyConfig::for_problem(&p, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = ControlSignal::new(
            (0..grid.interval_count()).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect(),
            1,
        );
        let report = minimize_penalized(&p, &config, &init, &SolveOptions::default()).unwrap();
        assert!(simulate::control_norm(&report.control, &grid, 2.0) <= 1e-3);
        assert!(report.breakdown.total <= 1e-6);
    }

    #[test]
    fn accepted_steps_never_increase_the_smoothed_objective() {
        let p = scalar_endpoint_problem(41);
        let config = PenaltyConfig::for_problem(&p, 2.0);
        let report = minimize_penalized(
            &p,
            &config,
            &ControlSignal::constant(&[-0.4], &p.grid),
            &SolveOptions::default(),
        )
        .unwrap();
        for (_, trace) in &report.stage_traces {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "non-monotone stage trace");
            }
        }
    }

    #[test]
    fn iterates_stay_in_the_box() {
        let grid = TimeGrid::new(1.0, 21);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("linear_control", &[-1.0], 1, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-0.5], hi: vec![0.5] },
            constraints: ConstraintSpec::free(),
            grid: grid.clone(),
        };
        let config = PenaltyConfig::new(TerminalMode::None, EndpointMode::None, StateMode::None, 0.0);
        let report =
            minimize_penalized(&p, &config, &ControlSignal::zeros(1, &grid), &SolveOptions::default())
                .unwrap();
        assert!(p.controls.contains(&report.control, &grid, 1e-10));
        // Linear cost pushes to the upper box face.
        for u in &report.control.values {
            assert_abs_diff_eq!(u[0], 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn sweep_detects_scalar_threshold() {
        // Residual of the penalized minimizer is 1 - lambda/2 below the
        // threshold and zero above it.
        let p = scalar_endpoint_problem(101);
        let config = PenaltyConfig::for_problem(&p, 1.0);
        let report = lambda_sweep(
            &p,
            &config,
            &[0.5, 1.0, 1.5, 2.0, 3.0],
            &SweepOptions::default(),
        );
        assert_eq!(report.verdict, Verdict::Exact);
        let expected = [0.75, 0.5, 0.25, 0.0, 0.0];
        for (r, e) in report.records.iter().zip(expected) {
            assert_abs_diff_eq!(r.residuals.terminal, e, epsilon = 1e-3);
        }
        let star = report.estimated_lambda_star.unwrap();
        assert!((star - 2.0).abs() <= 1.0 + 1e-12, "lambda* = {star}");
    }

    #[test]
    fn sweep_without_penalized_modes_is_trivially_exact() {
        let grid = TimeGrid::new(1.0, 11);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("quadratic_control", &[1.0], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::free(),
            grid,
        };
        let config = PenaltyConfig::for_problem(&p, 1.0);
        let report = lambda_sweep(&p, &config, &[0.5, 1.0], &SweepOptions::default());
        assert_eq!(report.verdict, Verdict::Exact);
        assert_eq!(report.estimated_lambda_star, Some(0.5));
    }

    #[test]
    fn oracle_enumerates_the_full_alphabet_power() {
        let p = scalar_endpoint_problem(5);
        let alphabet = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let report = brute_force_oracle(&p, &alphabet, None, 1e-6).unwrap();
        assert_eq!(report.candidates, 81);
    }

    #[test]
    fn oracle_finds_the_unique_feasible_optimum() {
        let p = scalar_endpoint_problem(5);
        let alphabet = vec![vec![0.0], vec![0.5], vec![1.0]];
        let report = brute_force_oracle(&p, &alphabet, None, 1e-6).unwrap();
        let (control, cost) = report.best_feasible.expect("u = 1 is feasible");
        assert_abs_diff_eq!(cost, 1.0, epsilon = 1e-12);
        for u in &control.values {
            assert_eq!(u[0], 1.0);
        }
    }

    #[test]
    fn oracle_reports_infeasible_when_target_unreachable() {
        let mut p = scalar_endpoint_problem(5);
        p.constraints = ConstraintSpec::fixed_endpoint(vec![10.0]);
        let alphabet = vec![vec![0.0], vec![1.0]];
        let report = brute_force_oracle(&p, &alphabet, None, 1e-6).unwrap();
        assert!(report.best_feasible.is_none());
    }

    #[test]
    fn oracle_rejects_oversized_search_spaces() {
        let p = scalar_endpoint_problem(31);
        let alphabet = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            brute_force_oracle(&p, &alphabet, None, 1e-6),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn solver_dominates_the_alphabet_oracle() {
        let p = scalar_endpoint_problem(5);
        let config = PenaltyConfig::for_problem(&p, 4.0);
        let alphabet = vec![vec![0.0], vec![0.5], vec![1.0]];
        let oracle = brute_force_oracle(&p, &alphabet, Some(&config), 1e-6).unwrap();
        let solver = minimize_penalized(
            &p,
            &config,
            &ControlSignal::zeros(1, &p.grid),
            &SolveOptions::default(),
        )
        .unwrap();
        let (_, oracle_phi) = oracle.best_penalized.unwrap();
        assert!(solver.breakdown.total <= oracle_phi + 1e-6);
    }
}
