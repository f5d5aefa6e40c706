//! Executable checks of the classical exactness hypotheses on concrete
//! problems: controllability Gramian of a linearization, Slater margin of
//! a feasible reference, a support-function probe of the reachable set's
//! relative interior, an MFCQ certificate search, sampled descent-rate and
//! Lipschitz estimates, and the L/a bound on the penalty threshold.
//!
//! Everything here is evidence, not proof: probes sample finitely many
//! directions and estimators sample finitely many points.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    feasibility_residuals, ControlSignal, EndpointFn, Problem, TimeGrid, Trajectory,
};
use crate::penalty::{self, PenaltyConfig, StateMode};
use crate::simulate::{self, LinearizationAlongTrajectory};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

/// Controllability Gramian of a (frozen-per-interval) linearization.
#[derive(Debug, Clone, Serialize)]
pub struct GramianReport {
    /// `W(T)` as row-major rows; symmetric within 1e-10.
    pub matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub numerical_rank: usize,
    pub rank_threshold: f64,
    pub controllable: bool,
}

/// Integrate `Wdot = A W + W A^T + B B^T`, `W(0) = 0` by RK4 with the
/// interval's frozen coefficients, then symmetrize and eigen-decompose.
/// The rank threshold is `d * max_eigenvalue * 1e-10`.
pub fn controllability_gramian(
    linearization: &LinearizationAlongTrajectory,
    grid: &TimeGrid,
) -> Result<GramianReport> {
    let d = linearization.a_seq[0].nrows();
    let h = grid.step();
    let mut w = DMatrix::<f64>::zeros(d, d);
    for k in 0..grid.interval_count() {
        let a = &linearization.a_seq[k];
        let b = &linearization.b_seq[k];
        let bbt = b * b.transpose();
        let rhs = |w: &DMatrix<f64>| a * w + w * a.transpose() + &bbt;
        let k1 = rhs(&w);
        let k2 = rhs(&(&w + &k1 * (0.5 * h)));
        let k3 = rhs(&(&w + &k2 * (0.5 * h)));
        let k4 = rhs(&(&w + &k3 * h));
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { node: k + 1 });
        }
    }
    let w = (&w + &w.transpose()) * 0.5;
    let eigen = w.clone().symmetric_eigen();
    let min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rank_threshold = d as f64 * max_eigenvalue.max(0.0) * 1e-10;
    let numerical_rank = eigen.eigenvalues.iter().filter(|v| **v > rank_threshold).count();
    let matrix = (0..d).map(|r| (0..d).map(|c| w[(r, c)]).collect()).collect();
    Ok(GramianReport {
        matrix,
        min_eigenvalue,
        max_eigenvalue,
        numerical_rank,
        rank_threshold,
        controllable: min_eigenvalue > rank_threshold,
    })
}

/// Largest signed state-inequality value along the rollout of a feasible
/// control; Slater's condition holds with margin `|eta|` iff `eta < 0`.
/// Returns `-inf` when the problem has no state inequality constraints.
pub fn slater_margin(
    problem: &Problem,
    feasible_control: &ControlSignal,
    tol_feas: f64,
) -> Result<f64> {
    let trajectory = simulate::rollout(problem, feasible_control)?;
    let residuals = feasibility_residuals(problem, &trajectory, feasible_control);
    if residuals.terminal > tol_feas {
        return Err(Error::NotFeasibleReference { residual: residuals.terminal, tolerance: tol_feas });
    }
    let mut eta = f64::NEG_INFINITY;
    for (k, x) in trajectory.states.iter().enumerate() {
        let t = problem.grid.node_time(k);
        for g in &problem.constraints.state_inequalities {
            eta = eta.max(g.eval(x, t));
        }
    }
    Ok(eta)
}

/// Location of a target endpoint relative to the sampled reachable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeVerdict {
    Interior,
    RelativeInterior,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeDirection {
    pub direction: Vec<f64>,
    pub gap: f64,
    /// The reachable set is flat along this direction (the opposite
    /// direction's gap cancels it within tolerance).
    pub flat: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub verdict: ProbeVerdict,
    pub flat_tolerance: f64,
    pub directions: Vec<ProbeDirection>,
}

/// Default direction budget: 64 for d <= 3, else 512.
pub fn default_direction_count(d: usize) -> usize {
    if d <= 3 {
        64
    } else {
        512
    }
}

/// Default flatness tolerance `1e-8 * (1 + |x_T|)`.
pub fn default_flat_tolerance(x_t: &[f64]) -> f64 {
    1e-8 * (1.0 + linalg::norm2(x_t))
}

/// Direction pairs `(+dir, -dir)`: the coordinate axes first, then a
/// quasi-uniform fill, deterministic for a given count.
fn direction_pairs(d: usize, count: usize) -> Vec<Vec<f64>> {
    let pairs = (count / 2).max(d);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(pairs);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e);
    }
    let rem = pairs.saturating_sub(d);
    match d {
        1 => {}
        2 => {
            for j in 0..rem {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / rem as f64;
                dirs.push(vec![theta.cos(), theta.sin()]);
            }
        }
        3 => {
            // Fibonacci hemisphere.
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            for j in 0..rem {
                let z = (j as f64 + 0.5) / rem as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * j as f64;
                dirs.push(vec![r * phi.cos(), r * phi.sin(), z]);
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xd1_5ec7);
            while dirs.len() < pairs {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = linalg::norm2(&v);
                if n > 1e-3 {
                    dirs.push(linalg::scale(&v, 1.0 / n));
                }
            }
        }
    }
    dirs
}

fn rk4_matrix_ode(
    f: &dyn Fn(&[f64], f64) -> Vec<f64>,
    x0: &[f64],
    grid: &TimeGrid,
    reverse: bool,
) -> Vec<Vec<f64>> {
    // Integrates xdot = f(x, t) across the grid; with `reverse` the
    // equation runs from t = T back to 0 and the returned sequence is
    // indexed by the original node order.
    let h = grid.step();
    let t_of = |k: usize| {
        if reverse {
            grid.horizon() - grid.node_time(k)
        } else {
            grid.node_time(k)
        }
    };
    let mut states = vec![x0.to_vec()];
    for k in 0..grid.interval_count() {
        let t = t_of(k);
        let sign = if reverse { -1.0 } else { 1.0 };
        let g = |x: &[f64], tau: f64| linalg::scale(&f(x, tau), sign);
        let x = states.last().expect("non-empty");
        let k1 = g(x, t);
        let k2 = g(&linalg::add_scaled(x, 0.5 * h, &k1), t + sign * 0.5 * h);
        let k3 = g(&linalg::add_scaled(x, 0.5 * h, &k2), t + sign * 0.5 * h);
        let k4 = g(&linalg::add_scaled(x, h, &k3), t + sign * h);
        let next: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        states.push(next);
    }
    if reverse {
        states.reverse();
    }
    states
}

/// Probe whether `x_T` lies in the (relative) interior of the reachable
/// set of a linear system with a pointwise control set.
///
/// For each sampled unit direction the support value of the reachable set
/// is computed from the adjoint solution and the pointwise support
/// function of the control set; `gap = support - <dir, x_T>`. Directions
/// whose two-sided width vanishes are flat (affine-hull normals).
pub fn relative_interior_probe(
    problem: &Problem,
    x_t: &[f64],
    direction_count: usize,
    flat_tolerance: f64,
) -> Result<ProbeReport> {
    if problem.dynamics.linear_coefficients().is_none() {
        return Err(Error::UnsupportedDynamics);
    }
    let d = problem.state_dim();
    let m = problem.control_dim();
    let grid = &problem.grid;
    let zero_u = vec![0.0; m];

    // Support oracle availability check up front.
    if problem.controls.pointwise_support(&vec![0.0; m]).is_none() {
        return Err(Error::MissingSupportOracle);
    }

    // Drift endpoint: rollout of xdot = A(t) x from x0 (u = 0).
    let drift = {
        let f = |x: &[f64], t: f64| problem.dynamics.eval(x, &zero_u, t);
        let states = rk4_matrix_ode(&f, &problem.x0, grid, false);
        states.last().expect("non-empty").clone()
    };

    let h = grid.step();
    let support_of_dir = |dir: &[f64]| -> Result<f64> {
        // Adjoint psi_dot = -A(t)^T psi, psi(T) = dir, integrated backward.
        let f = |psi: &[f64], t: f64| {
            let a = problem
                .dynamics
                .jac_x(&vec![0.0; d], &zero_u, t)
                .expect("linear dynamics has jacobians");
            let mut out = vec![0.0; d];
            for c in 0..d {
                let mut acc = 0.0;
                for r in 0..d {
                    acc -= a[(r, c)] * psi[r];
                }
                out[c] = acc;
            }
            out
        };
        let psi = rk4_matrix_ode(&f, dir, grid, true);
        let mut total = linalg::dot(dir, &drift);
        for k in 0..grid.interval_count() {
            let t = grid.node_time(k);
            let b = problem.dynamics.jac_u(&vec![0.0; d], &zero_u, t)?;
            let mut c = vec![0.0; m];
            for col in 0..m {
                let mut acc = 0.0;
                for row in 0..d {
                    acc += b[(row, col)] * psi[k][row];
                }
                c[col] = acc;
            }
            let s = problem.controls.pointwise_support(&c).ok_or(Error::MissingSupportOracle)?;
            total += h * s;
        }
        Ok(total)
    };

    let mut directions = Vec::new();
    for base in direction_pairs(d, direction_count) {
        // Negate without producing -0.0 entries in the report.
        let neg: Vec<f64> = base.iter().map(|v| if *v == 0.0 { 0.0 } else { -v }).collect();
        let gap_pos = support_of_dir(&base)? - linalg::dot(&base, x_t);
        let gap_neg = support_of_dir(&neg)? - linalg::dot(&neg, x_t);
        let flat = gap_pos + gap_neg <= flat_tolerance;
        directions.push(ProbeDirection { direction: base, gap: gap_pos, flat });
        directions.push(ProbeDirection { direction: neg, gap: gap_neg, flat });
    }

    let any_outside = directions.iter().any(|p| p.gap < -flat_tolerance);
    let has_flat = directions.iter().any(|p| p.flat);
    let min_nonflat_gap = directions
        .iter()
        .filter(|p| !p.flat)
        .map(|p| p.gap)
        .fold(f64::INFINITY, f64::min);
    let verdict = if any_outside {
        ProbeVerdict::Outside
    } else if min_nonflat_gap <= flat_tolerance {
        ProbeVerdict::Boundary
    } else if has_flat {
        ProbeVerdict::RelativeInterior
    } else {
        ProbeVerdict::Interior
    };
    Ok(ProbeReport { verdict, flat_tolerance, directions })
}

/// Mangasarian-Fromovitz constraint qualification certificate.
#[derive(Debug, Clone, Serialize)]
pub struct MfcqReport {
    pub holds: bool,
    /// Strict-descent direction for the active inequalities inside the
    /// equality null space, when one was found.
    pub direction: Option<Vec<f64>>,
    /// Best achieved `max_i <grad g_i, h>`; absent when no inequality is
    /// active.
    pub margin: Option<f64>,
}

const MFCQ_SEED: u64 = 0x4d_4643;
const MFCQ_STRICT: f64 = -1e-8;

/// Check MFCQ at an endpoint: equality gradients of full rank plus a unit
/// direction in their null space along which every active inequality
/// strictly decreases. The direction search is smoothed subgradient
/// descent (log-sum-exp, cooling temperature) from 32 seeded starts.
pub fn mfcq_check(
    inequalities: &[EndpointFn],
    equalities: &[EndpointFn],
    x_t_point: &[f64],
    active_tolerance: f64,
) -> MfcqReport {
    let d = x_t_point.len();
    // Orthonormal basis of the equality-gradient null space.
    let null_basis: Vec<Vec<f64>> = if equalities.is_empty() {
        (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect()
    } else {
        let rows: Vec<Vec<f64>> = equalities.iter().map(|g| g.grad(x_t_point)).collect();
        let mat = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        let svd = mat.clone().svd(false, true);
        let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let threshold = max_sv * 1e-10 * d.max(rows.len()) as f64;
        let rank = svd.singular_values.iter().filter(|s| **s > threshold).count();
        if rank < equalities.len() {
            // Linearly dependent equality gradients: MFCQ fails outright.
            return MfcqReport { holds: false, direction: None, margin: None };
        }
        let v_t = svd.v_t.expect("requested");
        (rank..v_t.nrows())
            .map(|r| (0..d).map(|c| v_t[(r, c)]).collect())
            .collect()
    };

    let active: Vec<Vec<f64>> = inequalities
        .iter()
        .filter(|g| g.eval(x_t_point) >= -active_tolerance)
        .map(|g| g.grad(x_t_point))
        .collect();
    if active.is_empty() {
        return MfcqReport { holds: true, direction: None, margin: None };
    }
    if null_basis.is_empty() {
        return MfcqReport { holds: false, direction: None, margin: None };
    }

    // Reduced gradients a_i = Z^T grad g_i; minimize max_i <a_i, c> over
    // the unit ball.
    let r = null_basis.len();
    let reduced: Vec<Vec<f64>> = active
        .iter()
        .map(|g| null_basis.iter().map(|z| linalg::dot(z, g)).collect())
        .collect();
    let scale = reduced.iter().map(|a| linalg::norm2(a)).fold(1e-12, f64::max);
    let objective = |c: &[f64]| -> f64 {
        reduced.iter().map(|a| linalg::dot(a, c)).fold(f64::NEG_INFINITY, f64::max)
    };
    let project_ball = |c: &[f64]| -> Vec<f64> {
        let n = linalg::norm2(c);
        if n > 1.0 {
            linalg::scale(c, 1.0 / n)
        } else {
            c.to_vec()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(MFCQ_SEED);
    let mut best_c: Option<Vec<f64>> = None;
    let mut best_val = f64::INFINITY;
    for _ in 0..32 {
        let mut c: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        c = project_ball(&c);
        for temp_decade in 0..4 {
            let tau = scale * 0.1f64.powi(temp_decade + 1);
            for j in 0..150 {
                let vals: Vec<f64> = reduced.iter().map(|a| linalg::dot(a, &c)).collect();
                let w = linalg::softmax(&vals, tau);
                let mut grad = vec![0.0; r];
                for (wi, a) in w.iter().zip(&reduced) {
                    grad = linalg::add_scaled(&grad, *wi, a);
                }
                let step = 0.5 / (scale * ((j + 1) as f64).sqrt());
                c = project_ball(&linalg::add_scaled(&c, -step, &grad));
                let val = objective(&c);
                if val < best_val {
                    best_val = val;
                    best_c = Some(c.clone());
                }
            }
        }
    }

    let holds = best_val < MFCQ_STRICT;
    let direction = if holds {
        best_c.map(|c| {
            let mut h = vec![0.0; d];
            for (ci, z) in c.iter().zip(&null_basis) {
                h = linalg::add_scaled(&h, *ci, z);
            }
            h
        })
    } else {
        None
    };
    MfcqReport { holds, direction, margin: Some(best_val) }
}

/// An infeasible point for the descent-rate estimator, with an optional
/// shift target; without one, the feasible reference is the target.
#[derive(Debug, Clone)]
pub struct DescentSample {
    pub control: ControlSignal,
    pub target: Option<ControlSignal>,
}

impl DescentSample {
    pub fn toward_reference(control: ControlSignal) -> Self {
        DescentSample { control, target: None }
    }

    pub fn with_target(control: ControlSignal, target: ControlSignal) -> Self {
        DescentSample { control, target: Some(target) }
    }
}

fn trajectory_lp_distance(a: &Trajectory, b: &Trajectory, grid: &TimeGrid, p: f64) -> f64 {
    let mut acc = 0.0;
    for (k, (xa, xb)) in a.states.iter().zip(&b.states).enumerate() {
        acc += grid.trapezoid_weight(k) * linalg::norm2(&linalg::sub(xa, xb)).powf(p);
    }
    acc.powf(1.0 / p)
}

fn trajectory_sup_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(xa, xb)| linalg::norm2(&linalg::sub(xa, xb)))
        .fold(0.0, f64::max)
}

fn control_l2_distance(a: &ControlSignal, b: &ControlSignal, grid: &TimeGrid) -> f64 {
    let h = grid.step();
    a.values
        .iter()
        .zip(&b.values)
        .map(|(ua, ub)| h * linalg::dot(&linalg::sub(ua, ub), &linalg::sub(ua, ub)))
        .sum::<f64>()
        .sqrt()
}

fn penalty_value(problem: &Problem, config: &PenaltyConfig, control: &ControlSignal) -> Result<f64> {
    Ok(penalty::penalized_objective(problem, config, control)?.penalty_sum())
}

/// Empirical lower bound on the uniform descent rate of the penalty term.
///
/// For each infeasible sample, the control is shifted a small step toward
/// its target (re-rolled, so the perturbed point satisfies the dynamics
/// exactly), and the penalty difference quotient is Richardson-corrected
/// from steps `alpha` and `alpha/2`. The step direction is normalized by
/// the metric the active penalty lives in: the trajectory `L^p` metric
/// (plus endpoint gap) for `L^p` state penalties, and the uniform state
/// metric plus the control `L^2` distance otherwise. Returns
/// `a = -max_k r_k`; positive values evidence the descent hypothesis.
pub fn descent_rate_estimate(
    problem: &Problem,
    config: &PenaltyConfig,
    samples: &[DescentSample],
    feasible_reference: &ControlSignal,
    alpha: f64,
    tol_feas: f64,
) -> Result<f64> {
    let ref_trajectory = simulate::rollout(problem, feasible_reference)?;
    let ref_residuals = feasibility_residuals(problem, &ref_trajectory, feasible_reference);
    if !ref_residuals.feasible(tol_feas) {
        return Err(Error::NotFeasibleReference {
            residual: ref_residuals.max(),
            tolerance: tol_feas,
        });
    }

    let mut worst_rate = f64::NEG_INFINITY;
    let mut usable = 0;
    for sample in samples {
        let phi0 = penalty_value(problem, config, &sample.control)?;
        if phi0 <= tol_feas {
            continue;
        }
        usable += 1;
        let x = simulate::rollout(problem, &sample.control)?;
        let target = sample.target.as_ref().unwrap_or(feasible_reference);
        let x_hat = simulate::rollout(problem, target)?;
        let sigma = match config.state {
            StateMode::Lp(p) => {
                trajectory_lp_distance(&x_hat, &x, &problem.grid, p)
                    + linalg::norm2(&linalg::sub(x_hat.terminal_state(), x.terminal_state()))
            }
            _ => {
                trajectory_sup_distance(&x_hat, &x)
                    + control_l2_distance(target, &sample.control, &problem.grid)
            }
        };
        if sigma <= 1e-14 {
            continue;
        }
        let alpha_eff = alpha.min(0.5 * sigma);
        let rate_at = |a: f64| -> Result<f64> {
            let beta = a / sigma;
            let values: Vec<Vec<f64>> = sample
                .control
                .values
                .iter()
                .zip(&target.values)
                .map(|(u, v)| {
                    u.iter().zip(v).map(|(ui, vi)| ui + beta * (vi - ui)).collect()
                })
                .collect();
            let shifted = ControlSignal::new(values, sample.control.control_dim);
            Ok((penalty_value(problem, config, &shifted)? - phi0) / a)
        };
        let r_full = rate_at(alpha_eff)?;
        let r_half = rate_at(0.5 * alpha_eff)?;
        // First-order Richardson extrapolation.
        let r = 2.0 * r_half - r_full;
        worst_rate = worst_rate.max(r);
    }
    if usable == 0 {
        return Err(Error::NoInfeasibleSamples);
    }
    Ok(-worst_rate)
}

/// Largest sampled ratio `|I(p) - I(q)| / (||x_p - x_q|| + ||u_p - u_q||)`
/// over control pairs (uniform state metric, discrete L2 control metric).
/// An empirical lower estimate of the cost's Lipschitz constant.
pub fn lipschitz_estimate(
    problem: &Problem,
    samples: &[ControlSignal],
    pair_count: usize,
) -> Result<f64> {
    assert!(samples.len() >= 2, "need at least two samples");
    let mut data = Vec::with_capacity(samples.len());
    for control in samples {
        let x = simulate::rollout(problem, control)?;
        let cost = simulate::running_cost(problem, &x, control);
        data.push((x, cost));
    }
    let mut best: f64 = 0.0;
    let mut pairs = 0usize;
    'outer: for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            if pairs >= pair_count {
                break 'outer;
            }
            pairs += 1;
            let denom = trajectory_sup_distance(&data[i].0, &data[j].0)
                + control_l2_distance(&samples[i], &samples[j], &problem.grid);
            if denom <= 1e-14 {
                continue;
            }
            best = best.max((data[i].1 - data[j].1).abs() / denom);
        }
    }
    Ok(best)
}

/// The classical local-exactness threshold bound `lambda* <= L / a`.
pub fn lambda_star_bound(lipschitz: f64, descent_rate: f64) -> Result<f64> {
    if descent_rate <= 0.0 {
        return Err(Error::NonPositiveRate { rate: descent_rate });
    }
    Ok(lipschitz / descent_rate)
}

/// Aggregated diagnostics; absent fields were not applicable or not
/// requested.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ExactnessDiagnostics {
    pub slater_margin: Option<f64>,
    pub gramian: Option<GramianReport>,
    pub relative_interior: Option<ProbeReport>,
    pub mfcq: Option<MfcqReport>,
    pub descent_rate: Option<f64>,
    pub lipschitz_estimate: Option<f64>,
    pub lambda_star_bound: Option<f64>,
}

impl ExactnessDiagnostics {
    /// Fill the L/a bound when both inputs are present and the rate is
    /// positive.
    pub fn finalize(mut self) -> Self {
        self.lambda_star_bound = match (self.lipschitz_estimate, self.descent_rate) {
            (Some(l), Some(a)) if a > 0.0 => Some(l / a),
            _ => None,
        };
        self
    }
}

/// JSON export of the aggregated diagnostics.
pub fn write_diagnostics_json<W: Write>(
    diagnostics: &ExactnessDiagnostics,
    out: &mut W,
) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(diagnostics)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    writeln!(out, "{text}")
}

/// CSV export of probe gaps: direction components, then the gap.
pub fn write_probe_gaps_csv<W: Write>(report: &ProbeReport, out: &mut W) -> std::io::Result<()> {
    let d = report.directions.first().map_or(0, |p| p.direction.len());
    for i in 1..=d {
        write!(out, "d_{i},")?;
    }
    writeln!(out, "gap")?;
    for p in &report.directions {
        for v in &p.direction {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", p.gap)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtins;
    use crate::model::{
        AdmissibleControlSet, ConstraintSpec, DynamicsModel, PointwiseConvexSet, StateFn,
        TerminalConstraint,
    };
    use crate::penalty::{EndpointMode, TerminalMode};
    use approx::assert_abs_diff_eq;

    fn constant_linearization(a: DMatrix<f64>, b: DMatrix<f64>, grid: &TimeGrid) -> LinearizationAlongTrajectory {
        LinearizationAlongTrajectory {
            a_seq: vec![a; grid.interval_count()],
            b_seq: vec![b; grid.interval_count()],
        }
    }

    #[test]
    fn gramian_of_identity_input_map() {
        let grid = TimeGrid::new(1.0, 101);
        let lin = constant_linearization(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), &grid);
        let g = controllability_gramian(&lin, &grid).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g.matrix[r][c], expect, epsilon = 1e-8);
            }
        }
        assert!(g.controllable);
    }

    #[test]
    fn gramian_of_double_integrator() {
        let grid = TimeGrid::new(1.0, 101);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let g = controllability_gramian(&constant_linearization(a, b, &grid), &grid).unwrap();
        let expect = [[1.0 / 3.0, 0.5], [0.5, 1.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(g.matrix[r][c], expect[r][c], epsilon = 1e-6);
            }
        }
        assert!(g.controllable);
        assert_eq!(g.numerical_rank, 2);
    }

    #[test]
    fn gramian_without_input_is_uncontrollable() {
        let grid = TimeGrid::new(1.0, 51);
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let g = controllability_gramian(&constant_linearization(a, b, &grid), &grid).unwrap();
        assert!(!g.controllable);
        assert_eq!(g.numerical_rank, 0);
    }

    #[test]
    fn gramian_rank_is_orthogonally_invariant() {
        let grid = TimeGrid::new(1.0, 51);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let base = controllability_gramian(&constant_linearization(a.clone(), b.clone(), &grid), &grid)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let raw = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            let q = raw.qr().q();
            let a2 = &q * &a * q.transpose();
            let b2 = &q * &b;
            let g = controllability_gramian(&constant_linearization(a2, b2, &grid), &grid).unwrap();
            assert_eq!(g.numerical_rank, base.numerical_rank);
        }
    }

    fn drift_problem_with_constraint(x0: Vec<f64>, g: Vec<StateFn>) -> Problem {
        let grid = TimeGrid::new(1.0, 41);
        Problem {
            x0,
            dynamics: builtins::dynamics("drift_integrator", &[1.0], 2, 1, &grid).unwrap(),
            cost: builtins::cost("quadratic_control", &[-1.0], 2, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
            constraints: ConstraintSpec {
                terminal: TerminalConstraint::Free,
                state_inequalities: g,
                state_equality: None,
            },
            grid,
        }
    }

    #[test]
    fn slater_margin_examples() {
        let g = vec![StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)];
        let p = drift_problem_with_constraint(vec![0.0, -0.5], g);
        let u = ControlSignal::zeros(1, &p.grid);
        assert_abs_diff_eq!(slater_margin(&p, &u, 1e-6).unwrap(), -0.5, epsilon = 1e-12);

        let g0 = vec![StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)];
        let p0 = drift_problem_with_constraint(vec![0.0, 0.0], g0);
        let u0 = ControlSignal::zeros(1, &p0.grid);
        assert_abs_diff_eq!(slater_margin(&p0, &u0, 1e-6).unwrap(), 0.0, epsilon = 1e-12);

        let two = vec![
            StateFn::affine("a", vec![0.0, 1.0], 0.3, 0.0),
            StateFn::affine("b", vec![0.0, 1.0], -0.2, 0.0),
        ];
        let p2 = drift_problem_with_constraint(vec![0.0, -0.5], two);
        let u2 = ControlSignal::zeros(1, &p2.grid);
        assert_abs_diff_eq!(slater_margin(&p2, &u2, 1e-6).unwrap(), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn slater_rejects_infeasible_reference() {
        let g = vec![StateFn::affine("x2", vec![0.0, 1.0], 0.0, 0.0)];
        let grid = TimeGrid::new(1.0, 41);
        let p = Problem {
            x0: vec![0.0, 0.0],
            dynamics: builtins::dynamics("drift_integrator", &[1.0], 2, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 2, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec {
                terminal: TerminalConstraint::Fixed(vec![1.0, 5.0]),
                state_inequalities: g,
                state_equality: None,
            },
            grid: grid.clone(),
        };
        let u = ControlSignal::zeros(1, &grid);
        assert!(matches!(
            slater_margin(&p, &u, 1e-6),
            Err(Error::NotFeasibleReference { .. })
        ));
    }

    fn planar_sum_input_problem(controls: AdmissibleControlSet) -> Problem {
        // x1dot = 0, x2dot = u1 + u2.
        let grid = TimeGrid::new(1.0, 101);
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        Problem {
            x0: vec![0.0, 0.0],
            dynamics: DynamicsModel::linear_constant(a, b, &grid),
            cost: builtins::cost("linear_control", &[-1.0, 1.0], 2, 2).unwrap(),
            controls,
            constraints: ConstraintSpec::fixed_endpoint(vec![0.0, 0.0]),
            grid,
        }
    }

    #[test]
    fn probe_flags_boundary_endpoint() {
        let p = planar_sum_input_problem(AdmissibleControlSet::PointwiseConvex(
            PointwiseConvexSet::rotated_parabola_cap(),
        ));
        let x_t = [0.0, 0.0];
        let report =
            relative_interior_probe(&p, &x_t, 64, default_flat_tolerance(&x_t)).unwrap();
        assert_eq!(report.verdict, ProbeVerdict::Boundary);
        let down = report
            .directions
            .iter()
            .find(|pd| pd.direction == vec![0.0, -1.0])
            .expect("axis directions are always probed");
        assert_abs_diff_eq!(down.gap, 0.0, epsilon = 1e-6);
        let e1 = report
            .directions
            .iter()
            .find(|pd| pd.direction == vec![1.0, 0.0])
            .unwrap();
        assert!(e1.flat);
    }

    #[test]
    fn probe_sees_relative_interior_point() {
        let p = planar_sum_input_problem(AdmissibleControlSet::PointwiseConvex(
            PointwiseConvexSet::rotated_parabola_cap(),
        ));
        let x_t = [0.0, 0.5];
        let report =
            relative_interior_probe(&p, &x_t, 64, default_flat_tolerance(&x_t)).unwrap();
        assert_eq!(report.verdict, ProbeVerdict::RelativeInterior);
    }

    #[test]
    fn probe_singleton_reachable_set() {
        let p = planar_sum_input_problem(AdmissibleControlSet::PointwiseBox {
            lo: vec![0.0, 0.0],
            hi: vec![0.0, 0.0],
        });
        let x_t = [0.0, 0.0];
        let report =
            relative_interior_probe(&p, &x_t, 64, default_flat_tolerance(&x_t)).unwrap();
        assert_eq!(report.verdict, ProbeVerdict::RelativeInterior);
        assert!(report.directions.iter().all(|d| d.flat));
    }

    #[test]
    fn probe_gaps_grow_with_the_control_set() {
        let grid = TimeGrid::new(1.0, 51);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let make = |half: f64| Problem {
            x0: vec![0.0, 0.0],
            dynamics: DynamicsModel::linear_constant(a.clone(), b.clone(), &grid),
            cost: builtins::cost("zero", &[], 2, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-half], hi: vec![half] },
            constraints: ConstraintSpec::fixed_endpoint(vec![0.0, 0.0]),
            grid: grid.clone(),
        };
        let small = relative_interior_probe(&make(1.0), &[0.0, 0.0], 32, 1e-8).unwrap();
        let large = relative_interior_probe(&make(2.0), &[0.0, 0.0], 32, 1e-8).unwrap();
        for (s, l) in small.directions.iter().zip(&large.directions) {
            assert!(l.gap >= s.gap - 1e-12);
        }
    }

    #[test]
    fn probe_requires_linear_dynamics_and_support() {
        let grid = TimeGrid::new(1.0, 11);
        let nonlinear = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("x_plus_u_squared", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
            constraints: ConstraintSpec::free(),
            grid: grid.clone(),
        };
        assert!(matches!(
            relative_interior_probe(&nonlinear, &[0.0], 8, 1e-8),
            Err(Error::UnsupportedDynamics)
        ));
        let no_oracle = Problem {
            x0: vec![0.0],
            dynamics: DynamicsModel::linear_constant(
                DMatrix::zeros(1, 1),
                DMatrix::identity(1, 1),
                &grid,
            ),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::GlobalL2Ball { radius: 1.0 },
            constraints: ConstraintSpec::free(),
            grid,
        };
        assert!(matches!(
            relative_interior_probe(&no_oracle, &[0.0], 8, 1e-8),
            Err(Error::MissingSupportOracle)
        ));
    }

    #[test]
    fn mfcq_single_active_inequality() {
        let ineq = vec![EndpointFn::affine("x1", vec![1.0, 0.0], 0.0)];
        let report = mfcq_check(&ineq, &[], &[0.0, 0.0], 1e-6);
        assert!(report.holds);
        let h = report.direction.unwrap();
        assert_abs_diff_eq!(h[0], -1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(report.margin.unwrap(), -1.0, epsilon = 1e-4);
    }

    #[test]
    fn mfcq_dependent_equalities_fail() {
        let eq = vec![
            EndpointFn::affine("a", vec![1.0, 0.0], 0.0),
            EndpointFn::affine("b", vec![2.0, 0.0], 0.0),
        ];
        let report = mfcq_check(&[], &eq, &[0.0, 0.0], 1e-6);
        assert!(!report.holds);
    }

    #[test]
    fn mfcq_opposing_gradients_fail() {
        let ineq = vec![
            EndpointFn::affine("plus", vec![1.0, 0.0], 0.0),
            EndpointFn::affine("minus", vec![-1.0, 0.0], 0.0),
        ];
        let report = mfcq_check(&ineq, &[], &[0.0, 0.0], 1e-6);
        assert!(!report.holds);
        assert!(report.margin.unwrap() >= -1e-6);
    }

    #[test]
    fn mfcq_no_active_inequalities_holds() {
        let ineq = vec![EndpointFn::affine("slack", vec![1.0, 0.0], -5.0)];
        let report = mfcq_check(&ineq, &[], &[0.0, 0.0], 1e-6);
        assert!(report.holds);
        assert!(report.margin.is_none());
    }

    #[test]
    fn descent_rate_positive_under_slater() {
        // Linear convex problem with Slater margin 0.5; sampled rates obey
        // a >= |eta| / C where C bounds the sample-to-reference distance.
        let grid = TimeGrid::new(1.0, 41);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
            constraints: ConstraintSpec {
                terminal: TerminalConstraint::Free,
                state_inequalities: vec![StateFn::affine("cap", vec![1.0], -0.5, 0.0)],
                state_equality: None,
            },
            grid: grid.clone(),
        };
        let config = PenaltyConfig::new(
            TerminalMode::None,
            EndpointMode::None,
            StateMode::Sup,
            1.0,
        );
        let reference = ControlSignal::constant(&[-0.3], &grid);
        let samples = vec![
            DescentSample::toward_reference(ControlSignal::constant(&[1.0], &grid)),
            DescentSample::toward_reference(ControlSignal::constant(&[0.8], &grid)),
        ];
        let a = descent_rate_estimate(&p, &config, &samples, &reference, 1e-3, 1e-6).unwrap();
        assert!(a > 0.0);
        // Reference margin |eta| = 0.5 at t = 0; sample diameter <= 2.6.
        assert!(a >= 0.5 / 2.6 - 1e-6, "a = {a}");
    }

    #[test]
    fn descent_rate_needs_feasible_reference() {
        let grid = TimeGrid::new(1.0, 21);
        let p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::Unconstrained,
            constraints: ConstraintSpec::fixed_endpoint(vec![5.0]),
            grid: grid.clone(),
        };
        let config = PenaltyConfig::for_problem(&p, 1.0);
        let bad_reference = ControlSignal::zeros(1, &grid);
        let samples = vec![DescentSample::toward_reference(ControlSignal::constant(&[1.0], &grid))];
        assert!(matches!(
            descent_rate_estimate(&p, &config, &samples, &bad_reference, 1e-3, 1e-6),
            Err(Error::NotFeasibleReference { .. })
        ));
    }

    #[test]
    fn lipschitz_estimate_examples() {
        let grid = TimeGrid::new(1.0, 101);
        let mut p = Problem {
            x0: vec![0.0],
            dynamics: builtins::dynamics("integrator", &[], 1, 1, &grid).unwrap(),
            cost: builtins::cost("zero", &[], 1, 1).unwrap(),
            controls: AdmissibleControlSet::PointwiseBox { lo: vec![-1.0], hi: vec![1.0] },
            constraints: ConstraintSpec::free(),
            grid: grid.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        // Eight random sign patterns at eight scales each: scaled copies of
        // a fast-alternating pattern give cost differences about twice the
        // control distance while the trajectories barely move.
        let mut samples = Vec::new();
        for _ in 0..8 {
            let pattern: Vec<f64> = (0..grid.interval_count())
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            for s in [1.0, 0.95, 0.9, 0.85, -1.0, -0.95, -0.9, -0.85] {
                let values: Vec<Vec<f64>> = pattern.iter().map(|v| vec![s * v]).collect();
                samples.push(ControlSignal::new(values, 1));
            }
        }
        let zero = lipschitz_estimate(&p, &samples, 4000).unwrap();
        assert_eq!(zero, 0.0);

        p.cost = builtins::cost("quadratic_control", &[1.0], 1, 1).unwrap();
        let l = lipschitz_estimate(&p, &samples, 4000).unwrap();
        assert!((1.5..=2.0).contains(&l), "L = {l}");

        // Constant integrand: the cost never varies.
        p.cost = crate::model::CostModel::from_parts(
            "one".into(),
            Box::new(|_, _, _| 1.0),
            Box::new(|_, _, _| vec![0.0]),
            Box::new(|_, _, _| vec![0.0]),
            None,
            None,
        );
        let flat = lipschitz_estimate(&p, &samples, 4000).unwrap();
        assert_abs_diff_eq!(flat, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lambda_star_bound_examples() {
        assert_eq!(lambda_star_bound(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(lambda_star_bound(0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(lambda_star_bound(1.0, 0.0), Err(Error::NonPositiveRate { .. })));
    }

    #[test]
    fn diagnostics_json_shape() {
        let diag = ExactnessDiagnostics {
            slater_margin: Some(-0.25),
            lipschitz_estimate: Some(2.0),
            descent_rate: Some(1.0),
            ..Default::default()
        }
        .finalize();
        assert_eq!(diag.lambda_star_bound, Some(2.0));
        let mut buf = Vec::new();
        write_diagnostics_json(&diag, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"slater_margin\": -0.25"));
        assert!(text.contains("\"lambda_star_bound\": 2.0"));
    }
}
