//! Command-line front end: load problems (JSON files or built-in
//! examples), solve penalized problems, run lambda sweeps, emit
//! diagnostics, and reproduce the example corpus.

use clap::{Args, Parser, Subcommand};
use ocexact::corpus::{self, VerifyOptions};
use ocexact::diagnostics::{self, DescentSample, ExactnessDiagnostics};
use ocexact::model::{file as problem_file, ControlSignal, Problem, TerminalConstraint};
use ocexact::penalty::{PenaltyConfig, StateMode};
use ocexact::simulate;
use ocexact::solver::{self, SolveOptions, SweepOptions};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ocexact",
    about = "Exact-penalty toolkit for constrained optimal control",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Penalty parameter lambda.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Override the grid node count.
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    /// Use an L^p state penalty with this exponent instead of the sup norm.
    #[arg(long)]
    p: Option<f64>,
    /// Initial smoothing width for the solver.
    #[arg(long = "eps0", default_value_t = 1e-2)]
    eps0: f64,
    /// Feasibility tolerance.
    #[arg(long = "tol-feas", default_value_t = 1e-6)]
    tol_feas: f64,
    /// Random seed for solver restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV/JSON reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the penalized objective for a problem file or example.
    Solve {
        /// Problem file path, or `example:NAME`.
        source: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a lambda-continuation sweep and classify exactness.
    Sweep {
        source: String,
        /// Geometric lambda grid `start:end:factor` (e.g. `0.5:8:2`).
        #[arg(long = "lambda-grid")]
        lambda_grid: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compute exactness diagnostics and write them as JSON.
    Diagnose {
        source: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Re-run corpus entries against their stored expectations.
    Reproduce {
        /// Entry name; omitted = the whole corpus.
        name: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// List the names of the built-in examples.
    ListExamples,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

enum Source {
    File(Problem, String),
    Example(corpus::CorpusEntry),
}

fn load_source(source: &str, grid_n: Option<usize>) -> Result<Source, String> {
    if let Some(name) = source.strip_prefix("example:") {
        let entry = corpus::build_example(name, grid_n).map_err(|e| e.to_string())?;
        return Ok(Source::Example(entry));
    }
    let path = Path::new(source);
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read problem file `{source}`: {e}"))?;
    let mut problem = problem_file::parse_problem(&text).map_err(|e| e.to_string())?;
    if let Some(n) = grid_n {
        problem = regrid(problem, n)?;
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".to_string());
    Ok(Source::File(problem, stem))
}

/// Rebuild a problem on a different grid (linear coefficient samples are
/// re-interpolated).
fn regrid(problem: Problem, n: usize) -> Result<Problem, String> {
    use ocexact::model::DynamicsModel;
    let grid = ocexact::TimeGrid::new(problem.grid.horizon(), n);
    let dynamics = match problem.dynamics.linear_coefficients() {
        Some(_) => {
            let sample = |k: usize| {
                let t = grid.node_time(k);
                let a = problem.dynamics.jac_x(&vec![0.0; problem.state_dim()], &vec![0.0; problem.control_dim()], t);
                let b = problem.dynamics.jac_u(&vec![0.0; problem.state_dim()], &vec![0.0; problem.control_dim()], t);
                (a.expect("linear"), b.expect("linear"))
            };
            let (a_nodes, b_nodes): (Vec<_>, Vec<_>) = (0..n).map(sample).unzip();
            DynamicsModel::linear(a_nodes, b_nodes, &grid)
        }
        None => match &problem.dynamics.kind {
            ocexact::model::DynamicsKind::Builtin { name, params } => {
                ocexact::model::builtins::dynamics(
                    name,
                    params,
                    problem.state_dim(),
                    problem.control_dim(),
                    &grid,
                )
                .map_err(|e| e.to_string())?
            }
            ocexact::model::DynamicsKind::Linear { .. } => unreachable!(),
        },
    };
    Ok(Problem { grid, dynamics, ..problem })
}

fn config_for(problem: &Problem, common: &CommonOpts) -> PenaltyConfig {
    let mut config = PenaltyConfig::for_problem(problem, common.lambda);
    if let Some(p) = common.p {
        if problem.constraints.has_state_constraints() {
            config.state = StateMode::Lp(p);
        }
    }
    config.epsilon = common.eps0;
    config
}

fn solve_options(common: &CommonOpts) -> SolveOptions {
    SolveOptions {
        tol_feas: common.tol_feas,
        eps_init: common.eps0,
        seed: common.seed,
        ..Default::default()
    }
}

fn parse_lambda_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("lambda grid `{spec}` must be start:end:factor"));
    }
    let start: f64 = parts[0].parse().map_err(|_| "bad grid start".to_string())?;
    let end: f64 = parts[1].parse().map_err(|_| "bad grid end".to_string())?;
    let factor: f64 = parts[2].parse().map_err(|_| "bad grid factor".to_string())?;
    if start <= 0.0 || end < start || factor <= 1.0 {
        return Err("lambda grid needs 0 < start <= end and factor > 1".to_string());
    }
    let mut grid = vec![start];
    let mut v = start;
    while v * factor <= end * (1.0 + 1e-12) {
        v *= factor;
        grid.push(v);
    }
    Ok(grid)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create `{}`: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("cannot write `{}`: {e}", path.display()))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::ListExamples => {
            for name in corpus::list_examples() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { source, common } => {
            let (problem, config, stem, init) = match load_source(&source, common.grid_n)? {
                Source::File(problem, stem) => {
                    let config = config_for(&problem, &common);
                    let init = ControlSignal::zeros(problem.control_dim(), &problem.grid);
                    (problem, config, stem, init)
                }
                Source::Example(entry) => {
                    let config = entry.config.with_lambda(common.lambda);
                    let init = entry.feasible_reference.clone();
                    (entry.problem, config, entry.name.to_string(), init)
                }
            };
            let report = solver::minimize_penalized(&problem, &config, &init, &solve_options(&common))
                .map_err(|e| e.to_string())?;
            let trajectory = simulate::rollout(&problem, &report.control).map_err(|e| e.to_string())?;
            let mut csv = Vec::new();
            simulate::write_trajectory_csv(&problem, &trajectory, &report.control, &mut csv)
                .map_err(|e| e.to_string())?;
            let path = write_file(&common.out, &format!("{stem}-trajectory.csv"), &csv)?;
            println!(
                "Phi = {}  I = {}  residuals (terminal {}, state {}, control {})",
                report.breakdown.total,
                report.breakdown.cost,
                report.residuals.terminal,
                report.residuals.state,
                report.residuals.control
            );
            println!(
                "iterations = {}  termination = {}  trajectory -> {}",
                report.iterations,
                report.termination,
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { source, lambda_grid, common } => {
            let (problem, config, stem, grid, reference, guess) =
                match load_source(&source, common.grid_n)? {
                    Source::File(problem, stem) => {
                        let spec = lambda_grid
                            .ok_or_else(|| "sweep on a problem file needs --lambda-grid".to_string())?;
                        let grid = parse_lambda_grid(&spec)?;
                        let config = config_for(&problem, &common);
                        (problem, config, stem, grid, None, None)
                    }
                    Source::Example(entry) => {
                        let grid = match lambda_grid {
                            Some(spec) => parse_lambda_grid(&spec)?,
                            None => entry.sweep_grid.clone(),
                        };
                        (
                            entry.problem,
                            entry.config,
                            entry.name.to_string(),
                            grid,
                            Some(entry.feasible_reference),
                            entry.sweep_initial_guess,
                        )
                    }
                };
            let options = SweepOptions { solve: solve_options(&common), feasible_reference: reference };
            let report =
                solver::lambda_sweep_with_guess(&problem, &config, &grid, &options, guess.as_ref());
            let mut csv = Vec::new();
            solver::write_sweep_csv(&report, &mut csv).map_err(|e| e.to_string())?;
            let path = write_file(&common.out, &format!("{stem}-sweep.csv"), &csv)?;
            for r in &report.records {
                println!(
                    "lambda {:10}  Phi {:14.6e}  residual {:10.3e}  converged {}",
                    r.lambda,
                    r.phi,
                    r.residuals.max(),
                    r.converged
                );
            }
            println!(
                "verdict: {}  estimated lambda* = {:?}  sweep -> {}",
                report.verdict,
                report.estimated_lambda_star,
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose { source, common } => {
            let (problem, config, stem, reference) = match load_source(&source, common.grid_n)? {
                Source::File(problem, stem) => {
                    let config = config_for(&problem, &common);
                    let init = ControlSignal::zeros(problem.control_dim(), &problem.grid);
                    let solved =
                        solver::minimize_penalized(&problem, &config, &init, &solve_options(&common))
                            .map_err(|e| e.to_string())?;
                    (problem, config, stem, solved.control)
                }
                Source::Example(entry) => (
                    entry.problem,
                    entry.config.with_lambda(common.lambda),
                    entry.name.to_string(),
                    entry.feasible_reference,
                ),
            };
            let diag = assemble_diagnostics(&problem, &config, &reference, &common);
            let mut json = Vec::new();
            diagnostics::write_diagnostics_json(&diag, &mut json).map_err(|e| e.to_string())?;
            let path = write_file(&common.out, &format!("{stem}-diagnostics.json"), &json)?;
            if let Some(probe) = &diag.relative_interior {
                let mut csv = Vec::new();
                diagnostics::write_probe_gaps_csv(probe, &mut csv).map_err(|e| e.to_string())?;
                write_file(&common.out, &format!("{stem}-probe.csv"), &csv)?;
            }
            println!("diagnostics -> {}", path.display());
            if let Some(eta) = diag.slater_margin {
                println!("slater margin: {eta}");
            }
            if let Some(g) = &diag.gramian {
                println!("gramian: controllable = {}, rank = {}", g.controllable, g.numerical_rank);
            }
            if let Some(p) = &diag.relative_interior {
                println!("reachable-set probe: {:?}", p.verdict);
            }
            if let Some(b) = diag.lambda_star_bound {
                println!("lambda* bound (L/a): {b}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { name, common } => {
            let names: Vec<String> = match name {
                Some(n) => {
                    if !corpus::list_examples().contains(&n.as_str()) {
                        return Err(format!("unknown example `{n}`"));
                    }
                    vec![n]
                }
                None => corpus::list_examples().iter().map(|s| s.to_string()).collect(),
            };
            let mut all_passed = true;
            println!("{:<28} {:>8}  detail", "entry", "status");
            for entry_name in &names {
                let options = VerifyOptions {
                    grid_nodes: common.grid_n,
                    solve: solve_options(&common),
                    witnesses_only: false,
                };
                let report = corpus::verify_example(entry_name, &options).map_err(|e| e.to_string())?;
                if let Some(sweep) = &report.sweep {
                    let mut csv = Vec::new();
                    solver::write_sweep_csv(sweep, &mut csv).map_err(|e| e.to_string())?;
                    write_file(&common.out, &format!("{entry_name}-sweep.csv"), &csv)?;
                }
                let status = if report.passed { "PASS" } else { "FAIL" };
                println!("{entry_name:<28} {status:>8}");
                for check in &report.checks {
                    if !check.passed {
                        println!("    {}: {}", check.label, check.detail);
                    }
                }
                all_passed &= report.passed;
            }
            Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

/// Best-effort diagnostics for a problem around a reference control.
fn assemble_diagnostics(
    problem: &Problem,
    config: &PenaltyConfig,
    reference: &ControlSignal,
    common: &CommonOpts,
) -> ExactnessDiagnostics {
    let mut diag = ExactnessDiagnostics::default();

    if !problem.constraints.state_inequalities.is_empty() {
        diag.slater_margin = diagnostics::slater_margin(problem, reference, common.tol_feas).ok();
    }

    if let Ok(x) = simulate::rollout(problem, reference) {
        if let Ok(lin) = simulate::linearize(problem, &x, reference) {
            diag.gramian = diagnostics::controllability_gramian(&lin, &problem.grid).ok();
        }
        if let TerminalConstraint::Variable { inequalities, equalities } = &problem.constraints.terminal {
            diag.mfcq =
                Some(diagnostics::mfcq_check(inequalities, equalities, x.terminal_state(), 1e-6));
        }
    }

    if let TerminalConstraint::Fixed(x_t) = &problem.constraints.terminal {
        let count = diagnostics::default_direction_count(problem.state_dim());
        let tol = diagnostics::default_flat_tolerance(x_t);
        diag.relative_interior = diagnostics::relative_interior_probe(problem, x_t, count, tol).ok();
    }

    // Seeded sample cloud around the reference for the L and a estimates.
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed ^ 0xd1a6);
    let m = problem.control_dim();
    let mut cloud = Vec::new();
    for _ in 0..24 {
        let values: Vec<Vec<f64>> = reference
            .values
            .iter()
            .map(|u| u.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect())
            .collect();
        cloud.push(problem.controls.project(&ControlSignal::new(values, m), &problem.grid));
    }
    diag.lipschitz_estimate = diagnostics::lipschitz_estimate(problem, &cloud, 600).ok();
    let samples: Vec<DescentSample> = cloud
        .iter()
        .cloned()
        .map(DescentSample::toward_reference)
        .collect();
    diag.descent_rate = diagnostics::descent_rate_estimate(
        problem,
        config,
        &samples,
        reference,
        1e-3,
        common.tol_feas,
    )
    .ok();
    diag.finalize()
}
