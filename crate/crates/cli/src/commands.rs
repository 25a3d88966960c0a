//! Subcommand implementations. Each returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use avgtrack::criteria::{avg_cost_index, quadratic_index, surrogate_index};
use avgtrack::harness::{
    benchmark_table, convergence_metrics, exact_scalar_controller, rollout_with_horizon,
    write_benchmark_csv, write_trajectory_csv, BenchmarkRow, Controller, Horizon,
};
use avgtrack::matnum::Matrix;
use avgtrack::mpc::mpc_controller;
use avgtrack::plant::{check_controllable, check_observable, steady_state};
use avgtrack::riccati::{lqr_tracking_controller, solve_dare, DARE_MAX_ITERS, DARE_TOL};
use avgtrack::scalar_dp::{
    closed_form_policy, closed_form_value, value_iteration, BellmanStage, ControlGrid, Grid1D,
};
use avgtrack::{Error, StageContext};

use crate::problem::{load, Loaded};
use crate::{ControllerKind, Failure, StageKind, EXIT_DIVERGENCE, EXIT_OK};

/// Printed values for the scalar example from `x(0) = 12`:
/// (method, average-cost index, surrogate index, LQR cost).
pub const PUBLISHED_TABLE: [(&str, f64, f64, f64); 3] = [
    ("LQR", 420.3626, 420.3626, 319.5642),
    ("Exact scalar", 420.2428, 420.2428, 392.9962),
    ("MPC", 611.2143, 659.0715, 659.0715),
];

/// Node count below which the oracle warns about grid error.
pub const COARSE_NODES: usize = 1001;
/// Half-width of the region where the closed forms are compared.
pub const INNER_REGION: f64 = 0.45;

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = m.to_rows().iter().map(|r| fmt_vec(r)).collect();
    format!("[{}]", rows.join(", "))
}

fn context(loaded: &Loaded) -> Result<StageContext, Failure> {
    StageContext::new(loaded.problem.clone(), loaded.convention).map_err(|e| match e {
        Error::AssumptionTwoViolated | Error::DimensionMismatch(_) => {
            Failure::Assumption(format!("no steady state: {e}"))
        }
        other => Failure::Usage(other.to_string()),
    })
}

fn lqr_gain(ctx: &StageContext) -> Result<Matrix, Failure> {
    let p = &ctx.problem;
    solve_dare(&p.system, p.q(), p.r(), DARE_TOL, DARE_MAX_ITERS)
        .map(|sol| sol.k)
        .map_err(|e| Failure::Assumption(format!("no stabilizing Riccati solution: {e}")))
}

fn initial_state(loaded: &Loaded, flag: Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    let x0 = flag.or_else(|| loaded.x0.clone()).ok_or_else(|| {
        Failure::Usage("no initial state: pass --x0 or set \"x0\" in the problem file".into())
    })?;
    let n = loaded.problem.system.n();
    if x0.len() != n {
        return Err(Failure::Usage(format!("--x0 needs {n} entries, got {}", x0.len())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Usage("--x0 entries must be finite".into()));
    }
    Ok(x0)
}

fn horizon(steps: Option<usize>) -> Result<Horizon, Failure> {
    match steps {
        Some(0) => Err(Failure::Usage("--steps must be at least 1".into())),
        Some(t) => Ok(Horizon::Fixed(t)),
        None => Ok(Horizon::default()),
    }
}

fn run_error(e: Error) -> Failure {
    match e {
        Error::NonFinite { step } => Failure::Divergence(format!("closed loop diverged at step {step}")),
        Error::SolverFailure { .. } => Failure::Divergence(e.to_string()),
        other => Failure::Usage(other.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn analyze(file: &Path, out: &mut dyn Write) -> Result<u8, Failure> {
    let loaded = load(file)?;
    let prob = &loaded.problem;
    let sys = &prob.system;
    writeln!(out, "dimensions: n = {}, m = {}, p = {}", sys.n(), sys.m(), sys.p())?;
    let controllable = check_controllable(sys);
    let observable = check_observable(sys, prob.q()).unwrap_or(false);
    writeln!(out, "controllable (A, B): {}", yes(controllable))?;
    writeln!(out, "observable (A, Q^1/2 C): {}", yes(observable))?;

    let ss = steady_state(prob, loaded.convention);
    match &ss {
        Ok(ss) => {
            writeln!(out, "steady-state block invertible: yes")?;
            writeln!(out, "x_ss = {}", fmt_vec(&ss.x_ss))?;
            writeln!(out, "u_ss = {}", fmt_vec(&ss.u_ss))?;
            writeln!(out, "C_ss = {:.10}", ss.c_ss)?;
            writeln!(out, "s = {}", fmt_vec(&ss.s))?;
            writeln!(out, "r_lin = {}", fmt_vec(&ss.r_lin))?;
        }
        Err(e) => writeln!(out, "steady-state block invertible: no ({e})")?,
    }

    let dare = solve_dare(sys, prob.q(), prob.r(), DARE_TOL, DARE_MAX_ITERS);
    match &dare {
        Ok(sol) => {
            writeln!(out, "P = {}", fmt_matrix(&sol.p))?;
            writeln!(out, "K = {}", fmt_matrix(&sol.k))?;
            writeln!(out, "spectral radius of A - BK = {:.10}", sol.closed_loop_radius)?;
            writeln!(out, "Riccati iterations = {}", sol.iterations)?;
        }
        Err(e) => writeln!(out, "Riccati equation: no stabilizing solution ({e})")?,
    }

    let ok = controllable && observable && ss.is_ok() && dare.is_ok();
    writeln!(out, "assumptions: {}", if ok { "all hold" } else { "violated" })?;
    Ok(if ok { EXIT_OK } else { crate::EXIT_ASSUMPTION })
}

fn controller(kind: ControllerKind, ctx: &StageContext, loaded: &Loaded) -> Result<Controller, Failure> {
    match kind {
        ControllerKind::Lqr => {
            let k = lqr_gain(ctx)?;
            let ctrl = lqr_tracking_controller(&ctx.problem.system, &k, &ctx.ss)
                .map_err(|e| Failure::Assumption(e.to_string()))?;
            Ok(ctrl.with_name("LQR"))
        }
        ControllerKind::Mpc => {
            let k = lqr_gain(ctx)?;
            mpc_controller(ctx, &k, loaded.mpc).map_err(|e| Failure::Usage(e.to_string()))
        }
        ControllerKind::ExactScalar => {
            let sys = &ctx.problem.system;
            if !sys.is_scalar() {
                return Err(Failure::Usage(format!(
                    "exact-scalar needs a scalar problem (n = m = p = 1), got n = {}, m = {}, p = {}",
                    sys.n(),
                    sys.m(),
                    sys.p()
                )));
            }
            exact_scalar_controller(&ctx.ss).map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

pub fn simulate(
    file: &Path,
    kind: ControllerKind,
    x0: Option<Vec<f64>>,
    steps: Option<usize>,
    settle_tol: f64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, Failure> {
    let loaded = load(file)?;
    let x0 = initial_state(&loaded, x0)?;
    let horizon = horizon(steps)?;
    if !(settle_tol > 0.0) {
        return Err(Failure::Usage("--settle-tol must be positive".into()));
    }
    if kind == ControllerKind::ExactScalar && !loaded.problem.system.is_scalar() {
        return Err(Failure::Usage(format!(
            "exact-scalar needs a scalar problem, got n = {}",
            loaded.problem.system.n()
        )));
    }
    let ctx = context(&loaded)?;
    let ctrl = controller(kind, &ctx, &loaded)?;
    let (traj, converged) = rollout_with_horizon(&ctx, &ctrl, &x0, horizon).map_err(run_error)?;
    let (settle, final_error) = convergence_metrics(&traj, ctx.problem.reference(), settle_tol);

    writeln!(out, "controller: {}", ctrl.name())?;
    writeln!(
        out,
        "steps: {} ({})",
        traj.steps(),
        if converged { "tail rule met" } else { "tail rule not met" }
    )?;
    writeln!(out, "avg_index: {:.10}", avg_cost_index(&ctx, &traj))?;
    writeln!(out, "surrogate_index: {:.10}", surrogate_index(&ctx, &traj))?;
    writeln!(out, "quadratic_index: {:.10}", quadratic_index(&ctx, &traj))?;
    match settle {
        Some(k) => writeln!(out, "settling step (tol {settle_tol:e}): {k}")?,
        None => writeln!(out, "settling step (tol {settle_tol:e}): not settled")?,
    }
    writeln!(out, "final output error: {final_error:e}")?;
    if let Some(path) = csv {
        let mut w = create(path)?;
        write_trajectory_csv(&traj, &mut w)?;
        w.flush()?;
    }
    Ok(EXIT_OK)
}

fn write_table(rows: &[BenchmarkRow], published_cols: bool, out: &mut dyn Write) -> std::io::Result<()> {
    if published_cols {
        writeln!(
            out,
            "{:<16} {:>14} {:>10} {:>16} {:>10} {:>16} {:>10} {:>9} {:>6}",
            "method", "avg_index", "published", "surrogate_index", "published", "quadratic_index", "published", "converged", "steps"
        )?;
    } else {
        writeln!(
            out,
            "{:<16} {:>14} {:>16} {:>16} {:>9} {:>6}",
            "method", "avg_index", "surrogate_index", "quadratic_index", "converged", "steps"
        )?;
    }
    for row in rows {
        let flag = if row.diverged_at.is_some() { "diverged" } else { yes(row.converged) };
        let published = PUBLISHED_TABLE.iter().find(|p| p.0 == row.method);
        match (published_cols, published) {
            (true, Some(&(_, avg, sur, lqr))) => writeln!(
                out,
                "{:<16} {:>14.4} {:>10.4} {:>16.4} {:>10.4} {:>16.4} {:>10.4} {:>9} {:>6}",
                row.method, row.avg_index, avg, row.surrogate_index, sur, row.quadratic_index, lqr, flag, row.steps
            )?,
            (true, None) => writeln!(
                out,
                "{:<16} {:>14.4} {:>10} {:>16.4} {:>10} {:>16.4} {:>10} {:>9} {:>6}",
                row.method, row.avg_index, "-", row.surrogate_index, "-", row.quadratic_index, "-", flag, row.steps
            )?,
            (false, _) => writeln!(
                out,
                "{:<16} {:>14.4} {:>16.4} {:>16.4} {:>9} {:>6}",
                row.method, row.avg_index, row.surrogate_index, row.quadratic_index, flag, row.steps
            )?,
        }
    }
    if published_cols {
        writeln!(out, "published columns: reference values for x(0) = 12; the last one is labelled \"LQR cost\" at the source")?;
    }
    Ok(())
}

pub fn benchmark(
    file: &Path,
    x0: Option<Vec<f64>>,
    steps: Option<usize>,
    csv: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, Failure> {
    let loaded = load(file)?;
    let x0 = initial_state(&loaded, x0)?;
    let horizon = horizon(steps)?;
    let ctx = context(&loaded)?;
    let mut controllers = vec![controller(ControllerKind::Lqr, &ctx, &loaded)?];
    if ctx.problem.system.is_scalar() {
        controllers.push(controller(ControllerKind::ExactScalar, &ctx, &loaded)?);
    } else {
        writeln!(err, "note: exact-scalar controller skipped (problem is not scalar)")?;
    }
    controllers.push(controller(ControllerKind::Mpc, &ctx, &loaded)?);

    let rows = benchmark_table(&ctx, &controllers, &x0, horizon).map_err(run_error)?;
    let published_cols = loaded.bundled_scalar && x0 == [12.0];
    write_table(&rows, published_cols, out)?;
    if let Some(path) = csv {
        let mut w = create(path)?;
        write_benchmark_csv(&rows, &mut w)?;
        w.flush()?;
    }
    if let Some(row) = rows.iter().find(|r| r.diverged_at.is_some()) {
        writeln!(err, "error: {} diverged at step {}", row.method, row.diverged_at.unwrap_or(0))?;
        return Ok(EXIT_DIVERGENCE);
    }
    Ok(EXIT_OK)
}

pub struct OracleArgs {
    pub grid: (f64, f64, usize),
    pub controls: (f64, f64, usize),
    pub stage: StageKind,
    pub tol: f64,
    pub max_sweeps: usize,
}

pub fn oracle(
    file: &Path,
    args: &OracleArgs,
    csv: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, Failure> {
    let loaded = load(file)?;
    let sys = &loaded.problem.system;
    if !sys.is_scalar() {
        return Err(Failure::Usage(format!(
            "oracle needs a scalar problem (n = m = p = 1), got n = {}, m = {}, p = {}",
            sys.n(),
            sys.m(),
            sys.p()
        )));
    }
    let grid = Grid1D::new(args.grid.0, args.grid.1, args.grid.2).map_err(|e| Failure::Usage(e.to_string()))?;
    let controls = ControlGrid::new(args.controls.0, args.controls.1, args.controls.2)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if !(args.tol > 0.0) || args.max_sweeps == 0 {
        return Err(Failure::Usage("--tol and --max-sweeps must be positive".into()));
    }
    if grid.len() < COARSE_NODES {
        writeln!(
            err,
            "warning: coarse grid ({} nodes, spacing {}); grid error may exceed the 2e-2 comparison tolerance",
            grid.len(),
            grid.spacing()
        )?;
    }
    let stage = match args.stage {
        StageKind::Surrogate => BellmanStage::Surrogate,
        StageKind::Absolute => BellmanStage::AbsoluteDeviation,
    };
    let ctx = context(&loaded)?;
    let table = value_iteration(&ctx, &grid, &controls, stage, args.tol, args.max_sweeps).map_err(|e| match e {
        Error::NoConvergence { .. } => Failure::Divergence(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    writeln!(out, "sweeps: {}", table.sweeps)?;
    writeln!(out, "final sweep change: {:e}", table.residual)?;
    writeln!(out, "V(0) = {:.10}", table.value_at(0.0))?;

    if loaded.bundled_scalar && stage == BellmanStage::Surrogate {
        let (mut v_gap, mut u_gap) = (0.0f64, 0.0f64);
        for i in 0..grid.len() {
            let x = grid.node(i);
            if x.abs() <= INNER_REGION + 1e-12 {
                v_gap = v_gap.max((table.values[i] - closed_form_value(x)).abs());
                u_gap = u_gap.max((table.policy[i] - closed_form_policy(x)).abs());
            }
        }
        writeln!(out, "max |V - closed form| on |x| <= {INNER_REGION}: {v_gap:e}")?;
        writeln!(out, "max |policy - closed form| on |x| <= {INNER_REGION}: {u_gap:e}")?;
        writeln!(out, "control grid spacing: {:e}", controls.spacing())?;
    }
    if let Some(path) = csv {
        let mut w = create(path)?;
        table.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(EXIT_OK)
}
