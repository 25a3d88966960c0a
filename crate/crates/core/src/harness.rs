//! Closed-loop simulation, controller handles and the controller comparison
//! table.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::criteria::{
    avg_cost_index, avg_cost_terms, quadratic_index, surrogate_index, tail_converged, StageContext,
};
use crate::error::{Error, Result};
use crate::matnum::{norm_inf, vec_sub};
use crate::plant::{from_deviation, LinearSystem, SteadyState};
use crate::scalar_dp::closed_form_policy;

pub const DEFAULT_MIN_STEPS: usize = 20;
pub const DEFAULT_MAX_STEPS: usize = 10_000;

type ControlMap = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// A named state-feedback law `x ↦ u`.
#[derive(Clone)]
pub struct Controller {
    name: String,
    map: Arc<ControlMap>,
}

impl fmt::Debug for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Controller").field("name", &self.name).finish()
    }
}

impl Controller {
    pub fn new<F>(name: impl Into<String>, map: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            map: Arc::new(map),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.map)(x)
    }
}

/// Constant input, mostly useful in tests.
pub fn constant_controller(u: Vec<f64>) -> Controller {
    Controller::new("constant", move |_: &[f64]| Ok(u.clone()))
}

/// Closed-loop samples: `T + 1` states and outputs, `T` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl Trajectory {
    fn start(sys: &LinearSystem, x0: &[f64]) -> Result<Self> {
        Ok(Self {
            states: vec![x0.to_vec()],
            inputs: Vec::new(),
            outputs: vec![sys.output(x0)?],
        })
    }

    /// Number of inputs applied.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    fn advance(&mut self, sys: &LinearSystem, ctrl: &Controller) -> Result<()> {
        let k = self.inputs.len();
        let x = self.states.last().expect("trajectory has a state");
        let u = ctrl.control(x)?;
        if u.len() != sys.m() {
            return Err(Error::DimensionMismatch(format!(
                "controller '{}' returned {} inputs, expected {}",
                ctrl.name(),
                u.len(),
                sys.m()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        let next = sys.step(x, &u)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        self.outputs.push(sys.output(&next)?);
        self.states.push(next);
        self.inputs.push(u);
        Ok(())
    }
}

/// Simulates exactly `steps` steps of `x⁺ = A x + B ctrl(x)`.
pub fn rollout(sys: &LinearSystem, ctrl: &Controller, x0: &[f64], steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one step".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            sys.n()
        )));
    }
    let mut traj = Trajectory::start(sys, x0)?;
    for _ in 0..steps {
        traj.advance(sys, ctrl)?;
    }
    Ok(traj)
}

/// Simulation length policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Fixed(usize),
    /// Extend until the last quarter of the average-cost terms is below the
    /// tail fraction of the total, but at least `min_steps` and at most
    /// `max_steps`.
    Adaptive { min_steps: usize, max_steps: usize },
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Adaptive {
            min_steps: DEFAULT_MIN_STEPS,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Rolls out under `horizon`; returns the trajectory and whether the
/// average-cost partial sum passed the tail rule.
pub fn rollout_with_horizon(
    ctx: &StageContext,
    ctrl: &Controller,
    x0: &[f64],
    horizon: Horizon,
) -> Result<(Trajectory, bool)> {
    let sys = &ctx.problem.system;
    match horizon {
        Horizon::Fixed(steps) => {
            let traj = rollout(sys, ctrl, x0, steps)?;
            let converged = tail_converged(&avg_cost_terms(ctx, &traj));
            Ok((traj, converged))
        }
        Horizon::Adaptive { min_steps, max_steps } => {
            let min_steps = min_steps.max(4);
            if max_steps < min_steps {
                return Err(Error::InvalidArgument(format!(
                    "max_steps {max_steps} below min_steps {min_steps}"
                )));
            }
            let mut traj = rollout(sys, ctrl, x0, min_steps)?;
            let mut terms = avg_cost_terms(ctx, &traj);
            loop {
                if tail_converged(&terms) {
                    return Ok((traj, true));
                }
                if traj.steps() >= max_steps {
                    return Ok((traj, false));
                }
                traj.advance(sys, ctrl)?;
                let k = traj.steps() - 1;
                let term = (crate::criteria::stage_cost(ctx, &traj.states[k], &traj.inputs[k])
                    - ctx.ss.c_ss)
                    .abs();
                terms.push(term);
            }
        }
    }
}

/// `(settling step, final output error)`: the first `k` after which
/// `‖y_j − r_ss‖∞ ≤ tol` for every remaining sample.
pub fn convergence_metrics(traj: &Trajectory, r_ss: &[f64], tol: f64) -> (Option<usize>, f64) {
    let errors: Vec<f64> = traj
        .outputs
        .iter()
        .map(|y| norm_inf(&vec_sub(y, r_ss)))
        .collect();
    let final_error = *errors.last().expect("trajectory has an output");
    let settling = match errors.iter().rposition(|&e| !(e <= tol)) {
        None => Some(0),
        Some(last_bad) if last_bad + 1 < errors.len() => Some(last_bad + 1),
        Some(_) => None,
    };
    (settling, final_error)
}

/// The piecewise scalar policy in original coordinates:
/// `x ↦ closed_form_policy(x − x_ss) + u_ss`.
pub fn exact_scalar_controller(ss: &SteadyState) -> Result<Controller> {
    if ss.x_ss.len() != 1 || ss.u_ss.len() != 1 {
        return Err(Error::DimensionMismatch(
            "the piecewise policy needs a scalar problem".into(),
        ));
    }
    let ss = ss.clone();
    Ok(Controller::new("Exact scalar", move |x: &[f64]| {
        let u_dev = closed_form_policy(x[0] - ss.x_ss[0]);
        Ok(from_deviation(&[u_dev], &ss))
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub avg_index: f64,
    pub surrogate_index: f64,
    pub quadratic_index: f64,
    /// Tail rule satisfied by the average-cost partial sum.
    pub converged: bool,
    pub steps: usize,
    /// Step at which the rollout blew up; the indices are `+∞` then.
    pub diverged_at: Option<usize>,
}

/// Evaluates each controller from `x0`; rows keep the input order.
pub fn benchmark_table(
    ctx: &StageContext,
    controllers: &[Controller],
    x0: &[f64],
    horizon: Horizon,
) -> Result<Vec<BenchmarkRow>> {
    if controllers.is_empty() {
        return Err(Error::InvalidArgument("no controllers to compare".into()));
    }
    controllers
        .par_iter()
        .map(|ctrl| match rollout_with_horizon(ctx, ctrl, x0, horizon) {
            Ok((traj, converged)) => Ok(BenchmarkRow {
                method: ctrl.name().to_string(),
                avg_index: avg_cost_index(ctx, &traj),
                surrogate_index: surrogate_index(ctx, &traj),
                quadratic_index: quadratic_index(ctx, &traj),
                converged,
                steps: traj.steps(),
                diverged_at: None,
            }),
            Err(Error::NonFinite { step }) => Ok(BenchmarkRow {
                method: ctrl.name().to_string(),
                avg_index: f64::INFINITY,
                surrogate_index: f64::INFINITY,
                quadratic_index: f64::INFINITY,
                converged: false,
                steps: step,
                diverged_at: Some(step),
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Shortest round-trip-exact rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Columns `k, x0.., u0.., y0..`; the final row has empty input fields.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> std::io::Result<()> {
    let n = traj.states[0].len();
    let m = traj.inputs.first().map_or(0, Vec::len);
    let p = traj.outputs[0].len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..p).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, (x, y)) in traj.states.iter().zip(&traj.outputs).enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(x.iter().map(|&v| fmt_f64(v)));
        match traj.inputs.get(k) {
            Some(u) => rec.extend(u.iter().map(|&v| fmt_f64(v))),
            None => rec.extend(std::iter::repeat(String::new()).take(m)),
        }
        rec.extend(y.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
}

/// Columns `method, avg_index, surrogate_index, quadratic_index, converged`.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "avg_index", "surrogate_index", "quadratic_index", "converged"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.method.clone(),
            fmt_f64(row.avg_index),
            fmt_f64(row.surrogate_index),
            fmt_f64(row.quadratic_index),
            row.converged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matnum::Matrix;
    use crate::plant::{LinearTermConvention, TrackingProblem};
    use crate::riccati::lqr_tracking_controller;

    fn scalar_ctx() -> StageContext {
        let prob = TrackingProblem::new(
            LinearSystem::scalar(2.0, 1.0, 1.0).unwrap(),
            Matrix::identity(1),
            Matrix::identity(1),
            vec![1.0],
        )
        .unwrap();
        StageContext::new(prob, LinearTermConvention::PaperLinearTerms).unwrap()
    }

    fn deadbeat(ss: &SteadyState) -> Controller {
        let ss = ss.clone();
        Controller::new("deadbeat", move |x: &[f64]| Ok(vec![-2.0 * (x[0] - ss.x_ss[0]) + ss.u_ss[0]]))
    }

    #[test]
    fn deadbeat_rollout() {
        let ctx = scalar_ctx();
        let traj = rollout(&ctx.problem.system, &deadbeat(&ctx.ss), &[1.4], 3).unwrap();
        let dev: Vec<f64> = traj.states.iter().map(|x| x[0] - 1.0).collect();
        assert!((dev[0] - 0.4).abs() < 1e-15);
        assert!(dev[1..].iter().all(|d| d.abs() < 1e-15));
        assert_eq!(traj.steps(), 3);
        assert_eq!(traj.outputs.len(), 4);
    }

    #[test]
    fn steady_rollout_is_constant() {
        let ctx = scalar_ctx();
        let traj = rollout(&ctx.problem.system, &constant_controller(vec![-1.0]), &[1.0], 5).unwrap();
        assert!(traj.states.iter().all(|x| x == &vec![1.0]));
        assert!(rollout(&ctx.problem.system, &constant_controller(vec![-1.0]), &[1.0], 0).is_err());
    }

    #[test]
    fn lqr_rollout_decays_geometrically() {
        let ctx = scalar_ctx();
        let k = Matrix::scalar(1.618).unwrap();
        let ctrl = lqr_tracking_controller(&ctx.problem.system, &k, &ctx.ss).unwrap();
        let traj = rollout(&ctx.problem.system, &ctrl, &[12.0], 15).unwrap();
        for (i, x) in traj.states.iter().enumerate() {
            let expected = 11.0 * 0.382f64.powi(i as i32);
            assert!((x[0] - 1.0 - expected).abs() < 1e-6);
        }
        let (settle, final_err) = convergence_metrics(&traj, &[1.0], 1e-3);
        assert_eq!(settle, Some(10));
        assert!(final_err < 1e-3);
    }

    #[test]
    fn divergence_is_reported() {
        let ctx = scalar_ctx();
        let r = rollout(&ctx.problem.system, &constant_controller(vec![0.0]), &[1.0], 2000);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn settling_edge_cases() {
        let ctx = scalar_ctx();
        let steady = rollout(&ctx.problem.system, &constant_controller(vec![-1.0]), &[1.0], 4).unwrap();
        assert_eq!(convergence_metrics(&steady, &[1.0], 1e-9), (Some(0), 0.0));
        let growing = rollout(&ctx.problem.system, &constant_controller(vec![0.0]), &[1.0], 4).unwrap();
        assert_eq!(convergence_metrics(&growing, &[1.0], 1e-3).0, None);
    }

    #[test]
    fn exact_scalar_controller_values() {
        let ctx = scalar_ctx();
        let ctrl = exact_scalar_controller(&ctx.ss).unwrap();
        assert_eq!(ctrl.control(&[1.0]).unwrap(), vec![-1.0]);
        assert!((ctrl.control(&[12.0]).unwrap()[0] + 19.088).abs() < 1e-2);
        assert!((ctrl.control(&[1.4]).unwrap()[0] - (-0.8 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn benchmark_marks_diverged_rows() {
        let ctx = scalar_ctx();
        let rows = benchmark_table(
            &ctx,
            &[deadbeat(&ctx.ss), constant_controller(vec![0.0])],
            &[12.0],
            Horizon::Fixed(2000),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "deadbeat");
        assert!(rows[0].converged);
        assert!(rows[1].diverged_at.is_some());
        assert_eq!(rows[1].avg_index, f64::INFINITY);
        assert!(benchmark_table(&ctx, &[], &[12.0], Horizon::Fixed(5)).is_err());
    }

    #[test]
    fn steady_start_gives_zero_indices() {
        let ctx = scalar_ctx();
        let rows = benchmark_table(&ctx, &[deadbeat(&ctx.ss)], &[1.0], Horizon::default()).unwrap();
        assert_eq!(rows[0].avg_index, 0.0);
        assert_eq!(rows[0].surrogate_index, 0.0);
        assert_eq!(rows[0].quadratic_index, 0.0);
        assert!(rows[0].converged);
    }

    #[test]
    fn csv_layout() {
        let ctx = scalar_ctx();
        let traj = rollout(&ctx.problem.system, &deadbeat(&ctx.ss), &[1.5], 2).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x0,u0,y0");
        assert_eq!(lines[1], "0,1.5000000000000000e0,-2.0000000000000000e0,1.5000000000000000e0");
        assert!(lines[3].starts_with("2,") && lines[3].contains(",,"));
        let parsed: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, 1.5);
    }
}
