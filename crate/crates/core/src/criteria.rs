//! Cost functionals: stage cost, signed stage deviation, the average-cost
//! index, its quadratic-plus-absolute-value surrogate, and the plain
//! quadratic index.
//!
//! The infinite sums are evaluated as partial sums over a finite
//! [`Trajectory`]; [`tail_converged`] tells whether the truncation is
//! negligible.

use crate::error::{Error, Result};
use crate::harness::Trajectory;
use crate::matnum::{dot, vec_sub};
use crate::plant::{steady_state, LinearTermConvention, SteadyState, TrackingProblem};

/// Fraction of the total a trajectory's last quarter may contribute before
/// the partial sum counts as truncated.
pub const TAIL_FRACTION: f64 = 1e-6;

/// A problem together with the steady state computed from it.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub problem: TrackingProblem,
    pub ss: SteadyState,
}

impl StageContext {
    pub fn new(problem: TrackingProblem, convention: LinearTermConvention) -> Result<Self> {
        let ss = steady_state(&problem, convention)?;
        Ok(Self { problem, ss })
    }

    /// Pairs a problem with an externally supplied steady state, e.g. one
    /// whose linear terms were overridden.
    pub fn with_steady_state(problem: TrackingProblem, ss: SteadyState) -> Result<Self> {
        let sys = &problem.system;
        if ss.x_ss.len() != sys.n()
            || ss.s.len() != sys.n()
            || ss.u_ss.len() != sys.m()
            || ss.r_lin.len() != sys.m()
        {
            return Err(Error::DimensionMismatch(
                "steady state does not match the problem dimensions".into(),
            ));
        }
        Ok(Self { problem, ss })
    }

    pub fn n(&self) -> usize {
        self.problem.system.n()
    }

    pub fn m(&self) -> usize {
        self.problem.system.m()
    }

    fn quad(&self, x: &[f64], u: &[f64]) -> f64 {
        let wx = self.problem.state_weight().quad_form(x).expect("state dimension");
        let ru = self.problem.r().quad_form(u).expect("input dimension");
        wx + ru
    }

    fn lin(&self, x_dev: &[f64], u_dev: &[f64]) -> f64 {
        dot(&self.ss.s, x_dev) + dot(&self.ss.r_lin, u_dev)
    }
}

/// `C(x, u) = xᵀCᵀQC x + uᵀR u`, the summand whose deviation from `C_ss`
/// the average-cost index charges.
pub fn stage_cost(ctx: &StageContext, x: &[f64], u: &[f64]) -> f64 {
    ctx.quad(x, u)
}

/// `eᵀQe + uᵀRu` with `e = Cx − r_ss`.
pub fn tracking_error_cost(ctx: &StageContext, x: &[f64], u: &[f64]) -> f64 {
    let p = &ctx.problem;
    let e = vec_sub(&p.system.output(x).expect("state dimension"), p.reference());
    p.q().quad_form(&e).expect("output dimension") + p.r().quad_form(u).expect("input dimension")
}

/// Signed `φ = x̃ᵀCᵀQC x̃ + ũᵀRũ + sᵀx̃ + r_linᵀũ`.
pub fn stage_deviation(ctx: &StageContext, x_dev: &[f64], u_dev: &[f64]) -> f64 {
    ctx.quad(x_dev, u_dev) + ctx.lin(x_dev, u_dev)
}

/// `x̃ᵀCᵀQC x̃ + ũᵀRũ + |sᵀx̃ + r_linᵀũ|`.
pub fn surrogate_stage(ctx: &StageContext, x_dev: &[f64], u_dev: &[f64]) -> f64 {
    ctx.quad(x_dev, u_dev) + ctx.lin(x_dev, u_dev).abs()
}

/// `x̃ᵀCᵀQC x̃ + ũᵀRũ`.
pub fn quadratic_stage(ctx: &StageContext, x_dev: &[f64], u_dev: &[f64]) -> f64 {
    ctx.quad(x_dev, u_dev)
}

fn stage_pairs<'a>(
    ctx: &'a StageContext,
    traj: &'a Trajectory,
) -> impl Iterator<Item = (&'a [f64], &'a [f64])> + 'a {
    assert!(!traj.inputs.is_empty(), "trajectory must contain at least one step");
    assert_eq!(traj.states[0].len(), ctx.n(), "state dimension");
    traj.states
        .iter()
        .zip(&traj.inputs)
        .map(|(x, u)| (x.as_slice(), u.as_slice()))
}

/// Per-step `|C(x_k, u_k) − C_ss|`.
pub fn avg_cost_terms(ctx: &StageContext, traj: &Trajectory) -> Vec<f64> {
    stage_pairs(ctx, traj)
        .map(|(x, u)| (stage_cost(ctx, x, u) - ctx.ss.c_ss).abs())
        .collect()
}

/// Per-step surrogate stage in deviation coordinates.
pub fn surrogate_terms(ctx: &StageContext, traj: &Trajectory) -> Vec<f64> {
    stage_pairs(ctx, traj)
        .map(|(x, u)| {
            let xd = vec_sub(x, &ctx.ss.x_ss);
            let ud = vec_sub(u, &ctx.ss.u_ss);
            surrogate_stage(ctx, &xd, &ud)
        })
        .collect()
}

/// Per-step quadratic stage in deviation coordinates.
pub fn quadratic_terms(ctx: &StageContext, traj: &Trajectory) -> Vec<f64> {
    stage_pairs(ctx, traj)
        .map(|(x, u)| {
            let xd = vec_sub(x, &ctx.ss.x_ss);
            let ud = vec_sub(u, &ctx.ss.u_ss);
            quadratic_stage(ctx, &xd, &ud)
        })
        .collect()
}

/// Per-step signed deviation `φ_k`.
pub fn deviation_terms(ctx: &StageContext, traj: &Trajectory) -> Vec<f64> {
    stage_pairs(ctx, traj)
        .map(|(x, u)| {
            let xd = vec_sub(x, &ctx.ss.x_ss);
            let ud = vec_sub(u, &ctx.ss.u_ss);
            stage_deviation(ctx, &xd, &ud)
        })
        .collect()
}

/// `Σ |C(x_k, u_k) − C_ss|` over the trajectory.
pub fn avg_cost_index(ctx: &StageContext, traj: &Trajectory) -> f64 {
    avg_cost_terms(ctx, traj).iter().sum()
}

/// `Σ x̃ᵀCᵀQC x̃ + ũᵀRũ + |sᵀx̃ + r_linᵀũ|` over the trajectory.
pub fn surrogate_index(ctx: &StageContext, traj: &Trajectory) -> f64 {
    surrogate_terms(ctx, traj).iter().sum()
}

/// `Σ x̃ᵀCᵀQC x̃ + ũᵀRũ` over the trajectory.
pub fn quadratic_index(ctx: &StageContext, traj: &Trajectory) -> f64 {
    quadratic_terms(ctx, traj).iter().sum()
}

/// True when the last quarter of `terms` sums to less than
/// [`TAIL_FRACTION`] of the total (or the total is exactly zero).
pub fn tail_converged(terms: &[f64]) -> bool {
    let total: f64 = terms.iter().sum();
    if total == 0.0 {
        return true;
    }
    let quarter = terms.len() / 4;
    if quarter == 0 || !total.is_finite() {
        return false;
    }
    let tail: f64 = terms[terms.len() - quarter..].iter().sum();
    tail < TAIL_FRACTION * total
}
