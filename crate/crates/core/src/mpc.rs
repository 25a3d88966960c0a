//! Receding-horizon controller for the surrogate average-cost objective.
//!
//! Over `N` free stages and `L` rollout stages driven by the fixed LQR law
//! `ũ = −K x̃` the program minimizes
//!
//! ```text
//! Σ_k  x̃_kᵀ CᵀQC x̃_k + ũ_kᵀ R ũ_k + |sᵀx̃_k + r_linᵀũ_k|
//! ```
//!
//! subject to the deviation dynamics. Each absolute value becomes a slack
//! `τ_k` with `τ_k ≥ ±(sᵀx̃_k + r_linᵀũ_k)`, which turns the program into a
//! convex QP.

use crate::criteria::{surrogate_stage, StageContext};
use crate::error::{Error, Result};
use crate::harness::Controller;
use crate::matnum::{dot, Matrix};
use crate::plant::{from_deviation, state_deviation};
use crate::qp::{solve_qp, LinearConstraints, QpProblem, QpSolution, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    /// Free-input stages `N ≥ 1`.
    pub horizon: usize,
    /// LQR rollout stages appended as terminal cost.
    pub rollout: usize,
    pub qp_tol: f64,
    pub qp_max_iters: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            rollout: 30,
            qp_tol: 1e-8,
            qp_max_iters: 50_000,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("MPC horizon must be at least 1".into()));
        }
        if !(self.qp_tol > 0.0) || self.qp_max_iters == 0 {
            return Err(Error::InvalidArgument("QP tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.horizon + self.rollout
    }
}

/// Position of each block inside the decision vector
/// `(ũ_0..ũ_{N−1}, x̃_1..x̃_{N+L}, τ_0..τ_{N+L−1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpcLayout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub rollout: usize,
}

impl MpcLayout {
    pub fn stages(&self) -> usize {
        self.horizon + self.rollout
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * self.m + self.stages() * self.n + self.stages()
    }

    /// Offset of `ũ_k`, `k < N`.
    pub fn input(&self, k: usize) -> usize {
        debug_assert!(k < self.horizon);
        k * self.m
    }

    /// Offset of `x̃_k`, `1 ≤ k ≤ N + L`.
    pub fn state(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.stages());
        self.horizon * self.m + (k - 1) * self.n
    }

    /// Index of `τ_k`, `k < N + L`.
    pub fn slack(&self, k: usize) -> usize {
        debug_assert!(k < self.stages());
        self.horizon * self.m + self.stages() * self.n + k
    }
}

/// Predicted trajectory decoded from a QP solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    /// `x̃_0..x̃_{N+L}`.
    pub states: Vec<Vec<f64>>,
    /// `ũ_0..ũ_{N+L−1}`, rollout inputs reconstructed as `−K x̃_k`.
    pub inputs: Vec<Vec<f64>>,
    pub slacks: Vec<f64>,
}

impl MpcPlan {
    pub fn decode(layout: &MpcLayout, k_gain: &Matrix, x0: &[f64], z: &[f64]) -> Self {
        let (n, m) = (layout.n, layout.m);
        let mut states = vec![x0.to_vec()];
        for k in 1..=layout.stages() {
            let o = layout.state(k);
            states.push(z[o..o + n].to_vec());
        }
        let mut inputs = Vec::with_capacity(layout.stages());
        for k in 0..layout.stages() {
            if k < layout.horizon {
                let o = layout.input(k);
                inputs.push(z[o..o + m].to_vec());
            } else {
                let ku = k_gain.mul_vec(&states[k]).expect("gain shape");
                inputs.push(ku.into_iter().map(|v| -v).collect());
            }
        }
        let slacks = (0..layout.stages()).map(|k| z[layout.slack(k)]).collect();
        Self { states, inputs, slacks }
    }

    /// Surrogate cost of the predicted trajectory.
    pub fn surrogate_cost(&self, ctx: &StageContext) -> f64 {
        self.states
            .iter()
            .zip(&self.inputs)
            .map(|(x, u)| surrogate_stage(ctx, x, u))
            .sum()
    }
}

/// Builds the slack-reformulated program for the deviation state `x_dev`.
pub fn build_qp(ctx: &StageContext, k_gain: &Matrix, x_dev: &[f64], cfg: &MpcConfig) -> Result<(QpProblem, MpcLayout)> {
    cfg.validate()?;
    let sys = &ctx.problem.system;
    let (n, m) = (sys.n(), sys.m());
    if x_dev.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, expected {n}",
            x_dev.len()
        )));
    }
    if k_gain.rows() != m || k_gain.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "K must be {m}x{n}, got {}x{}",
            k_gain.rows(),
            k_gain.cols()
        )));
    }
    let layout = MpcLayout {
        n,
        m,
        horizon: cfg.horizon,
        rollout: cfg.rollout,
    };
    let stages = layout.stages();
    let nv = layout.n_vars();
    let w = ctx.problem.state_weight();
    let r = ctx.problem.r();
    let a = sys.a();
    let b = sys.b();
    let closed = a - &(b * k_gain);
    let rollout_weight = (w + &(&(&k_gain.transpose() * r) * k_gain)).symmetrized();
    // linear coefficient on x̃ of the absolute-value argument during rollout
    let s = &ctx.ss.s;
    let r_lin = &ctx.ss.r_lin;
    let kt_r = k_gain.tr_mul_vec(r_lin)?;
    let s_roll: Vec<f64> = s.iter().zip(&kt_r).map(|(a, b)| a - b).collect();

    // objective ½zᵀHz + gᵀz + offset
    let mut h = Matrix::zeros(nv, nv);
    let mut g = vec![0.0; nv];
    for k in 0..layout.horizon {
        h.set_block(layout.input(k), layout.input(k), &r.scale(2.0));
    }
    for k in 1..=stages {
        let o = layout.state(k);
        if k < layout.horizon {
            h.set_block(o, o, &w.scale(2.0));
        } else if k < stages {
            h.set_block(o, o, &rollout_weight.scale(2.0));
        }
    }
    for k in 0..stages {
        g[layout.slack(k)] = 1.0;
    }
    // stage 0 is always a free-input stage (N ≥ 1)
    let offset = w.quad_form(x_dev)?;

    // dynamics x̃_{k+1} − A x̃_k − B ũ_k = 0, x̃_0 moved to the right-hand side
    let mut e = Matrix::zeros(stages * n, nv);
    let mut f = vec![0.0; stages * n];
    for k in 0..stages {
        let row = k * n;
        e.set_block(row, layout.state(k + 1), &Matrix::identity(n));
        let transition = if k < layout.horizon { a } else { &closed };
        if k == 0 {
            f[row..row + n].copy_from_slice(&transition.mul_vec(x_dev)?);
        } else {
            e.set_block(row, layout.state(k), &transition.scale(-1.0));
        }
        if k < layout.horizon {
            e.set_block(row, layout.input(k), &b.scale(-1.0));
        }
    }

    // ±(sᵀx̃_k + r_linᵀũ_k) − τ_k ≤ 0
    let mut gi = Matrix::zeros(2 * stages, nv);
    let mut hi = vec![0.0; 2 * stages];
    for k in 0..stages {
        for (sign_idx, sign) in [1.0, -1.0].into_iter().enumerate() {
            let row = 2 * k + sign_idx;
            gi[(row, layout.slack(k))] = -1.0;
            let state_coeff = if k < layout.horizon { s } else { &s_roll };
            if k == 0 {
                hi[row] = -sign * dot(state_coeff, x_dev);
            } else {
                let o = layout.state(k);
                for j in 0..n {
                    gi[(row, o + j)] = sign * state_coeff[j];
                }
            }
            if k < layout.horizon {
                let o = layout.input(k);
                for j in 0..m {
                    gi[(row, o + j)] = sign * r_lin[j];
                }
            }
        }
    }

    let qp = QpProblem::new(
        h,
        g,
        offset,
        Some(LinearConstraints::new(e, f)?),
        Some(LinearConstraints::new(gi, hi)?),
    )?;
    Ok((qp, layout))
}

/// Solves the program at `x_dev` and returns the QP solution with its plan.
pub fn plan(ctx: &StageContext, k_gain: &Matrix, x_dev: &[f64], cfg: &MpcConfig) -> Result<(QpSolution, MpcPlan)> {
    let (qp, layout) = build_qp(ctx, k_gain, x_dev, cfg)?;
    let sol = solve_qp(&qp, cfg.qp_tol, cfg.qp_max_iters)?;
    if sol.status != QpStatus::Solved {
        return Err(Error::SolverFailure {
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        });
    }
    let plan = MpcPlan::decode(&layout, k_gain, x_dev, &sol.z);
    Ok((sol, plan))
}

/// Receding-horizon controller: `u = ũ_0 + u_ss` from a fresh solve at every
/// call.
pub fn mpc_controller(ctx: &StageContext, k_gain: &Matrix, cfg: MpcConfig) -> Result<Controller> {
    cfg.validate()?;
    // shape checks up front so the closure cannot fail on them
    build_qp(ctx, k_gain, &vec![0.0; ctx.n()], &cfg)?;
    let ctx = ctx.clone();
    let k_gain = k_gain.clone();
    Ok(Controller::new("MPC", move |x: &[f64]| {
        let x_dev = state_deviation(x, &ctx.ss);
        let (_, plan) = plan(&ctx, &k_gain, &x_dev, &cfg)?;
        Ok(from_deviation(&plan.inputs[0], &ctx.ss))
    }))
}
