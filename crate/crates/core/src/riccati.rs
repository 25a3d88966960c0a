//! Discrete algebraic Riccati equation and LQR gains.

use crate::error::{Error, Result};
use crate::harness::Controller;
use crate::matnum::{cholesky, spectral_radius_default, Lu, Matrix};
use crate::plant::{from_deviation, state_deviation, LinearSystem, SteadyState};

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct LqrSolution {
    /// Stabilizing DARE solution.
    pub p: Matrix,
    /// Feedback gain for `ũ = −K x̃`.
    pub k: Matrix,
    pub iterations: usize,
    /// Infinity norm of the DARE residual at `p`.
    pub residual: f64,
    /// Spectral radius of `A − BK`.
    pub closed_loop_radius: f64,
}

/// One Riccati map application:
/// `AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + W`.
pub fn riccati_step(sys: &LinearSystem, w: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let (a, b) = (sys.a(), sys.b());
    let at = a.transpose();
    let pb = p * b;
    let gram = (&(&b.transpose() * &pb) + r).symmetrized();
    cholesky(&gram)?;
    let bt_pa = &pb.transpose() * a;
    let gain = Lu::new(&gram)?.solve_matrix(&bt_pa)?;
    let next = &(&(&(&at * p) * a) - &(&bt_pa.transpose() * &gain)) + w;
    Ok(next.symmetrized())
}

/// `K = (R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(sys: &LinearSystem, p: &Matrix, r: &Matrix) -> Result<Matrix> {
    let (a, b) = (sys.a(), sys.b());
    let bt = b.transpose();
    let gram = &(&(&bt * p) * b) + r;
    let bt_pa = &(&bt * p) * a;
    Lu::new(&gram)?.solve_matrix(&bt_pa)
}

/// `‖AᵀPA − P − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + W‖∞`.
pub fn dare_residual(sys: &LinearSystem, w: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    Ok((&riccati_step(sys, w, r, p)? - p).norm_inf())
}

/// Fixed-point Riccati iteration from `P₀ = CᵀQC` on the state weight
/// `CᵀQC`.
///
/// Stops when `‖P_{j+1} − P_j‖∞ ≤ tol·(1 + ‖P_j‖∞)`. The converged gain must
/// be stabilizing.
pub fn solve_dare(
    sys: &LinearSystem,
    q: &Matrix,
    r: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<LqrSolution> {
    if q.rows() != sys.p() || !q.is_square() {
        return Err(Error::DimensionMismatch(format!("Q must be {0}x{0}", sys.p())));
    }
    if r.rows() != sys.m() || !r.is_square() {
        return Err(Error::DimensionMismatch(format!("R must be {0}x{0}", sys.m())));
    }
    cholesky(q)?;
    cholesky(r)?;
    let c = sys.c();
    let w = (&(&c.transpose() * q) * c).symmetrized();
    solve_dare_weighted(sys, &w, r, tol, max_iters)
}

/// As [`solve_dare`] but with the state weight `W` given directly.
pub fn solve_dare_weighted(
    sys: &LinearSystem,
    w: &Matrix,
    r: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<LqrSolution> {
    let mut p = w.clone();
    for it in 1..=max_iters {
        let next = riccati_step(sys, w, r, &p)?;
        if !next.all_finite() {
            break;
        }
        let delta = (&next - &p).norm_inf();
        let scale = 1.0 + p.norm_inf();
        p = next;
        if delta <= tol * scale {
            let k = lqr_gain(sys, &p, r)?;
            let closed = sys.a() - &(sys.b() * &k);
            let radius = spectral_radius_default(&closed)?;
            if radius >= 1.0 {
                return Err(Error::UnstableGain { radius });
            }
            let residual = dare_residual(sys, w, r, &p)?;
            return Ok(LqrSolution {
                p,
                k,
                iterations: it,
                residual,
                closed_loop_radius: radius,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "Riccati fixed-point iteration",
        iterations: max_iters,
    })
}

/// Time-varying gains of the finite-horizon LQ problem
/// `min Σ_{k<steps} x̃ᵀWx̃ + ũᵀRũ + x̃_Nᵀ P_N x̃_N`, first stage first.
pub fn finite_horizon_gains(
    sys: &LinearSystem,
    w: &Matrix,
    r: &Matrix,
    terminal: &Matrix,
    steps: usize,
) -> Result<Vec<Matrix>> {
    let mut p = terminal.clone();
    let mut gains = Vec::with_capacity(steps);
    for _ in 0..steps {
        gains.push(lqr_gain(sys, &p, r)?);
        p = riccati_step(sys, w, r, &p)?;
    }
    gains.reverse();
    Ok(gains)
}

/// Tracking controller `u = −K (x − x_ss) + u_ss`.
pub fn lqr_tracking_controller(sys: &LinearSystem, k: &Matrix, ss: &SteadyState) -> Result<Controller> {
    if k.rows() != sys.m() || k.cols() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "K must be {}x{}, got {}x{}",
            sys.m(),
            sys.n(),
            k.rows(),
            k.cols()
        )));
    }
    let closed = sys.a() - &(sys.b() * k);
    let radius = spectral_radius_default(&closed)?;
    if radius >= 1.0 {
        return Err(Error::UnstableGain { radius });
    }
    let k = k.clone();
    let ss = ss.clone();
    Ok(Controller::new("LQR", move |x: &[f64]| {
        let x_dev = state_deviation(x, &ss);
        let u_dev: Vec<f64> = k.mul_vec(&x_dev)?.into_iter().map(|v| -v).collect();
        Ok(from_deviation(&u_dev, &ss))
    }))
}
