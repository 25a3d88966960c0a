//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    ½ zᵀHz + gᵀz + c
//! subject to  E z = f,  G z ≤ h
//! ```
//!
//! with an operator-splitting (ADMM) iteration: a regularized linear solve
//! onto the constraint-coupled set, projection of the constraint values onto
//! their bounds, and a dual update, all with over-relaxation. Once the
//! iterates identify an active set, a polishing step solves the
//! equality-constrained KKT system on that set; the polished point is kept
//! only if it passes the KKT tolerances.

use crate::error::{Error, Result};
use crate::matnum::{cholesky, cholesky_solve, dot, norm_inf, Lu, Matrix};

/// Rows `matrix · z (= or ≤) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub matrix: Matrix,
    pub rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(matrix: Matrix, rhs: Vec<f64>) -> Result<Self> {
        if matrix.rows() != rhs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows but {} right-hand-side entries",
                matrix.rows(),
                rhs.len()
            )));
        }
        Ok(Self { matrix, rhs })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric positive semidefinite `H`.
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    /// Constant added to the objective.
    pub offset: f64,
    pub equality: Option<LinearConstraints>,
    pub inequality: Option<LinearConstraints>,
}

impl QpProblem {
    pub fn new(
        hessian: Matrix,
        linear: Vec<f64>,
        offset: f64,
        equality: Option<LinearConstraints>,
        inequality: Option<LinearConstraints>,
    ) -> Result<Self> {
        let n = hessian.rows();
        if !hessian.is_square() || linear.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "Hessian {}x{} and linear term of length {} disagree",
                hessian.rows(),
                hessian.cols(),
                linear.len()
            )));
        }
        if !hessian.is_symmetric(1e-8 * (1.0 + hessian.max_abs())) {
            return Err(Error::NotSymmetric);
        }
        for c in [&equality, &inequality].into_iter().flatten() {
            if c.matrix.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "constraint matrix has {} columns, expected {n}",
                    c.matrix.cols()
                )));
            }
        }
        Ok(Self {
            hessian,
            linear,
            offset,
            equality,
            inequality,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.hessian.rows()
    }

    pub fn n_eq(&self) -> usize {
        self.equality.as_ref().map_or(0, |c| c.rhs.len())
    }

    pub fn n_ineq(&self) -> usize {
        self.inequality.as_ref().map_or(0, |c| c.rhs.len())
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.hessian.mul_vec(z).expect("dimension checked");
        0.5 * dot(z, &hz) + dot(&self.linear, z) + self.offset
    }

    /// KKT residuals of a primal-dual point.
    pub fn kkt(&self, z: &[f64], eq_mult: &[f64], ineq_mult: &[f64]) -> KktResiduals {
        let mut grad = self.hessian.mul_vec(z).expect("dimension checked");
        for (g, l) in grad.iter_mut().zip(&self.linear) {
            *g += l;
        }
        let mut primal = 0.0f64;
        if let Some(eq) = &self.equality {
            let ez = eq.matrix.mul_vec(z).expect("dimension checked");
            for (v, f) in ez.iter().zip(&eq.rhs) {
                primal = primal.max((v - f).abs());
            }
            let t = eq.matrix.tr_mul_vec(eq_mult).expect("multiplier length");
            grad.iter_mut().zip(&t).for_each(|(g, v)| *g += v);
        }
        let mut complementarity = 0.0f64;
        let mut min_mult = 0.0f64;
        if let Some(ineq) = &self.inequality {
            let gz = ineq.matrix.mul_vec(z).expect("dimension checked");
            for ((v, h), mu) in gz.iter().zip(&ineq.rhs).zip(ineq_mult) {
                primal = primal.max(v - h);
                complementarity = complementarity.max((mu * (v - h)).abs());
                min_mult = min_mult.min(*mu);
            }
            let t = ineq.matrix.tr_mul_vec(ineq_mult).expect("multiplier length");
            grad.iter_mut().zip(&t).for_each(|(g, v)| *g += v);
        }
        KktResiduals {
            primal,
            stationarity: norm_inf(&grad),
            complementarity,
            min_multiplier: min_mult,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Worst equality violation or positive inequality violation.
    pub primal: f64,
    /// `‖Hz + g + Eᵀλ + Gᵀμ‖∞`.
    pub stationarity: f64,
    /// `max |μ_i (Gz − h)_i|`.
    pub complementarity: f64,
    /// Most negative inequality multiplier (0 if none is negative).
    pub min_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: QpStatus,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub iterations: usize,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Initial penalty for inequality rows; equality rows use `1e3·rho`.
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    /// Iterations between residual checks.
    pub check_every: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 10,
            polish: true,
        }
    }
}

/// Solves with default settings apart from `tol` and `max_iters`.
pub fn solve_qp(qp: &QpProblem, tol: f64, max_iters: usize) -> Result<QpSolution> {
    solve_qp_with(
        qp,
        &QpSettings {
            tol,
            max_iters,
            ..QpSettings::default()
        },
    )
}

const EQ_RHO_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

struct Stacked {
    rows: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_eq: usize,
}

impl Stacked {
    fn new(qp: &QpProblem) -> Self {
        let mut rows = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        if let Some(eq) = &qp.equality {
            rows.extend(eq.matrix.to_rows());
            lower.extend_from_slice(&eq.rhs);
            upper.extend_from_slice(&eq.rhs);
        }
        let n_eq = rows.len();
        if let Some(ineq) = &qp.inequality {
            rows.extend(ineq.matrix.to_rows());
            lower.extend(std::iter::repeat(f64::NEG_INFINITY).take(ineq.rhs.len()));
            upper.extend_from_slice(&ineq.rhs);
        }
        Self { rows, lower, upper, n_eq }
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(r, x)).collect()
    }

    fn tr_mul(&self, y: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(r) {
                    *o += a * yi;
                }
            }
        }
        out
    }
}

fn factor(qp: &QpProblem, a: &Stacked, rho: &[f64], sigma: f64) -> Result<Matrix> {
    let n = qp.n_vars();
    let mut k = qp.hessian.symmetrized();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    for (row, &r) in a.rows.iter().zip(rho) {
        let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                k[(i, j)] += r * row[i] * row[j];
            }
        }
    }
    cholesky(&k.symmetrized())
}

pub fn solve_qp_with(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    let n = qp.n_vars();
    let a = Stacked::new(qp);
    let m = a.len();
    let n_eq = a.n_eq;
    let tol = settings.tol;

    let rho_for = |rho: f64| -> Vec<f64> {
        (0..m)
            .map(|i| if i < n_eq { rho * EQ_RHO_SCALE } else { rho })
            .collect()
    };
    let mut rho = settings.rho;
    let mut rho_vec = rho_for(rho);
    let mut chol = factor(qp, &a, &rho_vec, settings.sigma)?;

    let mut x = vec![0.0; n];
    let mut z: Vec<f64> = (0..m).map(|i| 0.0f64.clamp(a.lower[i], a.upper[i])).collect();
    let mut y = vec![0.0; m];
    let alpha = settings.alpha;

    let mut last_active: Option<Vec<usize>> = None;
    let mut tried_active: Option<Vec<usize>> = None;
    let mut best: Option<QpSolution> = None;

    let mut iter = 0;
    while iter < settings.max_iters {
        iter += 1;
        // x̂ = (H + σI + Aᵀ diag(ρ) A)⁻¹ (σx − g + Aᵀ(ρ∘z − y))
        let w: Vec<f64> = (0..m).map(|i| rho_vec[i] * z[i] - y[i]).collect();
        let mut rhs = a.tr_mul(&w, n);
        for i in 0..n {
            rhs[i] += settings.sigma * x[i] - qp.linear[i];
        }
        let x_hat = cholesky_solve(&chol, &rhs);
        let z_hat = a.mul(&x_hat);
        for i in 0..n {
            x[i] = alpha * x_hat[i] + (1.0 - alpha) * x[i];
        }
        for i in 0..m {
            let v = alpha * z_hat[i] + (1.0 - alpha) * z[i];
            let z_new = (v + y[i] / rho_vec[i]).clamp(a.lower[i], a.upper[i]);
            y[i] += rho_vec[i] * (v - z_new);
            z[i] = z_new;
        }

        if iter % settings.check_every != 0 && iter != settings.max_iters {
            continue;
        }

        let (eq_mult, ineq_mult) = (y[..n_eq].to_vec(), y[n_eq..].to_vec());
        let kkt = qp.kkt(&x, &eq_mult, &ineq_mult);
        let candidate = QpSolution {
            z: x.clone(),
            objective: qp.objective(&x),
            primal_residual: kkt.primal.max(0.0),
            dual_residual: kkt.stationarity,
            status: QpStatus::MaxIters,
            eq_multipliers: eq_mult,
            ineq_multipliers: ineq_mult,
            iterations: iter,
            polished: false,
        };
        if candidate.primal_residual <= tol && candidate.dual_residual <= tol {
            return Ok(QpSolution {
                status: QpStatus::Solved,
                ..candidate
            });
        }

        if settings.polish {
            let active: Vec<usize> = (0..m - n_eq).filter(|&i| y[n_eq + i] > 0.0).collect();
            let stable = last_active.as_ref() == Some(&active);
            if stable && tried_active.as_ref() != Some(&active) {
                tried_active = Some(active.clone());
                if let Some(mut sol) = polish(qp, &active, tol) {
                    sol.iterations = iter;
                    return Ok(sol);
                }
            }
            last_active = Some(active);
        }

        let keep = best.as_ref().map_or(true, |b| {
            candidate.primal_residual.max(candidate.dual_residual)
                < b.primal_residual.max(b.dual_residual)
        });
        if keep {
            best = Some(candidate);
        }

        // penalty adaptation on the ratio of scaled residuals
        let ax = a.mul(&x);
        let prim = ax.iter().zip(&z).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let prim_scale = norm_inf(&ax).max(norm_inf(&z)).max(1e-30);
        let hx = qp.hessian.mul_vec(&x)?;
        let aty = a.tr_mul(&y, n);
        let dual_scale = norm_inf(&hx).max(norm_inf(&aty)).max(norm_inf(&qp.linear)).max(1e-30);
        let dual = hx
            .iter()
            .zip(&aty)
            .zip(&qp.linear)
            .fold(0.0f64, |m, ((h, t), g)| m.max((h + t + g).abs()));
        if prim > 0.0 && dual > 0.0 && m > 0 {
            let ratio = ((prim / prim_scale) / (dual / dual_scale)).sqrt();
            if !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho != rho {
                    rho = new_rho;
                    rho_vec = rho_for(rho);
                    chol = factor(qp, &a, &rho_vec, settings.sigma)?;
                }
            }
        }
    }
    Ok(best.expect("at least one residual check ran"))
}

/// Solves the KKT system with the inequalities in `active` held as
/// equalities; `None` if the result violates the tolerances.
fn polish(qp: &QpProblem, active: &[usize], tol: f64) -> Option<QpSolution> {
    const DELTA: f64 = 1e-9;
    const REFINE: usize = 15;
    let n = qp.n_vars();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    if let Some(eq) = &qp.equality {
        rows.extend(eq.matrix.to_rows());
        rhs.extend_from_slice(&eq.rhs);
    }
    let n_eq = rows.len();
    if let Some(ineq) = &qp.inequality {
        for &i in active {
            rows.push(ineq.matrix.row(i).to_vec());
            rhs.push(ineq.rhs[i]);
        }
    }
    let k = rows.len();
    let dim = n + k;
    let mut exact = Matrix::zeros(dim, dim);
    exact.set_block(0, 0, &qp.hessian);
    for (r, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            exact[(n + r, j)] = v;
            exact[(j, n + r)] = v;
        }
    }
    let mut reg = exact.clone();
    for i in 0..dim {
        reg[(i, i)] += if i < n { DELTA } else { -DELTA };
    }
    let lu = Lu::new(&reg).ok()?;
    let mut b = vec![0.0; dim];
    for i in 0..n {
        b[i] = -qp.linear[i];
    }
    b[n..].copy_from_slice(&rhs);
    let mut sol = lu.solve(&b).ok()?;
    for _ in 0..REFINE {
        let ks = exact.mul_vec(&sol).ok()?;
        let r: Vec<f64> = b.iter().zip(&ks).map(|(bi, ki)| bi - ki).collect();
        if norm_inf(&r) == 0.0 {
            break;
        }
        let d = lu.solve(&r).ok()?;
        sol.iter_mut().zip(&d).for_each(|(s, di)| *s += di);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let z = sol[..n].to_vec();
    let eq_mult = sol[n..n + n_eq].to_vec();
    let mut ineq_mult = vec![0.0; qp.n_ineq()];
    for (t, &i) in active.iter().enumerate() {
        let mu = sol[n + n_eq + t];
        if mu < -tol {
            return None;
        }
        ineq_mult[i] = mu.max(0.0);
    }
    let kkt = qp.kkt(&z, &eq_mult, &ineq_mult);
    let primal = kkt.primal.max(0.0);
    if primal > tol || kkt.stationarity > tol {
        return None;
    }
    Some(QpSolution {
        objective: qp.objective(&z),
        z,
        primal_residual: primal,
        dual_residual: kkt.stationarity,
        status: QpStatus::Solved,
        eq_multipliers: eq_mult,
        ineq_multipliers: ineq_mult,
        iterations: 0,
        polished: true,
    })
}
