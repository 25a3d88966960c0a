//! Plant model, assumption checks and the steady-state target.

use crate::error::{Error, Result};
use crate::matnum::{self, cholesky, dot, rank, solve_linear, vec_add, vec_sub, Matrix, RANK_TOL};

/// Discrete-time plant `x⁺ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B must have {n} rows, got {}",
                b.rows()
            )));
        }
        if c.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C must have {n} columns, got {}",
                c.cols()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Single-state, single-input, single-output plant.
    pub fn scalar(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Matrix::scalar(a)?, Matrix::scalar(b)?, Matrix::scalar(c)?)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.cols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.rows()
    }

    pub fn is_scalar(&self) -> bool {
        self.n() == 1 && self.m() == 1 && self.p() == 1
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec_add(&self.a.mul_vec(x)?, &self.b.mul_vec(u)?))
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.c.mul_vec(x)
    }
}

/// Plant plus tracking weights and a constant reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingProblem {
    pub system: LinearSystem,
    q: Matrix,
    r: Matrix,
    r_ss: Vec<f64>,
    /// `Cᵀ Q C`, cached.
    state_weight: Matrix,
}

impl TrackingProblem {
    /// Validates dimensions and positive definiteness of `Q` and `R`.
    pub fn new(system: LinearSystem, q: Matrix, r: Matrix, r_ss: Vec<f64>) -> Result<Self> {
        let (m, p) = (system.m(), system.p());
        if q.rows() != p || q.cols() != p {
            return Err(Error::DimensionMismatch(format!(
                "Q must be {p}x{p}, got {}x{}",
                q.rows(),
                q.cols()
            )));
        }
        if r.rows() != m || r.cols() != m {
            return Err(Error::DimensionMismatch(format!(
                "R must be {m}x{m}, got {}x{}",
                r.rows(),
                r.cols()
            )));
        }
        if r_ss.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "reference must have length {p}, got {}",
                r_ss.len()
            )));
        }
        if r_ss.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("reference has non-finite entries".into()));
        }
        cholesky(&q)?;
        cholesky(&r)?;
        let c = system.c();
        let state_weight = (&(&c.transpose() * &q) * c).symmetrized();
        Ok(Self {
            system,
            q,
            r,
            r_ss,
            state_weight,
        })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn reference(&self) -> &[f64] {
        &self.r_ss
    }

    pub fn state_weight(&self) -> &Matrix {
        &self.state_weight
    }

    /// Same plant and weights, different reference.
    pub fn with_reference(&self, r_ss: Vec<f64>) -> Result<Self> {
        Self::new(self.system.clone(), self.q.clone(), self.r.clone(), r_ss)
    }
}

/// How the linear terms `s`, `r_lin` of the deviation stage cost are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearTermConvention {
    /// `s = CᵀQC x_ss`, `r_lin = R u_ss`: the rewritten cost as printed, which
    /// gives the `|x̃ − ũ|` term of the scalar example.
    #[default]
    PaperLinearTerms,
    /// `s = 2 CᵀQC x_ss`, `r_lin = 2 R u_ss`: the exact binomial expansion of
    /// `C(x, u) − C_ss`.
    ExactExpansion,
}

impl LinearTermConvention {
    fn factor(self) -> f64 {
        match self {
            Self::PaperLinearTerms => 1.0,
            Self::ExactExpansion => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub x_ss: Vec<f64>,
    pub u_ss: Vec<f64>,
    /// Linear state coefficient of the deviation stage cost.
    pub s: Vec<f64>,
    /// Linear input coefficient of the deviation stage cost.
    pub r_lin: Vec<f64>,
    /// `x_ssᵀ CᵀQC x_ss + u_ssᵀ R u_ss`.
    pub c_ss: f64,
    pub convention: LinearTermConvention,
}

/// Kalman rank test on `[B, AB, …, A^{n−1}B]`.
pub fn check_controllable(sys: &LinearSystem) -> bool {
    let (n, m) = (sys.n(), sys.m());
    let mut ctrb = Matrix::zeros(n, n * m);
    let mut block = sys.b().clone();
    for k in 0..n {
        ctrb.set_block(0, k * m, &block);
        block = sys.a() * &block;
    }
    rank(&ctrb, RANK_TOL) == n
}

/// Observability of `(A, L_Qᵀ C)` with `L_Q` the Cholesky factor of `Q`.
pub fn check_observable(sys: &LinearSystem, q: &Matrix) -> Result<bool> {
    let lq = cholesky(q)?;
    let weighted = lq.transpose().matmul(sys.c())?;
    let (n, p) = (sys.n(), weighted.rows());
    let mut obsv = Matrix::zeros(n * p, n);
    let mut block = weighted;
    for k in 0..n {
        obsv.set_block(k * p, 0, &block);
        block = &block * sys.a();
    }
    Ok(rank(&obsv, RANK_TOL) == n)
}

/// `[[A − I, B], [C, 0]]`.
pub fn steady_state_block(sys: &LinearSystem) -> Result<Matrix> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    if p != m {
        return Err(Error::DimensionMismatch(format!(
            "steady-state block is square only when outputs = inputs (p = {p}, m = {m})"
        )));
    }
    let mut block = Matrix::zeros(n + p, n + m);
    block.set_block(0, 0, &(sys.a() - &Matrix::identity(n)));
    block.set_block(0, n, sys.b());
    block.set_block(n, 0, sys.c());
    Ok(block)
}

/// Solves `[[A − I, B], [C, 0]] [x_ss; u_ss] = [0; r_ss]`.
pub fn steady_state(prob: &TrackingProblem, convention: LinearTermConvention) -> Result<SteadyState> {
    let sys = &prob.system;
    let block = steady_state_block(sys)?;
    let n = sys.n();
    let mut rhs = vec![0.0; block.rows()];
    rhs[n..].copy_from_slice(prob.reference());
    let z = solve_linear(&block, &rhs).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::AssumptionTwoViolated,
        other => other,
    })?;
    let x_ss = z[..n].to_vec();
    let u_ss = z[n..].to_vec();

    let wx = prob.state_weight().mul_vec(&x_ss)?;
    let ru = prob.r().mul_vec(&u_ss)?;
    let c_ss = dot(&x_ss, &wx) + dot(&u_ss, &ru);
    let f = convention.factor();
    Ok(SteadyState {
        s: wx.iter().map(|v| f * v).collect(),
        r_lin: ru.iter().map(|v| f * v).collect(),
        x_ss,
        u_ss,
        c_ss,
        convention,
    })
}

/// `(x − x_ss, u − u_ss)`.
pub fn to_deviation(x: &[f64], u: &[f64], ss: &SteadyState) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(x.len(), ss.x_ss.len(), "state dimension");
    assert_eq!(u.len(), ss.u_ss.len(), "input dimension");
    (vec_sub(x, &ss.x_ss), vec_sub(u, &ss.u_ss))
}

/// `ũ + u_ss`.
pub fn from_deviation(u_dev: &[f64], ss: &SteadyState) -> Vec<f64> {
    assert_eq!(u_dev.len(), ss.u_ss.len(), "input dimension");
    vec_add(u_dev, &ss.u_ss)
}

/// `x − x_ss`.
pub fn state_deviation(x: &[f64], ss: &SteadyState) -> Vec<f64> {
    assert_eq!(x.len(), ss.x_ss.len(), "state dimension");
    matnum::vec_sub(x, &ss.x_ss)
}
