#![allow(dead_code)]

use avgtrack::plant::check_controllable;
use avgtrack::{LinearSystem, LinearTermConvention, Matrix, StageContext, TrackingProblem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `MᵀM + εI`, comfortably positive definite.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = random_matrix(rng, n, n, 1.0);
    let mut s = &m.transpose() * &m;
    for i in 0..n {
        s[(i, i)] += 0.5;
    }
    s.symmetrized()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn scalar_problem() -> TrackingProblem {
    TrackingProblem::new(
        LinearSystem::scalar(2.0, 1.0, 1.0).unwrap(),
        Matrix::scalar(1.0).unwrap(),
        Matrix::scalar(1.0).unwrap(),
        vec![1.0],
    )
    .unwrap()
}

pub fn scalar_ctx() -> StageContext {
    StageContext::new(scalar_problem(), LinearTermConvention::PaperLinearTerms).unwrap()
}

/// Controllable square-output problem with an invertible steady-state block.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> TrackingProblem {
    loop {
        let a = random_matrix(rng, n, n, 1.2);
        let b = random_matrix(rng, n, m, 1.0);
        let c = random_matrix(rng, m, n, 1.0);
        let sys = LinearSystem::new(a, b, c).unwrap();
        if !check_controllable(&sys) {
            continue;
        }
        let q = random_spd(rng, m);
        let r = random_spd(rng, m);
        let r_ss = random_vec(rng, m, 2.0);
        let prob = TrackingProblem::new(sys, q, r, r_ss).unwrap();
        if let Ok(ctx) = StageContext::new(prob.clone(), LinearTermConvention::PaperLinearTerms) {
            if ctx.ss.x_ss.iter().chain(&ctx.ss.u_ss).all(|v| v.abs() < 1e3) {
                return prob;
            }
        }
    }
}
