mod common;

use avgtrack::criteria::{
    avg_cost_index, deviation_terms, quadratic_index, stage_cost, stage_deviation,
    surrogate_index, surrogate_stage,
};
use avgtrack::harness::{exact_scalar_controller, rollout, Controller};
use avgtrack::plant::{from_deviation, steady_state, steady_state_block, to_deviation};
use avgtrack::riccati::{lqr_tracking_controller, solve_dare, DARE_MAX_ITERS, DARE_TOL};
use avgtrack::{LinearTermConvention, StageContext};
use common::*;
use rand::Rng;

#[test]
fn deviation_dynamics_closure() {
    let mut rng = rng(11);
    for (n, m) in [(1, 1), (2, 1), (3, 2), (4, 2)] {
        let prob = random_problem(&mut rng, n, m);
        let ss = steady_state(&prob, LinearTermConvention::PaperLinearTerms).unwrap();
        let sys = &prob.system;
        let mut xd = random_vec(&mut rng, n, 1.0);
        let mut x: Vec<f64> = xd.iter().zip(&ss.x_ss).map(|(a, b)| a + b).collect();
        for _ in 0..25 {
            let ud = random_vec(&mut rng, m, 1.0);
            xd = sys.step(&xd, &ud).unwrap();
            x = sys.step(&x, &from_deviation(&ud, &ss)).unwrap();
            for (xi, (di, si)) in x.iter().zip(xd.iter().zip(&ss.x_ss)) {
                assert!((xi - (di + si)).abs() <= 1e-9 * (1.0 + xi.abs()), "{xi} vs {}", di + si);
            }
        }
    }
}

#[test]
fn steady_state_block_residual() {
    let mut rng = rng(12);
    for (n, m) in [(1, 1), (2, 2), (3, 1), (5, 2)] {
        let prob = random_problem(&mut rng, n, m);
        let ss = steady_state(&prob, LinearTermConvention::PaperLinearTerms).unwrap();
        let sys = &prob.system;
        let next = sys.step(&ss.x_ss, &ss.u_ss).unwrap();
        let y = sys.output(&ss.x_ss).unwrap();
        for (a, b) in next.iter().zip(&ss.x_ss) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in y.iter().zip(prob.reference()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(steady_state_block(sys).unwrap().rows(), n + m);
    }
}

#[test]
fn exact_expansion_identity() {
    let mut rng = rng(13);
    for (n, m) in [(1, 1), (2, 1), (2, 2), (3, 2), (4, 3)] {
        let prob = random_problem(&mut rng, n, m);
        let ctx = StageContext::new(prob, LinearTermConvention::ExactExpansion).unwrap();
        for _ in 0..1000 {
            let x = random_vec(&mut rng, n, 3.0);
            let u = random_vec(&mut rng, m, 3.0);
            let (xd, ud) = to_deviation(&x, &u, &ctx.ss);
            let lhs = stage_deviation(&ctx, &xd, &ud);
            let rhs = stage_cost(&ctx, &x, &u) - ctx.ss.c_ss;
            assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn paper_terms_differ_from_exact_expansion() {
    let ctx = scalar_ctx();
    let lhs = stage_deviation(&ctx, &[0.5], &[0.0]);
    let rhs = stage_cost(&ctx, &[1.5], &[-1.0]) - ctx.ss.c_ss;
    assert!((lhs - rhs).abs() > 0.1);
}

#[test]
fn steady_state_scales_linearly() {
    let mut rng = rng(14);
    for (n, m) in [(1, 1), (2, 1), (3, 2)] {
        let prob = random_problem(&mut rng, n, m);
        let ss = steady_state(&prob, LinearTermConvention::PaperLinearTerms).unwrap();
        let alpha = rng.gen_range(-4.0..4.0);
        let scaled_ref: Vec<f64> = prob.reference().iter().map(|v| alpha * v).collect();
        let scaled = steady_state(&prob.with_reference(scaled_ref).unwrap(), LinearTermConvention::PaperLinearTerms)
            .unwrap();
        for (a, b) in scaled.x_ss.iter().zip(&ss.x_ss) {
            assert!((a - alpha * b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn surrogate_dominates_absolute_deviation() {
    let mut rng = rng(15);
    let mut contexts = vec![scalar_ctx()];
    for (n, m) in [(2, 1), (3, 2)] {
        contexts.push(StageContext::new(random_problem(&mut rng, n, m), LinearTermConvention::PaperLinearTerms).unwrap());
    }
    for i in 0..100_000 {
        let ctx = &contexts[i % contexts.len()];
        let xd = random_vec(&mut rng, ctx.n(), 5.0);
        let ud = random_vec(&mut rng, ctx.m(), 5.0);
        let sur = surrogate_stage(ctx, &xd, &ud);
        let phi = stage_deviation(ctx, &xd, &ud).abs();
        assert!(sur >= phi - 1e-12 * (1.0 + phi), "{sur} < {phi}");
    }
}

fn lqr_for(ctx: &StageContext) -> Controller {
    let sys = &ctx.problem.system;
    let sol = solve_dare(sys, ctx.problem.q(), ctx.problem.r(), DARE_TOL, DARE_MAX_ITERS).unwrap();
    lqr_tracking_controller(sys, &sol.k, &ctx.ss).unwrap()
}

#[test]
fn exact_expansion_sum_equals_avg_index() {
    let mut rng = rng(16);
    for (n, m) in [(1, 1), (2, 1), (3, 2)] {
        let ctx = StageContext::new(random_problem(&mut rng, n, m), LinearTermConvention::ExactExpansion).unwrap();
        let x0 = random_vec(&mut rng, n, 3.0);
        let traj = rollout(&ctx.problem.system, &lqr_for(&ctx), &x0, 60).unwrap();
        let phi_sum: f64 = deviation_terms(&ctx, &traj).iter().map(|v| v.abs()).sum();
        let avg = avg_cost_index(&ctx, &traj);
        assert!((phi_sum - avg).abs() <= 1e-8 * (1.0 + avg), "{phi_sum} vs {avg}");
        assert!(surrogate_index(&ctx, &traj) >= phi_sum - 1e-9);
    }
}

#[test]
fn indices_ignore_appended_steady_samples() {
    let ctx = scalar_ctx();
    let ctrl = exact_scalar_controller(&ctx.ss).unwrap();
    // x̃ = 0.5 is driven to the steady state in one exact step
    let short = rollout(&ctx.problem.system, &ctrl, &[1.5], 3).unwrap();
    let long = rollout(&ctx.problem.system, &ctrl, &[1.5], 12).unwrap();
    assert_eq!(long.states[1], vec![1.0]);
    for f in [avg_cost_index, surrogate_index, quadratic_index] {
        assert_eq!(f(&ctx, &short), f(&ctx, &long));
        assert!(f(&ctx, &short) > 0.0);
    }
}
