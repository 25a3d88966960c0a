mod common;

use std::sync::OnceLock;
use std::time::Instant;

use avgtrack::scalar_dp::{
    bellman_residual, closed_form_policy, closed_form_value, value_iteration, BellmanStage,
    ControlGrid, Grid1D, ScalarModel, ValueTable,
};
use common::*;

const VI_TOL: f64 = 1e-9;
const VI_MAX_SWEEPS: usize = 2000;

fn reference_table() -> &'static ValueTable {
    static TABLE: OnceLock<ValueTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let start = Instant::now();
        let table = value_iteration(
            &scalar_ctx(),
            &Grid1D::reference(),
            &ControlGrid::reference(),
            BellmanStage::Surrogate,
            VI_TOL,
            VI_MAX_SWEEPS,
        )
        .unwrap();
        eprintln!("reference value iteration: {} sweeps in {:?}", table.sweeps, start.elapsed());
        table
    })
}

fn inner_nodes(grid: &Grid1D) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..grid.len())
        .map(move |i| (i, grid.node(i)))
        .filter(|(_, x)| x.abs() <= 0.45 + 1e-12)
}

#[test]
fn inner_region_matches_closed_form() {
    let table = reference_table();
    let du = ControlGrid::reference().spacing();
    for (i, x) in inner_nodes(&table.grid) {
        let gap = (table.values[i] - closed_form_value(x)).abs();
        assert!(gap <= 2e-2, "V gap {gap} at {x}");
        let pol = (table.policy[i] - closed_form_policy(x)).abs();
        assert!(pol <= 2.0 * du, "policy gap {pol} at {x}");
    }
    assert!((table.value_at(0.4) - 2.0).abs() <= 2e-2);
    assert!((table.policy_at(0.4) + 0.8).abs() <= 2.0 * du);
}

#[test]
fn value_table_invariants() {
    let table = reference_table();
    let grid = &table.grid;
    assert!(table.values.iter().all(|&v| v >= 0.0));
    assert!(table.values[grid.nearest(0.0)] <= grid.spacing());
    let n = grid.len();
    for i in 0..n {
        let j = n - 1 - i;
        assert!((table.values[i] - table.values[j]).abs() <= 2.0 * grid.spacing(), "node {i}");
        assert!((table.policy[i] + table.policy[j]).abs() <= 1e-12, "node {i}");
    }
}

#[test]
fn sweeps_are_monotone_from_zero() {
    let model = ScalarModel::from_context(&scalar_ctx(), BellmanStage::Surrogate).unwrap();
    let grid = Grid1D::new(-2.0, 2.0, 401).unwrap();
    let controls = ControlGrid::new(-6.0, 6.0, 241).unwrap().values();
    let mut values = vec![0.0; grid.len()];
    for _ in 0..40 {
        let (next, _) = model.sweep(&grid, &controls, &values);
        for (a, b) in next.iter().zip(&values) {
            assert!(a >= b, "{a} < {b}");
        }
        values = next;
    }
}

#[test]
fn halving_spacing_changes_little() {
    let table = reference_table();
    let fine = value_iteration(
        &scalar_ctx(),
        &Grid1D::new(-2.0, 2.0, 8001).unwrap(),
        &ControlGrid::new(-6.0, 6.0, 4801).unwrap(),
        BellmanStage::Surrogate,
        VI_TOL,
        VI_MAX_SWEEPS,
    )
    .unwrap();
    let change = inner_nodes(&table.grid)
        .map(|(i, x)| (table.values[i] - fine.value_at(x)).abs())
        .fold(0.0f64, f64::max);
    assert!(change < 0.25 * 2e-2, "refinement moved V by {change}");
}

#[test]
fn closed_form_bellman_residuals() {
    let model = ScalarModel::from_context(&scalar_ctx(), BellmanStage::Surrogate).unwrap();
    let res = |x: f64| bellman_residual(closed_form_value, closed_form_policy, &model, x, (-6.0, 6.0));
    for x in [0.1, 0.2, 0.3, 0.4] {
        assert!(res(x) <= 1e-4, "residual {} at {x}", res(x));
    }
    assert!(res(0.3) <= 1e-6);
    assert_eq!(res(0.0), 0.0);
    assert!(res(0.809) <= 0.1);
}
