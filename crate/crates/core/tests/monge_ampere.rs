use std::f64::consts::TAU;
use std::sync::Arc;

use cyfam::fiber::{FiberGrid, MetricField, TensorField};
use cyfam::linalg::{c, CMat};
use cyfam::ma::*;
use cyfam::torus::PeriodMatrix;
use cyfam::Error;

fn elliptic(points: usize) -> Arc<FiberGrid> {
    FiberGrid::new(PeriodMatrix::from_tau(c(0.0, 1.0)).unwrap(), points).unwrap()
}

fn siegel(points: usize) -> Arc<FiberGrid> {
    FiberGrid::new(PeriodMatrix::new(CMat::identity(2, 2) * c(0.0, 1.0)).unwrap(), points).unwrap()
}

fn one_dim_problem() -> (MongeAmpereProblem, TensorField) {
    let g = elliptic(32);
    let psi = TensorField::scalar_from_fn(g.clone(), |x| c(0.05 * (TAU * x[0]).cos(), 0.0));
    (MongeAmpereProblem::from_potential(g, &psi).unwrap(), psi)
}

fn two_dim_problem() -> (MongeAmpereProblem, TensorField) {
    let g = siegel(16);
    let psi = TensorField::scalar_from_fn(g.clone(), |x| c(0.03 * ((TAU * x[0]).cos() + (TAU * x[3]).cos()), 0.0));
    (MongeAmpereProblem::from_potential(g, &psi).unwrap(), psi)
}

#[test]
fn flat_reference_needs_at_most_one_step() {
    let g = elliptic(16);
    let p = MongeAmpereProblem::new(MetricField::flat(g)).unwrap();
    let sol = solve_ricci_flat(&p, &SolverOptions::default()).unwrap();
    assert!(sol.iterations <= 1);
    assert!(sol.potential.max_abs() < 1e-14);
    assert!(sol.b.abs() < 1e-14);
}

#[test]
fn one_dimensional_recovery() {
    let (p, psi) = one_dim_problem();
    let sol = solve_ricci_flat(&p, &SolverOptions { tol: 1e-12, ..Default::default() }).unwrap();
    assert!(sol.iterations <= 2, "{} iterations", sol.iterations);
    let err = sol.potential.add(&psi).unwrap().max_abs();
    assert!(err <= 1e-9, "sup error {err:e}");
    assert!(sol.b.abs() < 1e-12);
}

#[test]
fn two_dimensional_recovery() {
    let (p, psi) = two_dim_problem();
    let sol = solve_ricci_flat(&p, &SolverOptions { tol: 1e-12, ..Default::default() }).unwrap();
    assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
    // measured count, frozen as a regression value
    assert_eq!(sol.iterations, 5);
    let err = sol.potential.add(&psi).unwrap().max_abs();
    assert!(err <= 1e-8, "sup error {err:e}");
}

#[test]
fn residual_examples() {
    let (p, psi) = one_dim_problem();
    let zero = TensorField::zeros(p.grid().clone(), vec![]);
    // det g0 - det g_flat = Hess psi, whose sup is 0.05 pi^2
    let r0 = ma_residual(&zero, &p).unwrap();
    assert!((r0 - 0.05 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    assert!(ma_residual(&psi.scale(c(-1.0, 0.0)), &p).unwrap() < 1e-12);
    let other = TensorField::zeros(elliptic(16), vec![]);
    assert!(matches!(ma_residual(&other, &p), Err(Error::ShapeMismatch(_))));
}

#[test]
fn solution_is_independent_of_damping_schedule() {
    let (p, _) = two_dim_problem();
    let a = solve_ricci_flat(&p, &SolverOptions { tol: 1e-12, ..Default::default() }).unwrap();
    let b = solve_ricci_flat(
        &p,
        &SolverOptions { tol: 1e-12, max_iter: 60, warmup_steps: 3, warmup_factor: 0.5 },
    )
    .unwrap();
    assert!(b.trace[0].damping <= 0.5);
    assert!(a.potential.max_abs_diff(&b.potential).unwrap() <= 1e-9);
}

#[test]
fn newton_decrement_is_monotone() {
    let (p, _) = two_dim_problem();
    let sol = solve_ricci_flat(&p, &SolverOptions { tol: 1e-12, ..Default::default() }).unwrap();
    for w in sol.trace.windows(2) {
        assert!(w[1].decrement <= w[0].decrement * (1.0 + 1e-12), "{:?}", sol.trace);
    }
}

#[test]
fn iteration_cap_reports_trace() {
    let (p, _) = two_dim_problem();
    match solve_ricci_flat(&p, &SolverOptions { tol: 1e-12, max_iter: 1, ..Default::default() }) {
        Err(Error::SolverFailure { iterations, trace, .. }) => {
            assert_eq!(iterations, 1);
            assert_eq!(trace.len(), 1);
        }
        other => panic!("expected solver failure, got {other:?}"),
    }
}

#[test]
fn tolerance_floor_is_enforced() {
    let (p, _) = one_dim_problem();
    assert!(solve_ricci_flat(&p, &SolverOptions { tol: 1e-13, ..Default::default() }).is_err());
}

#[test]
fn trace_csv_has_one_row_per_step() {
    let (p, _) = two_dim_problem();
    let sol = solve_ricci_flat(&p, &SolverOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&sol.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), sol.trace.len() + 1);
    assert!(text.starts_with("iteration,residual,damping,decrement"));
}
