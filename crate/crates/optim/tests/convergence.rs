//! End-to-end behavior of the conjugate-gradient driver on larger problems.

use nalgebra::{DMatrix, DVector};
use vshgp_optim::{cgd_maximize, CgdOutcome, OptimizerConfig};

/// Ill-conditioned concave quadratic in 20 dimensions: eigenvalues span four
/// orders of magnitude, which steepest descent alone cannot handle in a
/// reasonable budget but conjugate directions can.
fn make_quadratic(dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let eigs: Vec<f64> = (0..dim)
        .map(|i| 10f64.powf(4.0 * i as f64 / (dim - 1) as f64))
        .collect();
    let a = DMatrix::from_diagonal(&DVector::from_vec(eigs));
    let target = DVector::from_fn(dim, |i, _| ((i + 1) as f64 * 0.37).sin());
    (a, target)
}

#[test]
fn ill_conditioned_quadratic_converges() {
    let dim = 20;
    let (a, target) = make_quadratic(dim);
    let objective = |x: &DVector<f64>| {
        let diff = x - &target;
        let ad = &a * &diff;
        Some((-0.5 * diff.dot(&ad), -ad))
    };
    let x0 = DVector::zeros(dim);
    let res = cgd_maximize(objective, x0, 120, &OptimizerConfig::default()).unwrap();
    assert!(res.value > -1e-8, "value {}", res.value);
    assert!((&res.x - &target).amax() < 1e-4);
}

#[test]
fn runs_are_bitwise_deterministic() {
    let dim = 8;
    let (a, target) = make_quadratic(dim);
    let run = || {
        let objective = |x: &DVector<f64>| {
            let diff = x - &target;
            let ad = &a * &diff;
            Some((-0.5 * diff.dot(&ad), -ad))
        };
        cgd_maximize(objective, DVector::zeros(dim), 25, &OptimizerConfig::default()).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first.x, second.x);
    assert_eq!(first.trace, second.trace);
    assert_eq!(first.value.to_bits(), second.value.to_bits());
}

#[test]
fn stall_in_a_walled_objective_keeps_the_best_point() {
    // Evaluable only on a thin slab; the optimum sits outside it, so line
    // searches eventually fail. The driver must stop gracefully at its best
    // point instead of erroring or looping.
    let objective = |x: &DVector<f64>| {
        let t = x[0];
        (t.abs() < 1.0).then(|| (t, DVector::from_vec(vec![1.0])))
    };
    let res = cgd_maximize(
        objective,
        DVector::from_vec(vec![0.0]),
        50,
        &OptimizerConfig::default(),
    )
    .unwrap();
    assert!(res.outcome == CgdOutcome::Stalled || res.outcome == CgdOutcome::BudgetExhausted);
    assert!(res.value < 1.0, "must stay inside the evaluable slab");
    assert!(res.value > 0.9, "should have pushed close to the wall");
    assert!(res.line_searches <= 50);
}
