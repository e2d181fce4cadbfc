//! The stochastic training loop end to end.

mod common;

use svshgp::{
    full_elbo, train_stochastic, StochasticConfig, SvshgpModel, VariationalUpdate,
};
use vshgp_data::gen_toy1d;

fn toy_model(n: usize, m: usize, u: usize, seed: u64) -> SvshgpModel {
    let data = gen_toy1d(n, seed).to_normalized();
    SvshgpModel::init(data.x().clone(), data.y().clone(), m, u, seed).unwrap()
}

fn short_config(batch_size: usize, iterations: usize, seed: u64) -> StochasticConfig {
    StochasticConfig {
        batch_size,
        iterations,
        seed,
        ..StochasticConfig::default()
    }
}

#[test]
fn zero_iterations_return_the_model_unchanged() {
    let model = toy_model(60, 6, 5, 0);
    let result = train_stochastic(&model, &short_config(20, 0, 0)).unwrap();
    assert_eq!(
        result.model.packed_hypers().as_slice(),
        model.packed_hypers().as_slice()
    );
    assert_eq!(
        result.model.q().packed().as_slice(),
        model.q().packed().as_slice()
    );
    assert!(result.trace.is_empty());
    assert!(result.full_trace.is_empty());
}

#[test]
fn training_is_deterministic_per_seed() {
    let model = toy_model(80, 6, 5, 1);
    let config = short_config(25, 30, 7);
    let a = train_stochastic(&model, &config).unwrap();
    let b = train_stochastic(&model, &config).unwrap();
    for (pa, pb) in a.trace.iter().zip(&b.trace) {
        assert_eq!(pa.iteration, pb.iteration);
        assert_eq!(pa.value.to_bits(), pb.value.to_bits());
    }
    assert_eq!(
        a.model.packed_hypers().as_slice(),
        b.model.packed_hypers().as_slice()
    );
    assert_eq!(
        a.model.q().packed().as_slice(),
        b.model.q().packed().as_slice()
    );

    let other_seed = train_stochastic(&model, &short_config(25, 30, 8)).unwrap();
    let same: bool = a
        .trace
        .iter()
        .zip(&other_seed.trace)
        .all(|(pa, pb)| pa.value.to_bits() == pb.value.to_bits());
    assert!(!same, "different seeds should draw different batches");
}

#[test]
fn natural_gradient_training_improves_the_full_bound() {
    let model = toy_model(200, 10, 8, 2);
    let before = full_elbo(&model).unwrap();
    let result = train_stochastic(&model, &short_config(40, 80, 2)).unwrap();
    let after = full_elbo(&result.model).unwrap();
    assert!(
        after > before,
        "natural-gradient run went from {before} to {after}"
    );
    assert_eq!(result.trace.len(), 80);
    assert!(result.trace.iter().all(|p| p.value.is_finite()));
    // Wall-clock stamps never run backwards.
    for w in result.trace.windows(2) {
        assert!(w[1].seconds >= w[0].seconds);
    }
}

#[test]
fn adam_only_training_improves_the_full_bound() {
    let model = toy_model(200, 10, 8, 3);
    let before = full_elbo(&model).unwrap();
    let config = StochasticConfig {
        batch_size: 40,
        iterations: 120,
        seed: 3,
        update: VariationalUpdate::AdamOnly,
        ..StochasticConfig::default()
    };
    let result = train_stochastic(&model, &config).unwrap();
    let after = full_elbo(&result.model).unwrap();
    assert!(after > before, "Adam-only run went from {before} to {after}");
}

#[test]
fn full_bound_evaluations_are_collected_on_schedule() {
    let model = toy_model(90, 6, 5, 4);
    let config = StochasticConfig {
        batch_size: 30,
        iterations: 45,
        seed: 4,
        full_eval_every: Some(20),
        ..StochasticConfig::default()
    };
    let result = train_stochastic(&model, &config).unwrap();
    let iterations: Vec<usize> = result.full_trace.iter().map(|(t, _)| *t).collect();
    assert_eq!(iterations, vec![0, 20, 40, 44]);
    assert!(result.full_trace.iter().all(|(_, v)| v.is_finite()));
}

#[test]
fn trained_state_remains_valid() {
    // Every accepted natural step must leave factorizable covariances; the
    // final state revalidates cleanly.
    let model = toy_model(150, 8, 6, 5);
    let result = train_stochastic(&model, &short_config(30, 60, 5)).unwrap();
    result.model.validate().unwrap();
    result.model.q().validate().unwrap();
}

#[test]
fn oversized_batches_are_clamped_to_the_dataset() {
    // |B| larger than n degenerates into full-batch training rather than
    // failing.
    let model = toy_model(25, 4, 4, 6);
    let result = train_stochastic(&model, &short_config(400, 10, 6)).unwrap();
    assert_eq!(result.trace.len(), 10);
    let full = full_elbo(&model).unwrap();
    // First recorded estimate is the full-batch bound at the start state.
    assert!(
        (result.trace[0].value - full).abs() < 1e-9,
        "clamped batch estimate {} vs full bound {full}",
        result.trace[0].value
    );
}
