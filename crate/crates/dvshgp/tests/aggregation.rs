//! Committee aggregation against independently transcribed scalar oracles.
//!
//! The frozen literals below were computed outside this codebase from the
//! entropy-weighted committee rules: weights `w_i = (ln prior - ln var_i) /
//! 2`, precision `sum(w_i / var_i) + (1 - sum(w_i)) / prior`, mean
//! `var * (sum(w_i mu_i / var_i) + (1 - sum(w_i)) prior_mean / prior)`.

use dvshgp::{aggregate_f, aggregate_g};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
    let denom = want.abs().max(1e-300);
    assert!(
        ((got - want) / denom).abs() <= tol,
        "{what}: got {got}, want {want}"
    );
}

#[test]
fn three_experts_match_the_frozen_mean_function_oracle() {
    let agg = aggregate_f(&[1.0, 2.0, 0.0], &[0.5, 1.0, 2.0], 2.0).unwrap();
    assert_rel(agg.weights[0], 0.693_147_180_559_945_3, 1e-12, "w0");
    assert_rel(agg.weights[1], 0.346_573_590_279_972_64, 1e-12, "w1");
    assert_eq!(agg.weights[2], 0.0, "an expert at the prior has no vote");
    assert_rel(agg.variance, 0.583_768_583_315_020_4, 1e-12, "variance");
    assert_rel(agg.mean, 1.213_912_642_872_839_5, 1e-12, "mean");
}

#[test]
fn two_experts_match_the_frozen_log_noise_oracle() {
    let agg = aggregate_g(&[-1.0, 0.4], &[0.8, 1.5], -0.7, 2.0).unwrap();
    assert_rel(agg.weights[0], 0.458_145_365_937_077_5, 1e-12, "w0");
    assert_rel(agg.weights[1], 0.143_841_036_225_890_45, 1e-12, "w1");
    assert_rel(agg.variance, 1.152_628_095_720_975_4, 1e-12, "variance");
    assert_rel(agg.mean, -0.776_443_546_671_299, 1e-12, "mean");
}

#[test]
fn a_single_expert_at_the_prior_reverts_to_the_prior() {
    let f = aggregate_f(&[123.0], &[2.0], 2.0).unwrap();
    assert_eq!(f.mean, 0.0);
    assert_eq!(f.variance, 2.0);
    let g = aggregate_g(&[123.0], &[0.7], -1.9, 0.7).unwrap();
    assert_eq!(g.mean, -1.9);
    assert_eq!(g.variance, 0.7);
}

#[test]
fn identical_experts_recover_their_common_mean() {
    let means = [1.7; 4];
    let vars = [0.3; 4];
    let agg = aggregate_f(&means, &vars, 2.0).unwrap();
    assert_rel(agg.mean, 1.7, 1e-12, "common mean");
    assert!(agg.weights.iter().all(|&w| w == agg.weights[0]));
    assert!(agg.variance < 2.0);
}

#[test]
fn a_zero_prior_mean_reduces_the_log_noise_rule_to_the_mean_rule() {
    let means = [0.3, -0.9, 1.4, 0.0];
    let vars = [0.4, 1.1, 0.9, 2.4];
    let f = aggregate_f(&means, &vars, 1.6).unwrap();
    let g = aggregate_g(&means, &vars, 0.0, 1.6).unwrap();
    assert_eq!(f.mean.to_bits(), g.mean.to_bits());
    assert_eq!(f.variance.to_bits(), g.variance.to_bits());
    assert_eq!(f.weights, g.weights);
}

#[test]
fn weights_are_nonnegative_whenever_experts_contract_from_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let prior = rng.random_range(0.1..10.0);
        let k = rng.random_range(1..6);
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let vars: Vec<f64> = (0..k)
            .map(|_| prior * rng.random_range(0.01..1.0_f64))
            .collect();
        let agg = aggregate_f(&means, &vars, prior).unwrap();
        assert!(agg.weights.iter().all(|&w| w >= 0.0));
        assert!(
            agg.variance <= prior * (1.0 + 1e-12),
            "aggregated variance {} above prior {prior}",
            agg.variance
        );
    }
}

#[test]
fn overdispersed_experts_get_signed_weights_but_never_collapse_the_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let prior = rng.random_range(0.1..10.0);
        let k = rng.random_range(1..8);
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let vars: Vec<f64> = (0..k)
            .map(|_| prior * rng.random_range(1.0..1.0e6_f64))
            .collect();
        let agg = aggregate_f(&means, &vars, prior).unwrap();
        assert!(agg.weights.iter().all(|&w| w <= 0.0));
        // The prior's residual weight grows to compensate, so the
        // aggregate never becomes more diffuse than the prior.
        assert!(agg.variance <= prior * (1.0 + 1e-12));
    }
}
