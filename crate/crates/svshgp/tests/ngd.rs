//! Natural-gradient steps against the closed-form optimum of the f-block.

mod common;

use common::{full_batch, random_model, random_state, separated_collapsed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svshgp::{
    batch_gradients, current_noise, full_elbo, natural_block_step, natural_step, q_star_fm,
    ExplicitVariational, SvshgpModel,
};
use vshgp::elbo;

#[test]
fn unit_step_on_the_f_block_lands_at_the_closed_form_optimum() {
    // With the likelihood Gaussian in f, the bound is linear in the f-block
    // expectation parameters, so a single unit natural step from any start
    // reaches the optimum exactly.
    for seed in 0..5 {
        let model = random_model(12, 4, 3, 2, seed);
        let batch = full_batch(model.n());
        let (_, grads) = batch_gradients(&model, &batch).unwrap();
        let (mu_new, l_new) = natural_block_step(
            model.q().mu_m(),
            model.q().l_m(),
            &grads.mu_m,
            &grads.sigma_m,
            1.0,
        )
        .expect("unit step on the f-block is always feasible");

        let r = current_noise(&model).unwrap();
        let (mu_star, sigma_star) =
            q_star_fm(model.x(), model.y(), model.xm(), model.kernel_f(), &r).unwrap();

        let mu_rel = (&mu_new - &mu_star).norm() / mu_star.norm().max(1.0);
        let sigma_new = &l_new * l_new.transpose();
        let sigma_rel = (&sigma_new - &sigma_star).norm() / sigma_star.norm();
        assert!(
            mu_rel < 1e-8,
            "seed {seed}: mean landed {mu_rel:.3e} away from the optimum"
        );
        assert!(
            sigma_rel < 1e-8,
            "seed {seed}: covariance landed {sigma_rel:.3e} away from the optimum"
        );
    }
}

#[test]
fn repeated_unit_f_steps_hold_the_bound_at_the_collapsed_value() {
    // Full batch, unit step, f-block only: after every step the factorized
    // bound must sit on the collapsed bound of the matching weight state,
    // because the f-block re-solves its subproblem exactly each time.
    let collapsed = separated_collapsed(10, 3, 3, 77);
    let f_v = elbo(&collapsed).unwrap().total();
    let mut model = SvshgpModel::from_collapsed(&collapsed).unwrap();

    // Scatter the f-block away from the optimum, keeping the g-block.
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let scattered = random_state(model.m(), model.u(), model.mu0(), &mut rng);
    let q = model.q().clone();
    model
        .set_q(
            ExplicitVariational::new(
                scattered.mu_m().clone(),
                scattered.l_m().clone(),
                q.mu_u().clone(),
                q.l_u().clone(),
            )
            .unwrap(),
        )
        .unwrap();
    assert!(full_elbo(&model).unwrap() < f_v);

    let batch = full_batch(model.n());
    for step in 0..2 {
        let (_, grads) = batch_gradients(&model, &batch).unwrap();
        let (mu_new, l_new) = natural_block_step(
            model.q().mu_m(),
            model.q().l_m(),
            &grads.mu_m,
            &grads.sigma_m,
            1.0,
        )
        .unwrap();
        let q = model.q().clone();
        model
            .set_q(ExplicitVariational::new(mu_new, l_new, q.mu_u().clone(), q.l_u().clone()).unwrap())
            .unwrap();
        let f = full_elbo(&model).unwrap();
        let rel = ((f - f_v) / f_v.abs().max(1.0)).abs();
        assert!(
            rel < 1e-8,
            "step {step}: bound {f} vs collapsed value {f_v} (rel {rel:.3e})"
        );
    }
}

#[test]
fn small_steps_on_both_blocks_increase_the_bound() {
    // A short natural step along the full-batch gradient from a scattered
    // state must improve the bound (it only fails at a stationary point).
    for seed in [1u64, 7, 19] {
        let mut model = random_model(11, 3, 4, 1, seed);
        let batch = full_batch(model.n());
        let before = full_elbo(&model).unwrap();
        let (_, grads) = batch_gradients(&model, &batch).unwrap();
        let stepped = natural_step(model.q(), &grads, 0.01).unwrap();
        model.set_q(stepped).unwrap();
        let after = full_elbo(&model).unwrap();
        assert!(
            after > before,
            "seed {seed}: bound fell from {before} to {after}"
        );
    }
}

#[test]
fn accepted_steps_keep_covariances_factorizable() {
    // Walking the schedule from a scattered state: every accepted state
    // must pass validation (positive-definite covariances) without repair.
    let mut model = random_model(10, 3, 3, 2, 5);
    let batch = full_batch(model.n());
    for t in 0..10 {
        let (_, grads) = batch_gradients(&model, &batch).unwrap();
        let gamma = (1e-4_f64).powf(1.0 - t as f64 / 9.0) * 0.1_f64.powf(t as f64 / 9.0);
        let stepped = natural_step(model.q(), &grads, gamma.min(1.0)).unwrap();
        stepped.validate().unwrap();
        model.set_q(stepped).unwrap();
    }
}
