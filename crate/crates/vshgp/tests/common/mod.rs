//! Shared builders for randomized test instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vshgp::VshgpModel;
use vshgp_kernel::KernelParams;

/// A reproducible random model state: inputs in `[-3, 3]^d`, a noisy sine
/// target, kernel parameters scattered around their defaults, and
/// variational weights scattered around `1/2`.
pub fn random_model(n: usize, m: usize, u: usize, d: usize, seed: u64) -> VshgpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
    let y = DVector::from_fn(n, |i, _| {
        let z: f64 = rng.sample(StandardNormal);
        x[(i, 0)].sin() + 0.1 * z
    });
    let log_sf2 = 0.3 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lf = DVector::from_fn(d, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
    let log_sg2 = -0.5 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lg = DVector::from_fn(d, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let mu0 = -1.2 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lambda = DVector::from_fn(n, |_, _| {
        0.5f64.ln() + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    let xm = DMatrix::from_fn(m, d, |_, _| rng.random_range(-3.0..3.0));
    let xu = DMatrix::from_fn(u, d, |_, _| rng.random_range(-3.0..3.0));
    VshgpModel::new(
        x,
        y,
        KernelParams::from_log(log_sf2, log_lf),
        KernelParams::from_log(log_sg2, log_lg),
        mu0,
        xm,
        xu,
        log_lambda,
    )
    .expect("random test model must be valid")
}
