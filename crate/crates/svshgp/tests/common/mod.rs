//! Shared builders for randomized stochastic-model test instances.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svshgp::{ExplicitVariational, SvshgpModel};
use vshgp::VshgpModel;
use vshgp_kernel::KernelParams;

/// Random inducing locations with one point per stratum of `[-3, 3]` along
/// the first axis. Guarantees pairwise separation — as k-means placement
/// would — so the inducing kernel matrices stay away from singularity. A
/// coincident pair would make the induced moments, and through `exp` the
/// noise, numerically meaningless.
fn scattered_inducing(k: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let width = 6.0 / k as f64;
    DMatrix::from_fn(k, d, |i, j| {
        if j == 0 {
            -3.0 + width * (i as f64 + 0.5) + rng.random_range(-0.35..0.35) * width
        } else {
            rng.random_range(-3.0..3.0)
        }
    })
}

/// A reproducible random collapsed model: inputs in `[-3, 3]^d`, a noisy
/// sine target, kernel parameters scattered around their defaults, and
/// variational weights scattered around `1/2`.
pub fn random_collapsed(n: usize, m: usize, u: usize, d: usize, seed: u64) -> VshgpModel {
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
    let xm = scattered_inducing(m, d, &mut rng);
    let xu = scattered_inducing(u, d, &mut rng);
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

/// A random covariance with eigenvalues bounded away from zero.
pub fn random_covariance(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.4
}

/// A freely scattered variational state: means around zero (f-block) and
/// around the prior mean (g-block), random well-conditioned covariances.
pub fn random_state(m: usize, u: usize, mu0: f64, rng: &mut ChaCha8Rng) -> ExplicitVariational {
    let mu_m = DVector::from_fn(m, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal));
    let mu_u = DVector::from_fn(u, |_, _| mu0 + 0.5 * rng.sample::<f64, _>(StandardNormal));
    let sigma_m = random_covariance(m, rng);
    let sigma_u = random_covariance(u, rng);
    ExplicitVariational::from_covariances(mu_m, &sigma_m, mu_u, &sigma_u)
        .expect("random covariances are positive definite")
}

/// A random uncollapsed model: collapsed hyperparameters plus a scattered
/// explicit variational state.
pub fn random_model(n: usize, m: usize, u: usize, d: usize, seed: u64) -> SvshgpModel {
    let collapsed = random_collapsed(n, m, u, d, seed);
    let mut model =
        SvshgpModel::with_prior_state(&collapsed).expect("prior state matches the model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let q = random_state(model.m(), model.u(), model.mu0(), &mut rng);
    model.set_q(q).expect("random state is valid");
    model
}

/// Like [`random_collapsed`] with `d = 1`, but with the inducing sets on
/// uniform grids so the kernel matrices stay well conditioned — for tests
/// that assert cancellation to near machine precision.
pub fn separated_collapsed(n: usize, m: usize, u: usize, seed: u64) -> VshgpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
    let y = DVector::from_fn(n, |i, _| {
        let z: f64 = rng.sample(StandardNormal);
        x[(i, 0)].sin() + 0.1 * z
    });
    let log_sf2 = 0.3 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lf = DVector::from_fn(1, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
    let log_sg2 = -0.5 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lg = DVector::from_fn(1, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let mu0 = -1.2 + 0.1 * rng.sample::<f64, _>(StandardNormal);
    let log_lambda = DVector::from_fn(n, |_, _| {
        0.5f64.ln() + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    let grid = |k: usize| {
        DMatrix::from_fn(k, 1, |i, _| -3.0 + 6.0 * (i as f64 + 0.5) / k as f64)
    };
    VshgpModel::new(
        x,
        y,
        KernelParams::from_log(log_sf2, log_lf),
        KernelParams::from_log(log_sg2, log_lg),
        mu0,
        grid(m),
        grid(u),
        log_lambda,
    )
    .expect("grid test model must be valid")
}

/// The index list `[0, n)`.
pub fn full_batch(n: usize) -> Vec<usize> {
    (0..n).collect()
}
