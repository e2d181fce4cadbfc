//! Synthetic heteroscedastic regression problems.
//!
//! Both generators share one noise profile whose standard deviation rises
//! smoothly with its argument and oscillates, so the noise level genuinely
//! depends on location — the regime these models exist for.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Dataset;

/// Unnormalized sinc: `sin(x)/x`, continued with 1 at the origin.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-9 {
        // Series continuation; at this magnitude the quadratic term is below
        // double precision anyway.
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Noise standard deviation profile:
/// `0.05 + 0.2 (1 + sin 2t) / (1 + exp(-0.2 t))`.
/// At t = 0 this is 0.15; it oscillates and grows toward the right.
pub fn toy_noise_sd(t: f64) -> f64 {
    0.05 + 0.2 * (1.0 + (2.0 * t).sin()) / (1.0 + (-0.2 * t).exp())
}

/// 1-D problem: `x ~ U[-10, 10]`, `y = sinc(x) + eps`,
/// `eps ~ N(0, toy_noise_sd(x)^2)`. Per point the stream draws the input
/// first and the unit normal second, so datasets of different sizes share a
/// prefix for the same seed. Ground truth (`f_true`, `noise_sd_true`) rides
/// along for evaluation.
pub fn gen_toy1d(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    for i in 0..n {
        let xi: f64 = rng.random_range(-10.0..=10.0);
        let z: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = xi;
        f[i] = sinc(xi);
        sd[i] = toy_noise_sd(xi);
        y[i] = f[i] + sd[i] * z;
    }
    Dataset::with_truth(x, y, Some(f), Some(sd), format!("gen_toy1d(n={n}, seed={seed})"))
        .expect("generated data is finite and consistent")
}

/// 2-D problem: `x ~ U[-10, 10]^2`, latent `f(x) = sinc(0.1 x1 x2)`, noise
/// profile evaluated at the same product `0.1 x1 x2`. Stream order per point:
/// x1, x2, unit normal.
pub fn gen_sinc2d(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    for i in 0..n {
        let x1: f64 = rng.random_range(-10.0..=10.0);
        let x2: f64 = rng.random_range(-10.0..=10.0);
        let z: f64 = rng.sample(StandardNormal);
        let t = 0.1 * x1 * x2;
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        f[i] = sinc(t);
        sd[i] = toy_noise_sd(t);
        y[i] = f[i] + sd[i] * z;
    }
    Dataset::with_truth(x, y, Some(f), Some(sd), format!("gen_sinc2d(n={n}, seed={seed})"))
        .expect("generated data is finite and consistent")
}

/// Tensor-grid test set over `[-10, 10]^2` with `points_per_axis^2` rows
/// (70 per axis gives the conventional 4900-point evaluation grid). Noisy
/// targets are drawn with the same profile as [`gen_sinc2d`]; row order is
/// x1-major (the first axis varies slowest).
pub fn gen_sinc2d_grid(points_per_axis: usize, seed: u64) -> Dataset {
    let axis = linspace(-10.0, 10.0, points_per_axis);
    let n = points_per_axis * points_per_axis;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    for (i, &x1) in axis.iter().enumerate() {
        for (j, &x2) in axis.iter().enumerate() {
            let row = i * points_per_axis + j;
            let z: f64 = rng.sample(StandardNormal);
            let t = 0.1 * x1 * x2;
            x[(row, 0)] = x1;
            x[(row, 1)] = x2;
            f[row] = sinc(t);
            sd[row] = toy_noise_sd(t);
            y[row] = f[row] + sd[row] * z;
        }
    }
    Dataset::with_truth(
        x,
        y,
        Some(f),
        Some(sd),
        format!("gen_sinc2d_grid(points_per_axis={points_per_axis}, seed={seed})"),
    )
    .expect("generated data is finite and consistent")
}

/// Evenly spaced single-column input matrix, for prediction sweeps.
pub fn grid_1d(lo: f64, hi: f64, count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(count, 1, |i, _| {
        if count == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    })
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if count == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}
