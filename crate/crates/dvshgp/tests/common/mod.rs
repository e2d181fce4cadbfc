#![allow(dead_code)]

use dvshgp::{DvshgpModel, ExpertParams, ExpertSizing, Partition};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vshgp_data::gen_toy1d;

/// A committee initialized on the normalized 1-D toy problem.
pub fn toy_committee(
    n: usize,
    experts: usize,
    m0: usize,
    u0: usize,
    seed: u64,
) -> DvshgpModel {
    let data = gen_toy1d(n, seed).to_normalized();
    DvshgpModel::init(
        data.x().clone(),
        data.y().clone(),
        experts,
        ExpertSizing { m0, u0 },
        seed,
    )
    .unwrap()
}

/// Synthetic 2-D regression data: inputs uniform on `[-3, 3]^2`, targets a
/// smooth surface plus mild noise.
pub fn plane_data(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
    let y = DVector::from_fn(n, |r, _| {
        let (a, b) = (x[(r, 0)], x[(r, 1)]);
        a.sin() + 0.5 * (0.8 * b).cos() + 0.05 * rng.sample::<f64, _>(StandardNormal)
    });
    (x, y)
}

/// Moves a committee's shared and local parameters off their defaults so
/// gradient tests do not sit at special points (unit kernels, uniform
/// weights). Inducing inputs stay at their k-means positions, which keeps
/// the kernel matrices well conditioned.
pub fn perturb(model: &mut DvshgpModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00d1_5eed);
    let blocks = model.packed_blocks();
    let mut packed = model.packed_params();
    for (name, range) in &blocks {
        let scale = if name.starts_with("lambda") {
            0.3
        } else if name.starts_with("kernel") {
            0.2
        } else if name == "mu0" {
            0.3
        } else {
            0.0
        };
        if scale > 0.0 {
            for i in range.clone() {
                packed[i] += scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    model.set_packed_params(&packed).unwrap();
}

/// A two-expert committee on 2-D data with perturbed parameters, for
/// finite-difference checks.
pub fn perturbed_plane_committee(n: usize, seed: u64) -> DvshgpModel {
    let (x, y) = plane_data(n, seed);
    let mut model =
        DvshgpModel::init(x, y, 2, ExpertSizing { m0: 3, u0: 3 }, seed).unwrap();
    perturb(&mut model, seed);
    model
}

/// A committee whose two experts hold bit-identical copies of the same
/// shard: the dataset is the toy set stacked on top of itself, expert 0
/// owning the first copy and expert 1 the second.
pub fn duplicated_shard_committee(n: usize, seed: u64) -> DvshgpModel {
    let data = gen_toy1d(n, seed).to_normalized();
    let (x1, y1) = (data.x(), data.y());
    let x2 = DMatrix::from_fn(2 * n, 1, |r, c| x1[(r % n, c)]);
    let y2 = DVector::from_fn(2 * n, |r, _| y1[r % n]);
    let mut assignments = vec![0usize; n];
    assignments.extend(vec![1usize; n]);
    let mean = x1.column(0).sum() / n as f64;
    let centroids = DMatrix::from_row_slice(2, 1, &[mean, mean]);
    let partition = Partition::new(assignments, centroids).unwrap();

    let single = DvshgpModel::init(
        x1.clone(),
        y1.clone(),
        1,
        ExpertSizing { m0: 4, u0: 4 },
        seed,
    )
    .unwrap();
    let mut shared = ExpertParams {
        xm: single.expert_xm(0).clone(),
        xu: single.expert_xu(0).clone(),
        log_lambda: single.expert_log_lambda(0).clone(),
    };
    // Nudge the weights off the uniform initial value so gradients are not
    // evaluated at a symmetric point.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in shared.log_lambda.iter_mut() {
        *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
    }
    DvshgpModel::new(
        x2,
        y2,
        single.kernel_f().clone(),
        single.kernel_g().clone(),
        single.mu0() - 0.2,
        partition,
        vec![shared.clone(), shared],
    )
    .unwrap()
}
