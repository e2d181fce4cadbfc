//! Seeded k-means with careful-seeding initialization.
//!
//! Used both to place inducing points (cluster centroids cover the input
//! space) and to partition data across local experts.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::DataError;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// One centroid per row, `k x d`.
    pub centroids: DMatrix<f64>,
    /// Cluster index per input row.
    pub assignments: Vec<usize>,
    /// Lloyd iterations actually run.
    pub iterations: usize,
}

const MAX_LLOYD_ITERS: usize = 100;

/// Clusters the rows of `points` into `k` groups: k-means++ seeding followed
/// by Lloyd's iterations until the assignment fixpoint or 100 rounds. Empty
/// clusters are re-seeded at the point currently farthest from its centroid,
/// so exactly `k` non-empty clusters come back. Deterministic given `seed`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KmeansResult, DataError> {
    let n = points.nrows();
    if k == 0 {
        return Err(DataError::InvalidClustering {
            reason: "cluster count must be positive".into(),
        });
    }
    if k > n {
        return Err(DataError::InvalidClustering {
            reason: format!("cannot form {k} clusters from {n} points"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeding(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut iterations = 0;

    for iter in 0..MAX_LLOYD_ITERS {
        iterations = iter + 1;
        // Assignment step.
        let mut changed = false;
        let mut dist_to_own = vec![0.0f64; n];
        for i in 0..n {
            let (best, dist) = nearest_centroid(points, i, &centroids, assignments[i]);
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
            dist_to_own[i] = dist;
        }
        if iter > 0 && !changed {
            break;
        }

        // Update step.
        let mut counts = vec![0usize; k];
        let mut sums: DMatrix<f64> = DMatrix::zeros(k, points.ncols());
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for j in 0..points.ncols() {
                sums[(c, j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..points.ncols() {
                    centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed a dead cluster at the worst-served point, but only
                // steal from clusters that keep at least one member —
                // otherwise repairs just shuffle the starvation around.
                // Since n >= k, a donor with two or more members must exist.
                let farthest = (0..n)
                    .filter(|&i| counts[assignments[i]] >= 2)
                    .max_by(|&a, &b| dist_to_own[a].total_cmp(&dist_to_own[b]))
                    .expect("some cluster has at least two members");
                for j in 0..points.ncols() {
                    centroids[(c, j)] = points[(farthest, j)];
                }
                counts[assignments[farthest]] -= 1;
                counts[c] = 1;
                assignments[farthest] = c;
                dist_to_own[farthest] = 0.0;
            }
        }
    }

    Ok(KmeansResult {
        centroids,
        assignments,
        iterations,
    })
}

/// k-means++ : the first centroid is uniform, each next one is drawn with
/// probability proportional to the squared distance to the nearest centroid
/// chosen so far.
fn plus_plus_seeding(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));

    let mut nearest_sq = DVector::from_fn(n, |i, _| row_dist_sq(points, i, &centroids, 0));
    for c in 1..k {
        let total: f64 = nearest_sq.sum();
        let choice = if total > 0.0 {
            let weights = WeightedIndex::new(nearest_sq.iter().copied())
                .expect("weights are non-negative with positive sum");
            rng.sample(&weights)
        } else {
            // All remaining points coincide with chosen centroids.
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from(&points.row(choice));
        for i in 0..n {
            let dist = row_dist_sq(points, i, &centroids, c);
            if dist < nearest_sq[i] {
                nearest_sq[i] = dist;
            }
        }
    }
    centroids
}

/// Closest centroid, breaking exact distance ties toward `current` so a
/// point handed to a re-seeded cluster is not stolen back by an equally
/// distant earlier centroid (coincident points would otherwise starve
/// repaired clusters forever).
fn nearest_centroid(
    points: &DMatrix<f64>,
    i: usize,
    centroids: &DMatrix<f64>,
    current: usize,
) -> (usize, f64) {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for c in 0..centroids.nrows() {
        let dist = row_dist_sq(points, i, centroids, c);
        if dist < best_dist || (dist == best_dist && c == current) {
            best = c;
            best_dist = dist;
        }
    }
    (best, best_dist)
}

fn row_dist_sq(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..points.ncols() {
        let diff = points[(i, j)] - centroids[(c, j)];
        acc += diff * diff;
    }
    acc
}
