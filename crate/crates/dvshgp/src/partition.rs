//! Disjoint k-means partitioning of the training set into expert shards.

use nalgebra::DMatrix;
use vshgp_data::kmeans;

use crate::DvshgpError;

/// A disjoint assignment of training points to experts, together with the
/// centroid that represents each expert's region.
///
/// Every point belongs to exactly one expert and every expert is non-empty;
/// [`kmeans_partition`] additionally guarantees a minimum shard size by
/// merging undersized clusters into their nearest neighbor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Partition {
    assignments: Vec<usize>,
    centroids: DMatrix<f64>,
}

impl Partition {
    /// Wraps explicit assignments and centroids, validating that the
    /// assignments index the centroid rows and leave no expert empty.
    pub fn new(assignments: Vec<usize>, centroids: DMatrix<f64>) -> Result<Self, DvshgpError> {
        let partition = Partition {
            assignments,
            centroids,
        };
        partition.validate()?;
        Ok(partition)
    }

    /// Checks the structural invariants; deserialized partitions should be
    /// re-checked with this.
    pub fn validate(&self) -> Result<(), DvshgpError> {
        let k = self.centroids.nrows();
        if k == 0 {
            return Err(DvshgpError::InvalidModel {
                reason: "partition has no experts".to_string(),
            });
        }
        if self.assignments.is_empty() {
            return Err(DvshgpError::InvalidModel {
                reason: "partition assigns no points".to_string(),
            });
        }
        if !self.centroids.iter().all(|v| v.is_finite()) {
            return Err(DvshgpError::InvalidModel {
                reason: "partition centroids contain non-finite entries".to_string(),
            });
        }
        let mut sizes = vec![0usize; k];
        for (i, &a) in self.assignments.iter().enumerate() {
            if a >= k {
                return Err(DvshgpError::InvalidModel {
                    reason: format!("point {i} is assigned to expert {a}, but only {k} exist"),
                });
            }
            sizes[a] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(DvshgpError::InvalidModel {
                reason: format!("expert {empty} has no points"),
            });
        }
        Ok(())
    }

    /// Number of experts (clusters) in the partition.
    pub fn experts(&self) -> usize {
        self.centroids.nrows()
    }

    /// Expert index per training point.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// One centroid per expert, `experts x d`.
    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.centroids
    }

    /// Shard sizes in expert order.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.experts()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Indices of the points in expert `i`, in ascending dataset order.
    pub fn members(&self, i: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == i)
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// Partitions the rows of `x` into at most `experts` disjoint shards of at
/// least `min_points` points each.
///
/// Runs seeded k-means (careful seeding plus Lloyd's iterations to the
/// assignment fixpoint or 100 rounds), then repairs undersized clusters:
/// while any shard holds fewer than `min_points` points, the smallest such
/// shard is dissolved into the cluster with the nearest centroid and that
/// cluster's centroid is recomputed from its enlarged membership. The
/// returned partition therefore may hold fewer than `experts` shards; its
/// [`Partition::experts`] reports the effective count.
///
/// Deterministic given `seed`. Fails when `experts` is zero or exceeds the
/// number of points, or when the dataset itself is smaller than
/// `min_points`.
pub fn kmeans_partition(
    x: &DMatrix<f64>,
    experts: usize,
    min_points: usize,
    seed: u64,
) -> Result<Partition, DvshgpError> {
    let n = x.nrows();
    if min_points > n {
        return Err(DvshgpError::InvalidConfig {
            reason: format!(
                "every expert needs at least {min_points} points, but the \
                 dataset has only {n}"
            ),
        });
    }
    let km = kmeans(x, experts, seed)?;
    let mut assignments = km.assignments;
    let mut centroids = km.centroids;

    loop {
        let k = centroids.nrows();
        if k == 1 {
            break;
        }
        let sizes = cluster_sizes(&assignments, k);
        let victim = match (0..k)
            .filter(|&c| sizes[c] < min_points)
            .min_by_key(|&c| (sizes[c], c))
        {
            Some(c) => c,
            None => break,
        };

        // Nearest other centroid absorbs the undersized shard.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for c in 0..k {
            if c == victim {
                continue;
            }
            let d2 = (centroids.row(c) - centroids.row(victim)).norm_squared();
            if d2 < best {
                best = d2;
                target = c;
            }
        }

        for a in assignments.iter_mut() {
            if *a == victim {
                *a = target;
            }
        }
        let keep: Vec<usize> = (0..k).filter(|&c| c != victim).collect();
        centroids = centroids.select_rows(keep.iter());
        for a in assignments.iter_mut() {
            if *a > victim {
                *a -= 1;
            }
        }
        let merged = if target > victim { target - 1 } else { target };
        recompute_centroid(x, &assignments, merged, &mut centroids);
    }

    Ok(Partition {
        assignments,
        centroids,
    })
}

fn cluster_sizes(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    sizes
}

fn recompute_centroid(
    x: &DMatrix<f64>,
    assignments: &[usize],
    cluster: usize,
    centroids: &mut DMatrix<f64>,
) {
    let d = x.ncols();
    let mut mean = vec![0.0f64; d];
    let mut count = 0usize;
    for (i, &a) in assignments.iter().enumerate() {
        if a == cluster {
            for j in 0..d {
                mean[j] += x[(i, j)];
            }
            count += 1;
        }
    }
    for (j, v) in mean.iter().enumerate() {
        centroids[(cluster, j)] = v / count as f64;
    }
}
