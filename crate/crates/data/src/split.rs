//! Seeded train/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{DataError, Dataset};

/// How much of the data becomes the test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Fraction in `[0, 1)` of rows held out, rounded to the nearest count.
    TestFraction(f64),
    /// Exact number of held-out rows, at most `n - 1`.
    TestCount(usize),
}

/// Uniform split without replacement: every row lands in exactly one side,
/// membership is a seeded permutation. The training side is never empty; an
/// empty test side is allowed (fraction 0).
pub fn split(
    dataset: &Dataset,
    spec: SplitSpec,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    let n = dataset.n();
    let test_count = match spec {
        SplitSpec::TestFraction(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(DataError::InvalidSplit {
                    reason: format!("test fraction must lie in [0, 1), got {f}"),
                });
            }
            (f * n as f64).round() as usize
        }
        SplitSpec::TestCount(c) => c,
    };
    if test_count >= n {
        return Err(DataError::InvalidSplit {
            reason: format!("test size {test_count} leaves no training rows out of {n}"),
        });
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let (test_idx, train_idx) = indices.split_at(test_count);

    let tag = |side: &str| format!("{} [{side} split, seed={seed}]", dataset.provenance());
    let train = dataset.subset(train_idx, tag("train"));
    let test = dataset.subset(test_idx, tag("test"));
    Ok((train, test))
}
