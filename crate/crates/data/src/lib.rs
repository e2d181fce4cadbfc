//! Data plumbing for the heteroscedastic GP toolkit: CSV ingestion, synthetic
//! generators with location-dependent noise, zero-mean/unit-variance
//! normalization, seeded train/test splits, k-means clustering, and the
//! SMSE/MSLL evaluation metrics.
//!
//! Everything here is deterministic given its seed and safe to call from
//! multiple threads (no shared state).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

mod csvio;
mod generate;
mod kmeans;
mod metrics;
mod normalize;
mod split;

pub use csvio::{load_csv, write_csv};
pub use generate::{gen_sinc2d, gen_sinc2d_grid, gen_toy1d, grid_1d, sinc, toy_noise_sd};
pub use kmeans::{kmeans, KmeansResult};
pub use metrics::{gaussian_log_density, msll, smse};
pub use normalize::NormStats;
pub use split::{split, SplitSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("malformed CSV at data row {row}: {detail}")]
    Csv { row: usize, detail: String },

    #[error("target column {name:?} not found in header {header:?}")]
    MissingTargetColumn { name: String, header: Vec<String> },

    #[error("dataset is empty (no data rows)")]
    Empty,

    #[error("dataset needs at least one feature column besides the target")]
    NoFeatures,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid split: {reason}")]
    InvalidSplit { reason: String },

    #[error("invalid clustering request: {reason}")]
    InvalidClustering { reason: String },

    #[error("target variance is zero; SMSE is undefined")]
    ZeroTargetVariance,

    #[error("non-positive variance ({value}) for the trivial predictor")]
    NonPositiveTrainVariance { value: f64 },
}

/// A regression dataset: inputs are rows of `x`, targets are `y`. Synthetic
/// generators also carry the noise-free latent values and the true noise
/// standard deviation per point so tests and evaluations can compare against
/// ground truth. Normalization statistics of the *current* contents are
/// computed at construction; [`Dataset::to_normalized`] produces the
/// zero-mean/unit-variance version and remembers the stats it applied.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    f_true: Option<DVector<f64>>,
    noise_sd_true: Option<DVector<f64>>,
    provenance: String,
    stats: NormStats,
    applied: Option<NormStats>,
}

impl Dataset {
    /// Validates shapes and finiteness and computes normalization stats.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        Self::with_truth(x, y, None, None, provenance)
    }

    /// Like [`Dataset::new`] but attaching known ground truth from a
    /// generator.
    pub fn with_truth(
        x: DMatrix<f64>,
        y: DVector<f64>,
        f_true: Option<DVector<f64>>,
        noise_sd_true: Option<DVector<f64>>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        if x.nrows() == 0 {
            return Err(DataError::Empty);
        }
        if x.ncols() == 0 {
            return Err(DataError::NoFeatures);
        }
        if y.len() != x.nrows() {
            return Err(DataError::DimensionMismatch {
                context: "targets vs input rows".into(),
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(DataError::NonFinite {
                context: "inputs".into(),
            });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(DataError::NonFinite {
                context: "targets".into(),
            });
        }
        for (name, extra) in [("noise-free truth", &f_true), ("true noise sd", &noise_sd_true)] {
            if let Some(v) = extra {
                if v.len() != y.len() {
                    return Err(DataError::DimensionMismatch {
                        context: name.into(),
                        expected: y.len(),
                        got: v.len(),
                    });
                }
            }
        }
        let stats = NormStats::fit(&x, &y);
        Ok(Self {
            x,
            y,
            f_true,
            noise_sd_true,
            provenance: provenance.into(),
            stats,
            applied: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn f_true(&self) -> Option<&DVector<f64>> {
        self.f_true.as_ref()
    }

    pub fn noise_sd_true(&self) -> Option<&DVector<f64>> {
        self.noise_sd_true.as_ref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Normalization statistics of the current contents.
    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    /// Stats that produced this dataset, if it came from
    /// [`Dataset::to_normalized`]. Needed to map predictions back to the
    /// original scale.
    pub fn applied_stats(&self) -> Option<&NormStats> {
        self.applied.as_ref()
    }

    /// Zero-mean, unit-variance copy (per input column and for the target).
    /// Constant columns are left unscaled and flagged in the stats. The
    /// ground-truth fields follow the target transform: the latent mean is
    /// shifted and scaled, the noise sd only scaled.
    pub fn to_normalized(&self) -> Dataset {
        let stats = self.stats.clone();
        let x = stats.normalize_x(&self.x);
        let y = stats.normalize_y(&self.y);
        let f_true = self.f_true.as_ref().map(|f| stats.normalize_y(f));
        let noise_sd_true = self
            .noise_sd_true
            .as_ref()
            .map(|s| s / stats.y_std());
        let new_stats = NormStats::fit(&x, &y);
        Dataset {
            x,
            y,
            f_true,
            noise_sd_true,
            provenance: self.provenance.clone(),
            stats: new_stats,
            applied: Some(stats),
        }
    }

    /// Rows selected by index, in the given order. Panics on out-of-range
    /// indices (callers pass indices they constructed from `0..n`).
    pub fn subset(&self, indices: &[usize], provenance: impl Into<String>) -> Dataset {
        let take_vec = |v: &DVector<f64>| DVector::from_fn(indices.len(), |i, _| v[indices[i]]);
        let x = DMatrix::from_fn(indices.len(), self.dim(), |i, j| self.x[(indices[i], j)]);
        let y = take_vec(&self.y);
        let f_true = self.f_true.as_ref().map(&take_vec);
        let noise_sd_true = self.noise_sd_true.as_ref().map(&take_vec);
        let stats = NormStats::fit(&x, &y);
        Dataset {
            x,
            y,
            f_true,
            noise_sd_true,
            provenance: provenance.into(),
            stats,
            applied: self.applied.clone(),
        }
    }
}

pub(crate) fn population_mean_var(values: &DVector<f64>) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.sum() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_featureless_inputs_are_rejected() {
        let err = Dataset::new(DMatrix::zeros(0, 1), DVector::zeros(0), "t").unwrap_err();
        assert!(matches!(err, DataError::Empty));
        let err = Dataset::new(DMatrix::zeros(3, 0), DVector::zeros(3), "t").unwrap_err();
        assert!(matches!(err, DataError::NoFeatures));
    }

    #[test]
    fn shape_and_finiteness_are_validated() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = Dataset::new(x.clone(), DVector::zeros(3), "t").unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { .. }));
        let err = Dataset::new(x, DVector::from_vec(vec![0.0, f64::NAN]), "t").unwrap_err();
        assert!(matches!(err, DataError::NonFinite { .. }));
    }

    #[test]
    fn subset_preserves_truth_fields_and_order() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![10.0, 11.0, 12.0]);
        let f = DVector::from_vec(vec![20.0, 21.0, 22.0]);
        let ds = Dataset::with_truth(x, y, Some(f), None, "t").unwrap();
        let sub = ds.subset(&[2, 0], "sub");
        assert_eq!(sub.y()[0], 12.0);
        assert_eq!(sub.y()[1], 10.0);
        assert_eq!(sub.f_true().unwrap()[0], 22.0);
        assert_eq!(sub.x()[(1, 0)], 0.0);
    }
}
