//! Model state: data, kernels, inducing inputs, and variational weights.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vshgp_data::kmeans;
use vshgp_kernel::KernelParams;

use crate::VshgpError;

/// A variational sparse heteroscedastic GP: training data, one kernel and one
/// inducing set for the mean function `f`, the same pair for the log-noise
/// function `g`, the log-noise prior mean, and one variational weight per
/// training point.
///
/// All positive quantities (kernel parameters, variational weights) are
/// stored in the log domain so that every entry of the packed parameter
/// vector is unconstrained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VshgpModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    kernel_f: KernelParams,
    kernel_g: KernelParams,
    mu0: f64,
    xm: DMatrix<f64>,
    xu: DMatrix<f64>,
    log_lambda: DVector<f64>,
}

impl VshgpModel {
    /// Builds a model from explicit parts, validating shapes and finiteness.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        kernel_f: KernelParams,
        kernel_g: KernelParams,
        mu0: f64,
        xm: DMatrix<f64>,
        xu: DMatrix<f64>,
        log_lambda: DVector<f64>,
    ) -> Result<Self, VshgpError> {
        let model = VshgpModel {
            x,
            y,
            kernel_f,
            kernel_g,
            mu0,
            xm,
            xu,
            log_lambda,
        };
        model.validate()?;
        Ok(model)
    }

    /// Default initialization for normalized data: unit kernels, inducing
    /// inputs at k-means centroids of the training inputs, log-noise prior
    /// mean at `ln(var(y) / 2)`, and every variational weight at `1/2`.
    ///
    /// The two inducing sets use k-means seeds derived from `seed`: the seed
    /// itself for the mean-function set and `seed + 1` for the noise set, so
    /// they differ even when `m == u`.
    pub fn init(
        x: DMatrix<f64>,
        y: DVector<f64>,
        m: usize,
        u: usize,
        seed: u64,
    ) -> Result<Self, VshgpError> {
        let n = x.nrows();
        let d = x.ncols();
        if y.len() != n {
            return Err(VshgpError::dim("targets per input row", n, y.len()));
        }
        let mean = y.iter().sum::<f64>() / n.max(1) as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
        if !(var > 0.0) {
            return Err(VshgpError::InvalidModel {
                reason: "targets have zero variance; the log-noise prior mean is undefined"
                    .to_string(),
            });
        }
        let xm = kmeans(&x, m, seed)
            .map_err(|e| VshgpError::InvalidModel {
                reason: format!("mean-function inducing initialization: {e}"),
            })?
            .centroids;
        let xu = kmeans(&x, u, seed.wrapping_add(1))
            .map_err(|e| VshgpError::InvalidModel {
                reason: format!("noise inducing initialization: {e}"),
            })?
            .centroids;
        let log_lambda = DVector::from_element(n, 0.5f64.ln());
        VshgpModel::new(
            x,
            y,
            KernelParams::unit(d),
            KernelParams::unit(d),
            (var / 2.0).ln(),
            xm,
            xu,
            log_lambda,
        )
    }

    /// Checks every structural invariant; [`new`](Self::new) calls this, and
    /// deserialized models should be re-checked with it.
    pub fn validate(&self) -> Result<(), VshgpError> {
        let (n, d) = (self.x.nrows(), self.x.ncols());
        if n == 0 {
            return Err(VshgpError::InvalidModel {
                reason: "no training points".to_string(),
            });
        }
        if d == 0 {
            return Err(VshgpError::InvalidModel {
                reason: "training inputs have no columns".to_string(),
            });
        }
        if self.y.len() != n {
            return Err(VshgpError::dim("targets per input row", n, self.y.len()));
        }
        if self.log_lambda.len() != n {
            return Err(VshgpError::dim(
                "variational weights per training point",
                n,
                self.log_lambda.len(),
            ));
        }
        if self.kernel_f.dim() != d {
            return Err(VshgpError::dim(
                "mean kernel lengthscales",
                d,
                self.kernel_f.dim(),
            ));
        }
        if self.kernel_g.dim() != d {
            return Err(VshgpError::dim(
                "noise kernel lengthscales",
                d,
                self.kernel_g.dim(),
            ));
        }
        if self.xm.ncols() != d {
            return Err(VshgpError::dim(
                "mean inducing input columns",
                d,
                self.xm.ncols(),
            ));
        }
        if self.xu.ncols() != d {
            return Err(VshgpError::dim(
                "noise inducing input columns",
                d,
                self.xu.ncols(),
            ));
        }
        if self.xm.nrows() == 0 || self.xm.nrows() > n {
            return Err(VshgpError::InvalidModel {
                reason: format!(
                    "mean inducing count {} must be in 1..={n}",
                    self.xm.nrows()
                ),
            });
        }
        if self.xu.nrows() == 0 || self.xu.nrows() > n {
            return Err(VshgpError::InvalidModel {
                reason: format!(
                    "noise inducing count {} must be in 1..={n}",
                    self.xu.nrows()
                ),
            });
        }
        let all_finite = self.x.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
            && self.xm.iter().all(|v| v.is_finite())
            && self.xu.iter().all(|v| v.is_finite())
            && self.log_lambda.iter().all(|v| v.is_finite())
            && self.mu0.is_finite();
        if !all_finite {
            return Err(VshgpError::NonFinite {
                context: "model state",
            });
        }
        Ok(())
    }

    /// Number of training points.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of inducing points for the mean function.
    pub fn m(&self) -> usize {
        self.xm.nrows()
    }

    /// Number of inducing points for the log-noise function.
    pub fn u(&self) -> usize {
        self.xu.nrows()
    }

    /// Training inputs, one row per point.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Training targets.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Mean-function kernel parameters.
    pub fn kernel_f(&self) -> &KernelParams {
        &self.kernel_f
    }

    /// Log-noise kernel parameters.
    pub fn kernel_g(&self) -> &KernelParams {
        &self.kernel_g
    }

    /// Log-noise prior mean.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// Mean-function inducing inputs, one row per point.
    pub fn xm(&self) -> &DMatrix<f64> {
        &self.xm
    }

    /// Log-noise inducing inputs, one row per point.
    pub fn xu(&self) -> &DMatrix<f64> {
        &self.xu
    }

    /// Log variational weights (one per training point).
    pub fn log_lambda(&self) -> &DVector<f64> {
        &self.log_lambda
    }

    /// Variational weights `exp(log_lambda)`.
    pub fn lambda(&self) -> DVector<f64> {
        self.log_lambda.map(f64::exp)
    }

    /// Replaces the log variational weights.
    pub fn set_log_lambda(&mut self, log_lambda: DVector<f64>) -> Result<(), VshgpError> {
        if log_lambda.len() != self.n() {
            return Err(VshgpError::dim(
                "variational weights per training point",
                self.n(),
                log_lambda.len(),
            ));
        }
        self.log_lambda = log_lambda;
        Ok(())
    }

    /// Length of the packed parameter vector.
    pub fn packed_len(&self) -> usize {
        self.packed_blocks().iter().map(|(_, r)| r.len()).sum()
    }

    /// The free-parameter blocks in packed order: name and index range.
    ///
    /// Order: variational weights, mean kernel, noise kernel, log-noise
    /// prior mean, mean inducing inputs (row major), noise inducing inputs
    /// (row major).
    pub fn packed_blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        let (n, d, m, u) = (self.n(), self.dim(), self.m(), self.u());
        let sizes = [
            ("lambda", n),
            ("kernel_f", 1 + d),
            ("kernel_g", 1 + d),
            ("mu0", 1),
            ("inducing_f", m * d),
            ("inducing_g", u * d),
        ];
        let mut start = 0;
        sizes
            .into_iter()
            .map(|(name, len)| {
                let range = start..start + len;
                start += len;
                (name, range)
            })
            .collect()
    }

    /// All free parameters as one flat vector, in [`packed_blocks`]
    /// (Self::packed_blocks) order.
    pub fn packed_params(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.packed_len());
        out.extend(self.log_lambda.iter());
        out.extend(self.kernel_f.log_params().iter());
        out.extend(self.kernel_g.log_params().iter());
        out.push(self.mu0);
        out.extend(self.xm.transpose().iter()); // row major
        out.extend(self.xu.transpose().iter());
        DVector::from_vec(out)
    }

    /// Writes a packed parameter vector back into the model.
    pub fn set_packed_params(&mut self, packed: &DVector<f64>) -> Result<(), VshgpError> {
        if packed.len() != self.packed_len() {
            return Err(VshgpError::dim(
                "packed parameter length",
                self.packed_len(),
                packed.len(),
            ));
        }
        let (n, d, m, u) = (self.n(), self.dim(), self.m(), self.u());
        let s = packed.as_slice();
        let mut at = 0;
        self.log_lambda = DVector::from_column_slice(&s[at..at + n]);
        at += n;
        self.kernel_f
            .set_log_params(&DVector::from_column_slice(&s[at..at + 1 + d]))?;
        at += 1 + d;
        self.kernel_g
            .set_log_params(&DVector::from_column_slice(&s[at..at + 1 + d]))?;
        at += 1 + d;
        self.mu0 = s[at];
        at += 1;
        self.xm = DMatrix::from_row_slice(m, d, &s[at..at + m * d]);
        at += m * d;
        self.xu = DMatrix::from_row_slice(u, d, &s[at..at + u * d]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> VshgpModel {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.1, 1.0, -0.2, 2.0, 0.3, 3.0, -0.4]);
        let y = DVector::from_vec(vec![0.1, -0.3, 0.2, 0.4]);
        let xm = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 2.5, 0.0]);
        let xu = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 2.0, -0.1]);
        VshgpModel::new(
            x,
            y,
            KernelParams::unit(2),
            KernelParams::unit(2),
            -1.0,
            xm,
            xu,
            DVector::from_element(4, 0.5f64.ln()),
        )
        .unwrap()
    }

    #[test]
    fn packed_round_trip_is_identity() {
        let mut model = toy_model();
        let before = model.packed_params();
        model.set_packed_params(&before).unwrap();
        assert_eq!(model.packed_params().as_slice(), before.as_slice());
    }

    #[test]
    fn packed_blocks_cover_the_vector_exactly() {
        let model = toy_model();
        let blocks = model.packed_blocks();
        let mut at = 0;
        for (_, range) in &blocks {
            assert_eq!(range.start, at);
            at = range.end;
        }
        assert_eq!(at, model.packed_len());
        assert_eq!(model.packed_params().len(), at);
    }

    #[test]
    fn packed_layout_is_row_major_for_inducing_inputs() {
        let mut model = toy_model();
        let mut packed = model.packed_params();
        let blocks = model.packed_blocks();
        let (_, xm_range) = blocks.iter().find(|(n, _)| *n == "inducing_f").unwrap();
        // First d entries of the block are row 0 of Xm.
        packed[xm_range.start] = 42.0;
        packed[xm_range.start + 1] = 43.0;
        model.set_packed_params(&packed).unwrap();
        assert_eq!(model.xm()[(0, 0)], 42.0);
        assert_eq!(model.xm()[(0, 1)], 43.0);
    }

    #[test]
    fn too_many_inducing_points_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let xm = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 1.0]);
        let xu = DMatrix::from_row_slice(1, 1, &[0.5]);
        let err = VshgpModel::new(
            x,
            y,
            KernelParams::unit(1),
            KernelParams::unit(1),
            -1.0,
            xm,
            xu,
            DVector::from_element(2, 0.5f64.ln()),
        )
        .unwrap_err();
        assert!(matches!(err, VshgpError::InvalidModel { .. }));
    }

    #[test]
    fn mismatched_kernel_dimension_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let xm = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let xu = xm.clone();
        let err = VshgpModel::new(
            x,
            y,
            KernelParams::unit(1),
            KernelParams::unit(2),
            -1.0,
            xm,
            xu,
            DVector::from_element(2, 0.5f64.ln()),
        )
        .unwrap_err();
        assert!(matches!(err, VshgpError::Dimension { .. }));
    }

    #[test]
    fn non_finite_state_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, f64::NAN]);
        let xm = DMatrix::from_row_slice(1, 1, &[0.5]);
        let xu = xm.clone();
        let err = VshgpModel::new(
            x,
            y,
            KernelParams::unit(1),
            KernelParams::unit(1),
            -1.0,
            xm,
            xu,
            DVector::from_element(2, 0.5f64.ln()),
        )
        .unwrap_err();
        assert!(matches!(err, VshgpError::NonFinite { .. }));
    }

    #[test]
    fn init_uses_half_target_variance_for_prior_mean() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        // Targets with population variance exactly 4.
        let y = DVector::from_fn(10, |i, _| if i % 2 == 0 { 2.0 } else { -2.0 });
        let model = VshgpModel::init(x, y, 3, 2, 7).unwrap();
        assert!((model.mu0() - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(model.m(), 3);
        assert_eq!(model.u(), 2);
        assert_eq!(model.log_lambda()[0], 0.5f64.ln());
        assert_eq!(model.kernel_f().lengthscales()[0], 1.0);
    }

    #[test]
    fn init_rejects_constant_targets() {
        let x = DMatrix::from_fn(5, 1, |i, _| i as f64);
        let y = DVector::from_element(5, 3.0);
        assert!(matches!(
            VshgpModel::init(x, y, 2, 2, 0),
            Err(VshgpError::InvalidModel { .. })
        ));
    }
}
