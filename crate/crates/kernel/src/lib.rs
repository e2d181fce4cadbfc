//! Squared-exponential ARD kernel with analytic derivatives.
//!
//! The kernel of every Gaussian process in this workspace is the
//! squared-exponential with automatic relevance determination:
//!
//! ```text
//! k(x, x') = sigma_s^2 * exp(-0.5 * sum_i (x_i - x'_i)^2 / l_i^2)
//! ```
//!
//! with a signal variance `sigma_s^2` and one lengthscale `l_i` per input
//! dimension. Both are stored in the log domain so optimizers can move
//! freely over all of R while the constrained values stay positive.
//!
//! Besides plain evaluation ([`kernel_eval`], [`kernel_matrix`]) the crate
//! provides the analytic derivatives every gradient in the workspace is
//! assembled from:
//!
//! * [`kernel_param_grads`] — dK/d(log sigma_s^2) and dK/d(log l_j),
//! * [`kernel_input_grads`] — dK/dx for one side's point coordinates,
//!   packed per dimension,
//! * [`weighted_param_grads`] / [`weighted_input_grads`] — the contractions
//!   `sum_ij W_ij dK_ij/dtheta` used by the model gradients, computed
//!   without materializing one derivative matrix per parameter.
//!
//! [`chol_jitter`] wraps Cholesky factorization with the escalating-jitter
//! schedule used everywhere a kernel matrix must be inverted.

mod ard;
mod chol;

pub use ard::{
    kernel_diag, kernel_eval, kernel_input_grads, kernel_matrix, kernel_param_grads,
    weighted_input_grads, weighted_param_grads, InputGrads, Side,
};
pub use chol::{chol_jitter, CholJitter};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Errors reported by kernel operations.
#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    /// Two objects that must agree on a dimension do not.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    /// A parameter that must be strictly positive is not.
    #[error("{name} must be strictly positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    /// Cholesky factorization failed even at the maximum jitter level.
    #[error(
        "Cholesky failed for {size}x{size} matrix (trace {trace:.6e}, \
         max jitter tried {max_jitter:.6e}); matrix is not positive definite"
    )]
    CholeskyFailed {
        size: usize,
        trace: f64,
        max_jitter: f64,
    },
}

/// SE-ARD kernel parameters: signal variance and per-dimension lengthscales.
///
/// Values are held as logs; [`KernelParams::signal_variance`] and
/// [`KernelParams::lengthscales`] exponentiate on access. Construction
/// rejects non-positive or non-finite inputs, so a `KernelParams` always
/// describes a valid kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    log_signal_variance: f64,
    log_lengthscales: DVector<f64>,
}

impl KernelParams {
    /// Builds parameters from natural-domain values.
    pub fn new(signal_variance: f64, lengthscales: &[f64]) -> Result<Self, KernelError> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(KernelError::NonPositiveParameter {
                name: "signal_variance",
                value: signal_variance,
            });
        }
        for &l in lengthscales {
            if !(l > 0.0 && l.is_finite()) {
                return Err(KernelError::NonPositiveParameter {
                    name: "lengthscale",
                    value: l,
                });
            }
        }
        Ok(Self {
            log_signal_variance: signal_variance.ln(),
            log_lengthscales: DVector::from_iterator(
                lengthscales.len(),
                lengthscales.iter().map(|l| l.ln()),
            ),
        })
    }

    /// Builds parameters directly from log-domain values.
    pub fn from_log(log_signal_variance: f64, log_lengthscales: DVector<f64>) -> Self {
        Self {
            log_signal_variance,
            log_lengthscales,
        }
    }

    /// Unit parameters (`sigma_s^2 = 1`, all lengthscales 1) in `dim` input dimensions.
    pub fn unit(dim: usize) -> Self {
        Self {
            log_signal_variance: 0.0,
            log_lengthscales: DVector::zeros(dim),
        }
    }

    /// Number of input dimensions this kernel is parameterized for.
    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    /// Signal variance `sigma_s^2`.
    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    /// Lengthscales `l_i` in natural units.
    pub fn lengthscales(&self) -> DVector<f64> {
        self.log_lengthscales.map(f64::exp)
    }

    /// Log signal variance (the value the optimizer sees).
    pub fn log_signal_variance(&self) -> f64 {
        self.log_signal_variance
    }

    /// Log lengthscales (the values the optimizer sees).
    pub fn log_lengthscales(&self) -> &DVector<f64> {
        &self.log_lengthscales
    }

    /// All log-domain parameters as one vector: `[log sigma_s^2, log l_1, .., log l_d]`.
    ///
    /// This is the packing order used by every optimizer in the workspace and
    /// by [`kernel_param_grads`].
    pub fn log_params(&self) -> DVector<f64> {
        let mut v = DVector::zeros(1 + self.dim());
        v[0] = self.log_signal_variance;
        v.rows_mut(1, self.dim()).copy_from(&self.log_lengthscales);
        v
    }

    /// Replaces all parameters from a log-domain vector in [`Self::log_params`] order.
    pub fn set_log_params(&mut self, v: &DVector<f64>) -> Result<(), KernelError> {
        if v.len() != 1 + self.dim() {
            return Err(KernelError::DimensionMismatch {
                context: "set_log_params",
                left: v.len(),
                right: 1 + self.dim(),
            });
        }
        self.log_signal_variance = v[0];
        self.log_lengthscales.copy_from(&v.rows(1, self.dim()));
        Ok(())
    }

    /// Number of log-domain parameters (`1 + d`).
    pub fn n_params(&self) -> usize {
        1 + self.dim()
    }
}
