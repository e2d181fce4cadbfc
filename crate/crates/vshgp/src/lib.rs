//! Variational sparse heteroscedastic Gaussian process regression.
//!
//! The model couples two latent functions: `f` for the mean and `g` for the
//! log noise variance, each with its own squared-exponential ARD kernel and
//! its own set of inducing points. The noise posterior is a free-form
//! Gaussian whose optimum is parameterized by one variational weight per
//! training point, so the evidence lower bound collapses to a deterministic
//! function of the kernel hyperparameters, the inducing inputs, and those
//! weights. Everything here works with Cholesky factors of `m x m` and
//! `u x u` matrices only; no `n x n` matrix is ever formed, which keeps the
//! cost linear in the number of training points.
//!
//! The crate exposes the bound and its exact gradients ([`elbo`],
//! [`elbo_with_grads`]), predictive distributions for the latent functions
//! and observations ([`predict_latent`], [`predict_y`],
//! [`log_predictive_density`]), the optimal inducing posterior for the mean
//! function ([`posterior_fm`]), conjugate-gradient training ([`train`]), and
//! a versioned model archive ([`Archive`]).

mod archive;
mod elbo;
mod model;
mod predict;
mod quad;
mod train;
mod workspace;

pub use archive::{Archive, ARCHIVE_FORMAT, ARCHIVE_VERSION};
pub use elbo::{elbo, elbo_with_grads, gauss_kl, ElboBreakdown, GradientBundle};
pub use model::VshgpModel;
pub use predict::{posterior_fm, predict_latent, predict_y, FmPosterior, LatentPrediction};
pub use quad::{gauss_hermite, log_predictive_density, DEFAULT_QUADRATURE_NODES};
pub use train::{train, TrainResult};
pub use workspace::Workspace;

use vshgp_kernel::KernelError;
use vshgp_optim::OptimError;

/// Errors from model construction, bound evaluation, prediction, and
/// archival.
#[derive(Debug, thiserror::Error)]
pub enum VshgpError {
    /// A kernel evaluation or Cholesky factorization failed.
    #[error(transparent)]
    Kernel(#[from] KernelError),

    /// An optimizer invocation failed.
    #[error(transparent)]
    Optim(#[from] OptimError),

    /// Two shapes that must agree do not.
    #[error("{context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A model field violates its constraint (e.g. more inducing points
    /// than training points).
    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },

    /// The marginal noise variance degenerated to zero, infinity, or NaN at
    /// a training point, so the bound is not evaluable at this state.
    #[error("noise variance at training point {index} degenerated to {value}")]
    DegenerateNoise { index: usize, value: f64 },

    /// The predictive noise moment `exp(mu_g + var_g / 2)` would overflow.
    #[error(
        "predictive log-noise at point {index} has mu + var/2 = {exponent}, \
         which overflows exp(); the model noise level is unphysical here"
    )]
    NoiseOverflow { index: usize, exponent: f64 },

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A quadrature rule with zero nodes was requested.
    #[error("quadrature needs at least one node")]
    EmptyQuadrature,

    /// Reading or writing a model archive failed.
    #[error("archive error: {reason}")]
    Archive { reason: String },
}

impl VshgpError {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        VshgpError::Dimension {
            context,
            expected,
            got,
        }
    }
}
