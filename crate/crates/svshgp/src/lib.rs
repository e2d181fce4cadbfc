//! Stochastic variational inference for sparse heteroscedastic Gaussian
//! process regression.
//!
//! This crate uncollapses the bound of the [`vshgp`] crate: instead of the
//! closed-form optimal posterior over the mean-function inducing values, it
//! keeps explicit Gaussians `q(f_m) = N(mu_m, Sigma_m)` and
//! `q(g_u) = N(mu_u, Sigma_u)` and maximizes the factorized evidence lower
//! bound, which is a sum over data points and therefore admits unbiased
//! mini-batch estimates. Training alternates natural-gradient steps on the
//! two variational Gaussians with Adam steps on the kernel hyperparameters,
//! prior mean, and inducing inputs.
//!
//! The structure mirrors `vshgp`:
//!
//! - [`SvshgpModel`] holds data, hyperparameters, and the explicit
//!   variational state ([`ExplicitVariational`]).
//! - [`factorized_elbo`] / [`batch_gradients`] evaluate the bound and its
//!   gradients on an index batch, scaled to be unbiased for the full bound.
//! - [`natural_step`] performs one natural-gradient update on both
//!   Gaussians, halving the step on any update that would leave the
//!   positive-definite cone.
//! - [`train_stochastic`] runs the mini-batch training loop.
//! - [`predict_latent`] produces the same [`vshgp::LatentPrediction`] as the
//!   collapsed model, so downstream prediction and scoring are shared.

mod bound;
mod model;
mod ngd;
mod predict;
mod state;
mod train;

pub use bound::{batch_gradients, current_noise, factorized_elbo, full_elbo, BatchGradients};
pub use model::{q_star_fm, SvshgpModel};
pub use ngd::{natural_block_step, natural_step, NaturalParams};
pub use predict::predict_latent;
pub use state::ExplicitVariational;
pub use train::{
    divergence_check, train_stochastic, DivergenceReport, StochasticConfig, StochasticTrainResult,
    TracePoint, VariationalUpdate,
};

use thiserror::Error;

/// Errors from stochastic variational training and evaluation.
#[derive(Debug, Error)]
pub enum SvshgpError {
    #[error(transparent)]
    Kernel(#[from] vshgp_kernel::KernelError),

    #[error(transparent)]
    Optim(#[from] vshgp_optim::OptimError),

    #[error(transparent)]
    Vshgp(#[from] vshgp::VshgpError),

    #[error("{context}: expected dimension {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },

    #[error("invalid variational state: {reason}")]
    InvalidState { reason: String },

    #[error("invalid batch: {reason}")]
    InvalidBatch { reason: String },

    #[error("marginal noise variance at batch row {index} is {value}; the model has degenerated")]
    DegenerateNoise { index: usize, value: f64 },

    #[error(
        "natural-gradient step on the {block} block rejected down to step size {gamma:.3e}: \
         no positive-definite update found after {halvings} halvings"
    )]
    NaturalStepRejected {
        block: &'static str,
        gamma: f64,
        halvings: u32,
    },

    #[error(
        "bound diverged at iteration {iteration}: running mean fell from {best_mean:.6} to \
         {current_mean:.6}, more than 10x the interquartile range {iqr:.6}"
    )]
    Divergence {
        iteration: usize,
        best_mean: f64,
        current_mean: f64,
        iqr: f64,
    },

    #[error("{context} is not finite")]
    NonFinite { context: String },
}

pub(crate) fn dim_err(context: &str, expected: usize, got: usize) -> SvshgpError {
    SvshgpError::Dimension {
        context: context.to_string(),
        expected,
        got,
    }
}
