//! Distributed variational sparse heteroscedastic GP regression.
//!
//! The training data is partitioned into disjoint shards by k-means, and
//! each shard becomes a local expert: a full sparse heteroscedastic GP with
//! its own inducing inputs and variational weights, but sharing one set of
//! kernel hyperparameters and one log-noise prior mean with every other
//! expert. Because the experts are conditionally independent given the
//! shared parameters, the evidence lower bound of the whole model is the
//! plain sum of the per-expert bounds, so bound and gradient evaluations
//! parallelize over experts with no approximation.
//!
//! Prediction combines the expert posteriors with entropy-weighted robust
//! Bayesian committee aggregation: each expert's vote is weighted by how
//! much its posterior at the test point has contracted from the prior, and
//! the prior itself absorbs the remaining weight. Far from the data every
//! weight decays to zero and the aggregate reverts to the prior for both
//! the mean and the log-noise function.
//!
//! The crate exposes the partitioner ([`kmeans_partition`]), the summed
//! bound and its gradients ([`decomposed_elbo`], [`decomposed_grads`]),
//! two-stage training on a bounded worker pool ([`train`]), the scalar
//! aggregation rules ([`aggregate_f`], [`aggregate_g`]), and batch
//! prediction with per-point error reporting ([`predict`]).

mod aggregate;
mod elbo;
mod model;
mod partition;
mod predict;
mod train;

pub use aggregate::{aggregate_f, aggregate_g, Aggregate};
pub use elbo::{decomposed_elbo, decomposed_grads, DecomposedElbo, DvshgpGradients};
pub use model::{DvshgpModel, ExpertParams, ExpertSizing, Manifest};
pub use partition::{kmeans_partition, Partition};
pub use predict::{predict, AggregatedPrediction};
pub use train::{train, StageReport, TrainConfig, TrainResult};

use vshgp::VshgpError;
use vshgp_data::DataError;
use vshgp_kernel::KernelError;
use vshgp_optim::OptimError;

/// Errors from partitioning, model assembly, bound evaluation, training,
/// aggregation, and archival.
#[derive(Debug, thiserror::Error)]
pub enum DvshgpError {
    /// A per-expert evaluation failed; the index says which shard.
    #[error("expert {index}: {source}")]
    Expert { index: usize, source: VshgpError },

    /// An optimizer invocation failed during the given training stage.
    #[error("training stage {stage}: {source}")]
    Train { stage: u8, source: OptimError },

    /// The k-means partitioner rejected its inputs.
    #[error("partitioning: {source}")]
    Partition {
        #[from]
        source: DataError,
    },

    /// A shared kernel update was rejected.
    #[error(transparent)]
    Kernel(#[from] KernelError),

    /// Two shapes that must agree do not.
    #[error("{context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A model field violates a structural invariant.
    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },

    /// A training configuration field is unusable.
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    /// Aggregation inputs violate their preconditions (empty committee,
    /// mismatched lengths, non-positive or non-finite variances).
    #[error("invalid aggregation input: {reason}")]
    InvalidAggregation { reason: String },

    /// The aggregated precision came out non-positive, so no Gaussian
    /// matches the committee; the weights are carried for diagnosis.
    #[error(
        "aggregation collapsed: combined precision {precision} is not \
         positive (expert weights {weights:?})"
    )]
    AggregationCollapse { precision: f64, weights: Vec<f64> },

    /// The aggregated predictive log-noise would overflow `exp()` at this
    /// test point.
    #[error(
        "predictive log-noise at point {index} has mu + var/2 = {exponent}, \
         which overflows exp(); the model noise level is unphysical here"
    )]
    NoiseOverflow { index: usize, exponent: f64 },

    /// The worker pool could not be created.
    #[error("worker pool: {reason}")]
    Pool { reason: String },

    /// Reading or writing a model archive failed.
    #[error(transparent)]
    Archive(VshgpError),
}

impl DvshgpError {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        DvshgpError::Dimension {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn expert(index: usize, source: VshgpError) -> Self {
        DvshgpError::Expert { index, source }
    }
}
