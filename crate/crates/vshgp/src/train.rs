//! Conjugate-gradient training of the collapsed bound.

use nalgebra::DVector;
use vshgp_optim::{cgd_maximize, CgdOutcome, OptimizerConfig};

use crate::elbo::elbo_with_grads;
use crate::model::VshgpModel;
use crate::VshgpError;

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    /// The model at the best bound value found.
    pub model: VshgpModel,
    /// Bound value at that state.
    pub value: f64,
    /// Bound value at the start and after every accepted line search;
    /// non-decreasing by construction.
    pub trace: Vec<f64>,
    /// Line searches actually run (accepted or not).
    pub line_searches: usize,
    /// Why optimization stopped.
    pub outcome: CgdOutcome,
}

/// Maximizes the bound over every free parameter (variational weights, both
/// kernels, the log-noise prior mean, and both inducing sets) with
/// conjugate gradients, spending at most `max_line_searches` line searches.
///
/// States where the bound is not evaluable (a kernel matrix that cannot be
/// factorized, degenerate noise variances) are treated as rejected trial
/// points, not errors; the search backs off and continues. Only a failure
/// at the *initial* state is an error.
pub fn train(
    model: &VshgpModel,
    max_line_searches: usize,
    config: &OptimizerConfig,
) -> Result<TrainResult, VshgpError> {
    let mut scratch = model.clone();
    let objective = |packed: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        scratch.set_packed_params(packed).ok()?;
        let (breakdown, grads) = elbo_with_grads(&scratch).ok()?;
        Some((breakdown.total(), grads.pack()))
    };
    let result = cgd_maximize(objective, model.packed_params(), max_line_searches, config)?;

    let mut best = model.clone();
    best.set_packed_params(&result.x)?;
    Ok(TrainResult {
        model: best,
        value: result.value,
        trace: result.trace,
        line_searches: result.line_searches,
        outcome: result.outcome,
    })
}
