//! Two-stage conjugate-gradient training on a bounded worker pool.

use nalgebra::DVector;
use vshgp_optim::{cgd_maximize, CgdOutcome, OptimizerConfig};

use crate::elbo::decomposed_grads;
use crate::model::DvshgpModel;
use crate::DvshgpError;

/// Training configuration: per-stage line-search budgets and the worker
/// pool size for expert evaluations.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Line searches for stage one, which optimizes only the variational
    /// weights.
    pub stage1_searches: usize,
    /// Line searches for stage two, which optimizes every block jointly.
    pub stage2_searches: usize,
    /// Worker threads for per-expert evaluations (at least one). The
    /// result is bit-identical for any worker count.
    pub workers: usize,
    /// Line-search constants shared by both stages.
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_searches: 30,
            stage2_searches: 70,
            workers: 1,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// What one training stage did: its accepted-step bound trace (starting at
/// the stage's initial bound), line searches spent, and why it stopped.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub trace: Vec<f64>,
    pub line_searches: usize,
    pub outcome: CgdOutcome,
}

/// A trained model plus per-stage progress reports.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: DvshgpModel,
    /// Bound at the final parameters.
    pub value: f64,
    pub stage1: StageReport,
    pub stage2: StageReport,
}

/// Trains the committee in two stages: first the variational weights alone
/// (everything else frozen), then every block jointly.
///
/// Expert bound/gradient evaluations are dispatched to a dedicated pool of
/// `config.workers` threads; reductions run in fixed expert order, so the
/// trained parameters are bit-identical for any worker count. Each stage's
/// accepted-step trace is non-decreasing, and stage two starts from stage
/// one's endpoint, so the concatenated trace is non-decreasing as well.
/// Zero budgets for both stages return the model unchanged.
pub fn train(model: &DvshgpModel, config: &TrainConfig) -> Result<TrainResult, DvshgpError> {
    if config.workers == 0 {
        return Err(DvshgpError::InvalidConfig {
            reason: "worker count must be at least one".to_string(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| DvshgpError::Pool {
            reason: e.to_string(),
        })?;
    pool.install(|| train_stages(model, config))
}

fn train_stages(model: &DvshgpModel, config: &TrainConfig) -> Result<TrainResult, DvshgpError> {
    let mut current = model.clone();

    // Stage one: variational weights only.
    let mut scratch = current.clone();
    let weights_only = |packed: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        scratch.set_log_lambdas(packed).ok()?;
        let (bound, grads) = decomposed_grads(&scratch).ok()?;
        let mut flat = Vec::with_capacity(packed.len());
        for g in &grads.log_lambda {
            flat.extend(g.iter());
        }
        Some((bound.total(), DVector::from_vec(flat)))
    };
    let stage1 = cgd_maximize(
        weights_only,
        current.packed_log_lambdas(),
        config.stage1_searches,
        &config.optimizer,
    )
    .map_err(|e| DvshgpError::Train { stage: 1, source: e })?;
    current.set_log_lambdas(&stage1.x)?;

    // Stage two: every block jointly.
    let mut scratch = current.clone();
    let all_blocks = |packed: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        scratch.set_packed_params(packed).ok()?;
        let (bound, grads) = decomposed_grads(&scratch).ok()?;
        Some((bound.total(), grads.pack()))
    };
    let stage2 = cgd_maximize(
        all_blocks,
        current.packed_params(),
        config.stage2_searches,
        &config.optimizer,
    )
    .map_err(|e| DvshgpError::Train { stage: 2, source: e })?;
    current.set_packed_params(&stage2.x)?;

    Ok(TrainResult {
        model: current,
        value: stage2.value,
        stage1: StageReport {
            trace: stage1.trace,
            line_searches: stage1.line_searches,
            outcome: stage1.outcome,
        },
        stage2: StageReport {
            trace: stage2.trace,
            line_searches: stage2.line_searches,
            outcome: stage2.outcome,
        },
    })
}
