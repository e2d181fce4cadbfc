//! Mini-batch training loop: natural-gradient steps on the variational
//! state alternated with Adam steps on the hyperparameters.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vshgp_optim::{gamma_schedule, AdamState, GammaSchedule};

use crate::bound::{batch_gradients, full_elbo};
use crate::model::SvshgpModel;
use crate::ngd::natural_step;
use crate::SvshgpError;

/// How the variational Gaussians are updated each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariationalUpdate {
    /// Natural-gradient steps with the ramped step size (the default); the
    /// hyperparameters still move by Adam.
    NaturalGradient,
    /// Plain Adam on the unconstrained packing of the variational state,
    /// alongside the hyperparameters. Slower to converge; exists as the
    /// baseline the natural-gradient scheme is measured against.
    AdamOnly,
}

/// Configuration for [`train_stochastic`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StochasticConfig {
    /// Rows per mini-batch (clamped to `n`).
    pub batch_size: usize,
    pub iterations: usize,
    /// Seeds the batch shuffler.
    pub seed: u64,
    /// Adam step size for the hyperparameters (and, in
    /// [`VariationalUpdate::AdamOnly`] mode, the variational state).
    pub adam_step: f64,
    /// Natural-gradient step ramp.
    pub gamma: GammaSchedule,
    pub update: VariationalUpdate,
    /// Window length for the divergence guard on the stochastic trace.
    pub guard_window: usize,
    /// When set, also evaluate the full-batch bound every this many
    /// iterations (and at the last iteration); collected separately.
    pub full_eval_every: Option<usize>,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        StochasticConfig {
            batch_size: 50,
            iterations: 1000,
            seed: 0,
            adam_step: 0.01,
            gamma: GammaSchedule::default(),
            update: VariationalUpdate::NaturalGradient,
            guard_window: 25,
            full_eval_every: None,
        }
    }
}

/// One point of the stochastic training trace.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Mini-batch bound estimate at the start of the iteration.
    pub value: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

/// A trained model plus its traces.
#[derive(Debug, Clone)]
pub struct StochasticTrainResult {
    pub model: SvshgpModel,
    /// Per-iteration stochastic bound estimates.
    pub trace: Vec<TracePoint>,
    /// `(iteration, full-batch bound)` pairs, when requested in the config.
    pub full_trace: Vec<(usize, f64)>,
}

/// Diagnostics from the divergence guard.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceReport {
    pub best_mean: f64,
    pub current_mean: f64,
    pub iqr: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Scans a stochastic trace for collapse: computes the rolling mean over
/// `window` consecutive values, and reports divergence when the latest
/// rolling mean has fallen more than ten interquartile ranges (of the
/// rolling-mean series) below its running best. Returns `None` while the
/// trace is shorter than two windows or still healthy.
pub fn divergence_check(values: &[f64], window: usize) -> Option<DivergenceReport> {
    if window == 0 || values.len() < 2 * window {
        return None;
    }
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let count = values.len() - window + 1;
    let means: Vec<f64> = (0..count)
        .map(|i| (prefix[i + window] - prefix[i]) / window as f64)
        .collect();
    let current = *means.last().unwrap();
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = means.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = percentile(&sorted, 0.75) - percentile(&sorted, 0.25);
    let drop = best - current;
    if drop > 10.0 * iqr && drop > 0.0 {
        Some(DivergenceReport {
            best_mean: best,
            current_mean: current,
            iqr,
        })
    } else {
        None
    }
}

struct BatchSampler {
    perm: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut sampler = BatchSampler {
            perm: (0..n).collect(),
            cursor: 0,
            batch_size: batch_size.min(n),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        sampler.perm.shuffle(&mut sampler.rng);
        sampler
    }

    /// Next slice of the epoch permutation; the final batch of an epoch may
    /// be short so that every point is visited exactly once per epoch.
    fn next(&mut self) -> &[usize] {
        if self.cursor >= self.perm.len() {
            self.perm.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.perm.len());
        let batch = &self.perm[self.cursor..end];
        self.cursor = end;
        batch
    }
}

/// Runs the stochastic training loop on a copy of `model`.
///
/// Each iteration draws the next without-replacement batch, takes one
/// variational step (natural-gradient with the ramped step size, or Adam in
/// the unconstrained packing), then one Adam step on the hyperparameters
/// with gradients re-evaluated at the new variational state. The stochastic
/// bound estimate at the start of each iteration forms the trace; a rolling
/// divergence guard aborts a collapsing run.
pub fn train_stochastic(
    model: &SvshgpModel,
    config: &StochasticConfig,
) -> Result<StochasticTrainResult, SvshgpError> {
    if config.batch_size == 0 {
        return Err(SvshgpError::InvalidBatch {
            reason: "batch size must be at least 1".into(),
        });
    }
    config.gamma.validate()?;
    if !(config.adam_step.is_finite() && config.adam_step > 0.0) {
        return Err(SvshgpError::InvalidState {
            reason: format!("Adam step must be positive, got {}", config.adam_step),
        });
    }

    let mut model = model.clone();
    let mut trace = Vec::with_capacity(config.iterations);
    let mut full_trace = Vec::new();
    if config.iterations == 0 {
        return Ok(StochasticTrainResult {
            model,
            trace,
            full_trace,
        });
    }

    let mut sampler = BatchSampler::new(model.n(), config.batch_size, config.seed);
    let mut hyper_adam = AdamState::new(model.hyper_len());
    let mut var_adam = match config.update {
        VariationalUpdate::NaturalGradient => None,
        VariationalUpdate::AdamOnly => Some(AdamState::new(model.q().packed_len())),
    };
    let started = Instant::now();
    let mut values = Vec::with_capacity(config.iterations);

    for t in 0..config.iterations {
        let batch: Vec<usize> = sampler.next().to_vec();
        let (value, grads) = batch_gradients(&model, &batch)?;

        match config.update {
            VariationalUpdate::NaturalGradient => {
                let gamma = gamma_schedule(t as f64, &config.gamma).min(1.0);
                let stepped = natural_step(model.q(), &grads, gamma)?;
                model.set_q(stepped)?;
                // Hyperparameters move on gradients at the new variational
                // state, evaluated on the same batch.
                let (_, grads2) = batch_gradients(&model, &batch)?;
                let mut hypers = model.packed_hypers();
                hyper_adam.ascend(&mut hypers, &grads2.packed_hypers(), config.adam_step)?;
                model.set_packed_hypers(&hypers)?;
            }
            VariationalUpdate::AdamOnly => {
                let q = model.q();
                let var_grad = q.gradient_to_packed(
                    &grads.mu_m,
                    &grads.sigma_m,
                    &grads.mu_u,
                    &grads.sigma_u,
                );
                let mut var_packed = q.packed();
                var_adam
                    .as_mut()
                    .expect("Adam-only mode allocates a variational optimizer")
                    .ascend(&mut var_packed, &var_grad, config.adam_step)?;
                let mut stepped = q.clone();
                stepped.set_packed(&var_packed)?;
                model.set_q(stepped)?;
                let mut hypers = model.packed_hypers();
                hyper_adam.ascend(&mut hypers, &grads.packed_hypers(), config.adam_step)?;
                model.set_packed_hypers(&hypers)?;
            }
        }

        values.push(value);
        trace.push(TracePoint {
            iteration: t,
            value,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(report) = divergence_check(&values, config.guard_window) {
            return Err(SvshgpError::Divergence {
                iteration: t,
                best_mean: report.best_mean,
                current_mean: report.current_mean,
                iqr: report.iqr,
            });
        }
        if let Some(every) = config.full_eval_every {
            if every > 0 && (t % every == 0 || t + 1 == config.iterations) {
                full_trace.push((t, full_elbo(&model)?));
            }
        }
    }

    Ok(StochasticTrainResult {
        model,
        trace,
        full_trace,
    })
}
