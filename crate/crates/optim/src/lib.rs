//! Optimizers for smooth unconstrained maximization.
//!
//! Three pieces, all deterministic given their inputs:
//!
//! * [`cgd_maximize`] — Polak–Ribière+ nonlinear conjugate gradient with a
//!   strong-Wolfe line search. The budget counts completed line searches, so
//!   one unit of budget may spend several objective evaluations.
//! * [`AdamState`] — Adam with bias correction, oriented for ascent.
//! * [`gamma_schedule`] — the log-linear ramp used for natural-gradient step
//!   sizes: from `1e-4` up to `0.1` over the first five steps, flat after.

use nalgebra::DVector;
use thiserror::Error;

mod adam;
mod cgd;
mod schedule;

pub use adam::AdamState;
pub use cgd::{cgd_maximize, CgdOutcome, CgdResult};
pub use schedule::{gamma_schedule, GammaSchedule};

#[derive(Debug, Error)]
pub enum OptimError {
    /// The objective could not be evaluated at the starting point, so there is
    /// no reference value to improve on.
    #[error("objective evaluation failed at the starting point")]
    StartEvalFailed,

    /// The objective produced a NaN or infinity at the starting point.
    #[error("objective is non-finite at the starting point: {value}")]
    NonFiniteStart { value: f64 },

    /// A gradient handed to Adam contained a NaN or infinity.
    #[error("non-finite gradient entry {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },

    /// Mismatched vector lengths between parameters, gradients, or moments.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value violates its documented range.
    #[error("invalid optimizer configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// Shared knobs for the training loops. The Wolfe constants `c1 < c2` control
/// the sufficient-decrease and curvature conditions of the line search.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Line-search budget for conjugate-gradient runs.
    pub max_line_searches: usize,
    /// Sufficient-decrease constant (Armijo).
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Adam step size.
    pub adam_step: f64,
    /// Natural-gradient step-size ramp.
    pub schedule: GammaSchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_line_searches: 100,
            c1: 1e-4,
            c2: 0.9,
            adam_step: 0.01,
            schedule: GammaSchedule::default(),
        }
    }
}

impl OptimizerConfig {
    /// Checks `0 < c1 < c2 < 1` and positivity of the step sizes.
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(OptimError::InvalidConfig {
                reason: format!(
                    "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={}, c2={}",
                    self.c1, self.c2
                ),
            });
        }
        if !(self.adam_step.is_finite() && self.adam_step > 0.0) {
            return Err(OptimError::InvalidConfig {
                reason: format!("Adam step must be positive and finite, got {}", self.adam_step),
            });
        }
        self.schedule.validate()
    }
}

/// Objective callback contract: given parameters, return the value and the
/// gradient of the function being *maximized*, or `None` when the point is
/// not evaluable (e.g. a Cholesky failure deep inside a model). A `None` is
/// treated as a rejected step by the line search, never as convergence.
pub type Objective<'a> = dyn FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)> + 'a;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        OptimizerConfig::default().validate().unwrap();
    }

    #[test]
    fn swapped_wolfe_constants_are_rejected() {
        let cfg = OptimizerConfig {
            c1: 0.9,
            c2: 1e-4,
            ..OptimizerConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, OptimError::InvalidConfig { .. }));
    }

    #[test]
    fn non_positive_adam_step_is_rejected() {
        let cfg = OptimizerConfig {
            adam_step: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
