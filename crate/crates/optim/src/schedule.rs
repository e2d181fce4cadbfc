//! Step-size ramp for natural-gradient updates.

use serde::{Deserialize, Serialize};

use crate::OptimError;

/// Log-linear ramp: the step size climbs geometrically from `start` to `end`
/// over the first `ramp_steps` steps and stays at `end` afterwards. The
/// default ramp covers three orders of magnitude in five steps, which lets
/// the first natural-gradient updates stay tame while the variational state
/// is still far from any optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub start: f64,
    pub end: f64,
    pub ramp_steps: u32,
}

impl Default for GammaSchedule {
    fn default() -> Self {
        Self {
            start: 1e-4,
            end: 0.1,
            ramp_steps: 5,
        }
    }
}

impl GammaSchedule {
    pub fn validate(&self) -> Result<(), OptimError> {
        for (name, value) in [("start", self.start), ("end", self.end)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(OptimError::InvalidConfig {
                    reason: format!("schedule {name} must be positive and finite, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Step size at (possibly fractional) step `t >= 0`. Exactly `start` at
/// `t = 0` and exactly `end` from `t = ramp_steps` on.
pub fn gamma_schedule(t: f64, schedule: &GammaSchedule) -> f64 {
    let ramp = f64::from(schedule.ramp_steps);
    if t <= 0.0 || schedule.start == schedule.end {
        schedule.start
    } else if t >= ramp {
        schedule.end
    } else {
        let log_start = schedule.start.ln();
        let log_end = schedule.end.ln();
        (log_start + (log_end - log_start) * t / ramp).exp()
    }
}
