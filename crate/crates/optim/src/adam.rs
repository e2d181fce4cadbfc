//! Adam with bias-corrected moments, oriented for gradient ascent.

use nalgebra::DVector;

use crate::OptimError;

/// Per-parameter first and second moment estimates plus the step counter.
/// One state drives one parameter vector; interleaving two vectors through
/// the same state would corrupt the moments, so the dimension is fixed at
/// construction and checked on every step.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: DVector<f64>,
    v: DVector<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    /// Standard coefficients: decay rates 0.9 and 0.999, epsilon 1e-8.
    pub fn new(dim: usize) -> Self {
        Self {
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Custom decay rates; each must lie in `[0, 1)` and epsilon must be
    /// positive.
    pub fn with_coefficients(
        dim: usize,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self, OptimError> {
        for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(OptimError::InvalidConfig {
                    reason: format!("{name} must lie in [0, 1), got {beta}"),
                });
            }
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(OptimError::InvalidConfig {
                reason: format!("epsilon must be positive and finite, got {epsilon}"),
            });
        }
        Ok(Self {
            beta1,
            beta2,
            epsilon,
            ..Self::new(dim)
        })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Number of steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One ascent step: `params += step * m_hat / (sqrt(v_hat) + epsilon)`
    /// where the hats denote bias-corrected moments. Rejects non-finite
    /// gradient entries and dimension mismatches without touching any state.
    pub fn ascend(
        &mut self,
        params: &mut DVector<f64>,
        grad: &DVector<f64>,
        step: f64,
    ) -> Result<(), OptimError> {
        if grad.len() != self.dim() {
            return Err(OptimError::DimensionMismatch {
                context: "Adam gradient",
                expected: self.dim(),
                got: grad.len(),
            });
        }
        if params.len() != self.dim() {
            return Err(OptimError::DimensionMismatch {
                context: "Adam parameters",
                expected: self.dim(),
                got: params.len(),
            });
        }
        if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { index, value });
        }

        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..self.dim() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] += step * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
