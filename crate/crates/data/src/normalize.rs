//! Zero-mean, unit-variance normalization with exact inversion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Per-column input means/stds and target mean/std, fitted on one dataset
/// and applicable to any other with the same width (e.g. test inputs get the
/// training-set transform). Columns whose population std is numerically zero
/// are flagged and their std pinned to 1 so the transform stays invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    constant_x: Vec<bool>,
    constant_y: bool,
}

/// Population stds at or below this are treated as constant columns.
const CONSTANT_TOL: f64 = 1e-12;

impl NormStats {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        if x.nrows() == 0 {
            // Identity transform for degenerate (empty) slices.
            return Self {
                x_mean: vec![0.0; x.ncols()],
                x_std: vec![1.0; x.ncols()],
                y_mean: 0.0,
                y_std: 1.0,
                constant_x: vec![true; x.ncols()],
                constant_y: true,
            };
        }
        let n = x.nrows() as f64;
        let mut x_mean = Vec::with_capacity(x.ncols());
        let mut x_std = Vec::with_capacity(x.ncols());
        let mut constant_x = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            let constant = std <= CONSTANT_TOL;
            x_mean.push(mean);
            x_std.push(if constant { 1.0 } else { std });
            constant_x.push(constant);
        }
        let (y_mean, y_var) = crate::population_mean_var(y);
        let y_sd = y_var.sqrt();
        let constant_y = y_sd <= CONSTANT_TOL;
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std: if constant_y { 1.0 } else { y_sd },
            constant_x,
            constant_y,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }

    /// Which input columns were constant when fitted (std pinned to 1).
    pub fn constant_x_columns(&self) -> &[bool] {
        &self.constant_x
    }

    pub fn y_is_constant(&self) -> bool {
        self.constant_y
    }

    pub fn normalize_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn denormalize_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            for v in out.column_mut(j).iter_mut() {
                *v = *v * s + m;
            }
        }
        out
    }

    pub fn normalize_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.y_mean) / self.y_std)
    }

    /// Maps a predicted mean on the normalized scale back to the original.
    pub fn denormalize_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.y_std + self.y_mean)
    }

    /// Variances scale by the square of the target std.
    pub fn denormalize_y_var(&self, var: &DVector<f64>) -> DVector<f64> {
        var * (self.y_std * self.y_std)
    }

    /// A latent *log*-variance (the log-noise process) denormalizes by an
    /// additive shift of `2 ln(y_std)`.
    pub fn denormalize_log_var(&self, log_var: &DVector<f64>) -> DVector<f64> {
        log_var.add_scalar(2.0 * self.y_std.ln())
    }
}
