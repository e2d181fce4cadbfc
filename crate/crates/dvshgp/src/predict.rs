//! Committee prediction: per-expert latent posteriors, aggregated per
//! point.

use nalgebra::DMatrix;
use vshgp::{predict_latent, LatentPrediction, Workspace};

use crate::aggregate::{aggregate_f, aggregate_g};
use crate::elbo::for_each_expert;
use crate::model::DvshgpModel;
use crate::DvshgpError;

/// Exponent bound above which `exp(mu + var/2)` overflows f64.
const MAX_NOISE_EXPONENT: f64 = 700.0;

/// The aggregated predictive distribution at one test point.
#[derive(Debug, Clone)]
pub struct AggregatedPrediction {
    /// Aggregated posterior mean of the mean function `f`.
    pub mu_f: f64,
    /// Aggregated posterior variance of `f`.
    pub var_f: f64,
    /// Aggregated posterior mean of the log-noise function `g`.
    pub mu_g: f64,
    /// Aggregated posterior variance of `g`.
    pub var_g: f64,
    /// Predictive mean of the observation `y*` (equals `mu_f`).
    pub mean: f64,
    /// Predictive variance of `y*`: `var_f + exp(mu_g + var_g / 2)`.
    pub variance: f64,
    /// Per-expert entropy weights for the `f` aggregation.
    pub weights_f: Vec<f64>,
    /// Per-expert entropy weights for the `g` aggregation.
    pub weights_g: Vec<f64>,
}

/// Predicts at each row of `x_star`, aggregating the expert posteriors.
///
/// Every expert predicts the full batch (in parallel over experts); the two
/// latent functions are then aggregated per point with the entropy-weighted
/// committee rules, using the shared kernels' marginal variance as the
/// prior variance and the shared `mu0` as the log-noise prior mean.
///
/// The outer `Result` covers whole-batch failures (shape errors, an expert
/// whose posterior cannot be evaluated). The inner per-point `Result`
/// isolates pointwise aggregation failures — a collapsed precision or an
/// overflowing noise exponent at one test point leaves every other point's
/// prediction intact.
pub fn predict(
    model: &DvshgpModel,
    x_star: &DMatrix<f64>,
) -> Result<Vec<Result<AggregatedPrediction, DvshgpError>>, DvshgpError> {
    if x_star.ncols() != model.dim() {
        return Err(DvshgpError::dim(
            "test input columns",
            model.dim(),
            x_star.ncols(),
        ));
    }

    let latents: Vec<LatentPrediction> = for_each_expert(model, |_, expert| {
        let ws = Workspace::build(expert)?;
        predict_latent(expert, &ws, x_star)
    })?;

    let prior_var_f = model.kernel_f().signal_variance();
    let prior_var_g = model.kernel_g().signal_variance();
    let mu0 = model.mu0();
    let experts = latents.len();

    let per_point = (0..x_star.nrows())
        .map(|j| {
            let mut means_f = Vec::with_capacity(experts);
            let mut vars_f = Vec::with_capacity(experts);
            let mut means_g = Vec::with_capacity(experts);
            let mut vars_g = Vec::with_capacity(experts);
            for latent in &latents {
                means_f.push(latent.mu_f[j]);
                vars_f.push(latent.var_f[j]);
                means_g.push(latent.mu_g[j]);
                vars_g.push(latent.var_g[j]);
            }
            let f = aggregate_f(&means_f, &vars_f, prior_var_f)?;
            let g = aggregate_g(&means_g, &vars_g, mu0, prior_var_g)?;
            let exponent = g.mean + g.variance / 2.0;
            if exponent > MAX_NOISE_EXPONENT {
                return Err(DvshgpError::NoiseOverflow { index: j, exponent });
            }
            Ok(AggregatedPrediction {
                mu_f: f.mean,
                var_f: f.variance,
                mu_g: g.mean,
                var_g: g.variance,
                mean: f.mean,
                variance: f.variance + exponent.exp(),
                weights_f: f.weights,
                weights_g: g.weights,
            })
        })
        .collect();
    Ok(per_point)
}
