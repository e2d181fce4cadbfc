//! Robust Bayesian committee aggregation of expert posteriors.
//!
//! Each expert's vote at a test point is weighted by the differential
//! entropy its posterior has lost relative to the prior: `w_i = (ln prior
//! variance - ln posterior variance) / 2`. The aggregated precision blends
//! the weighted expert precisions with the prior precision at weight
//! `1 - sum(w_i)`, so experts that have not contracted from the prior
//! contribute nothing and the aggregate falls back to the prior.
//!
//! With these entropy weights the aggregated precision is provably at least
//! the prior precision: writing `t_i` for `prior_var / var_i`, the excess
//! precision is `sum(ln(t_i) * (t_i - 1)) / (2 * prior_var)`, and every
//! term is non-negative because `ln(t)` and `t - 1` share their sign. The
//! non-positive-precision error below is therefore unreachable for honest
//! inputs; it guards against future weighting schemes and NaN propagation
//! rather than a reachable state of this one.

use crate::DvshgpError;

/// An aggregated Gaussian and the per-expert weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Aggregated posterior mean.
    pub mean: f64,
    /// Aggregated posterior variance.
    pub variance: f64,
    /// Entropy weight of each expert, in expert order (signed: an expert
    /// whose posterior variance exceeds the prior gets a negative weight).
    pub weights: Vec<f64>,
}

/// Aggregates expert posteriors of the zero-mean latent function.
///
/// `prior_variance` is the prior marginal variance at the test point. The
/// prior mean is zero, so an empty contraction (all weights zero) returns
/// mean zero and the prior variance.
pub fn aggregate_f(
    means: &[f64],
    variances: &[f64],
    prior_variance: f64,
) -> Result<Aggregate, DvshgpError> {
    aggregate_with_prior(means, variances, 0.0, prior_variance)
}

/// Aggregates expert posteriors of the log-noise latent function, whose
/// prior mean `prior_mean` is generally non-zero.
///
/// The residual prior weight `1 - sum(w_i)` multiplies the prior's own
/// precision-weighted mean, so all-zero weights return exactly
/// `(prior_mean, prior_variance)`.
pub fn aggregate_g(
    means: &[f64],
    variances: &[f64],
    prior_mean: f64,
    prior_variance: f64,
) -> Result<Aggregate, DvshgpError> {
    aggregate_with_prior(means, variances, prior_mean, prior_variance)
}

fn aggregate_with_prior(
    means: &[f64],
    variances: &[f64],
    prior_mean: f64,
    prior_variance: f64,
) -> Result<Aggregate, DvshgpError> {
    if means.len() != variances.len() {
        return Err(DvshgpError::InvalidAggregation {
            reason: format!(
                "{} means but {} variances",
                means.len(),
                variances.len()
            ),
        });
    }
    if means.is_empty() {
        return Err(DvshgpError::InvalidAggregation {
            reason: "the committee is empty".to_string(),
        });
    }
    if !(prior_variance > 0.0 && prior_variance.is_finite()) {
        return Err(DvshgpError::InvalidAggregation {
            reason: format!("prior variance {prior_variance} is not a positive finite number"),
        });
    }
    if !prior_mean.is_finite() {
        return Err(DvshgpError::InvalidAggregation {
            reason: format!("prior mean {prior_mean} is not finite"),
        });
    }
    for (i, (&mu, &var)) in means.iter().zip(variances).enumerate() {
        if !(var > 0.0 && var.is_finite()) {
            return Err(DvshgpError::InvalidAggregation {
                reason: format!("expert {i} variance {var} is not a positive finite number"),
            });
        }
        if !mu.is_finite() {
            return Err(DvshgpError::InvalidAggregation {
                reason: format!("expert {i} mean {mu} is not finite"),
            });
        }
    }

    let log_prior = prior_variance.ln();
    let weights: Vec<f64> = variances
        .iter()
        .map(|&var| 0.5 * (log_prior - var.ln()))
        .collect();
    let weight_sum: f64 = weights.iter().sum();

    let precision = weights
        .iter()
        .zip(variances)
        .map(|(&w, &var)| w / var)
        .sum::<f64>()
        + (1.0 - weight_sum) / prior_variance;
    if !(precision > 0.0 && precision.is_finite()) {
        return Err(DvshgpError::AggregationCollapse {
            precision,
            weights,
        });
    }

    let variance = 1.0 / precision;
    let weighted_means = weights
        .iter()
        .zip(means)
        .zip(variances)
        .map(|((&w, &mu), &var)| w * mu / var)
        .sum::<f64>()
        + (1.0 - weight_sum) * prior_mean / prior_variance;
    let mean = variance * weighted_means;

    Ok(Aggregate {
        mean,
        variance,
        weights,
    })
}
