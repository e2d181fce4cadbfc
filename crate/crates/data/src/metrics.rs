//! Standardized regression metrics.
//!
//! Both metrics compare against the trivial predictor that always answers
//! with the training moments: SMSE divides the squared error by the target
//! variance (1 means "no better than the mean"), MSLL subtracts the trivial
//! model's log loss from the model's (0 means "no better", negative is
//! better).

use nalgebra::DVector;

use crate::{population_mean_var, DataError};

/// Mean squared error divided by the population variance of `y_true`.
/// Predicting the mean of `y_true` everywhere gives exactly 1.
pub fn smse(y_true: &DVector<f64>, mu_pred: &DVector<f64>) -> Result<f64, DataError> {
    if y_true.len() != mu_pred.len() {
        return Err(DataError::DimensionMismatch {
            context: "SMSE arguments".into(),
            expected: y_true.len(),
            got: mu_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(DataError::InvalidSplit {
            reason: "SMSE needs at least two points".into(),
        });
    }
    let (_, var) = population_mean_var(y_true);
    if var <= 0.0 {
        return Err(DataError::ZeroTargetVariance);
    }
    let mse = (y_true - mu_pred).norm_squared() / y_true.len() as f64;
    Ok(mse / var)
}

/// Mean standardized log loss: the average of
/// `-log_pred_density_i - (-log N(y_i | train_mean, train_var))`.
/// The trivial predictor `N(train_mean, train_var)` scores exactly 0.
pub fn msll(
    y_true: &DVector<f64>,
    log_pred_density: &DVector<f64>,
    train_mean: f64,
    train_var: f64,
) -> Result<f64, DataError> {
    if y_true.len() != log_pred_density.len() {
        return Err(DataError::DimensionMismatch {
            context: "MSLL arguments".into(),
            expected: y_true.len(),
            got: log_pred_density.len(),
        });
    }
    if !(train_var > 0.0 && train_var.is_finite()) {
        return Err(DataError::NonPositiveTrainVariance { value: train_var });
    }
    if let Some(bad) = log_pred_density.iter().find(|v| !v.is_finite()) {
        return Err(DataError::NonFinite {
            context: format!("log predictive density ({bad})"),
        });
    }
    let total: f64 = y_true
        .iter()
        .zip(log_pred_density.iter())
        .map(|(&y, &lpd)| -lpd + gaussian_log_density(y, train_mean, train_var))
        .sum();
    Ok(total / y_true.len() as f64)
}

/// `log N(y | mean, var)`; the building block for moment-matched predictive
/// densities and the trivial-model baseline.
pub fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let diff = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn predicting_the_mean_scores_exactly_one() {
        let y = DVector::from_vec(vec![1.0, 4.0, -2.0, 0.5]);
        let mean = y.sum() / 4.0;
        let pred = DVector::from_element(4, mean);
        assert_relative_eq!(smse(&y, &pred).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let y = DVector::from_vec(vec![1.0, 4.0, -2.0, 0.5]);
        assert_eq!(smse(&y, &y.clone()).unwrap(), 0.0);
    }

    #[test]
    fn smse_matches_a_hand_computed_instance() {
        // y = [0, 2, 4, 6]: mean 3, population variance (9+1+1+9)/4 = 5.
        // pred = [1, 1, 5, 5]: squared errors 1, 1, 1, 1 -> MSE 1.
        let y = DVector::from_vec(vec![0.0, 2.0, 4.0, 6.0]);
        let pred = DVector::from_vec(vec![1.0, 1.0, 5.0, 5.0]);
        assert_relative_eq!(smse(&y, &pred).unwrap(), 1.0 / 5.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_targets_are_rejected() {
        let y = DVector::from_element(3, 2.5);
        let pred = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            smse(&y, &pred).unwrap_err(),
            DataError::ZeroTargetVariance
        ));
    }

    #[test]
    fn trivial_predictor_msll_is_zero() {
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let (mean, var) = crate::population_mean_var(&y);
        let lpd = y.map(|yi| gaussian_log_density(yi, mean, var));
        assert_relative_eq!(msll(&y, &lpd, mean, var).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sharper_centered_predictor_is_negative() {
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let (mean, var) = crate::population_mean_var(&y);
        // Densities centered on the truth with a tenth of the variance.
        let lpd = y.map(|yi| gaussian_log_density(yi, yi, var / 10.0));
        assert!(msll(&y, &lpd, mean, var).unwrap() < 0.0);
    }

    #[test]
    fn msll_matches_a_three_point_hand_computation() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let lpd = DVector::from_vec(vec![-0.5, -1.0, -1.5]);
        let (mean, var) = (2.0, 4.0);
        // Trivial log densities: -0.5 ln(8 pi) - (y - 2)^2 / 8.
        let trivial: Vec<f64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&yi| -0.5 * (8.0 * std::f64::consts::PI).ln() - (yi - 2.0) * (yi - 2.0) / 8.0)
            .collect();
        let expected = ((0.5 + trivial[0]) + (1.0 + trivial[1]) + (1.5 + trivial[2])) / 3.0;
        assert_relative_eq!(
            msll(&y, &lpd, mean, var).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn non_finite_density_and_bad_variance_are_rejected() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let lpd = DVector::from_vec(vec![-0.5, f64::NEG_INFINITY]);
        assert!(matches!(
            msll(&y, &lpd, 0.0, 1.0).unwrap_err(),
            DataError::NonFinite { .. }
        ));
        let ok = DVector::from_vec(vec![-0.5, -0.5]);
        assert!(matches!(
            msll(&y, &ok, 0.0, 0.0).unwrap_err(),
            DataError::NonPositiveTrainVariance { .. }
        ));
    }
}
