//! Predictive distributions at test inputs.

use nalgebra::{DMatrix, DVector};
use vshgp_kernel::kernel_matrix;

use crate::model::VshgpModel;
use crate::workspace::Workspace;
use crate::VshgpError;

/// Marginal posteriors of the two latent functions at a batch of test
/// inputs, one entry per test point.
#[derive(Debug, Clone)]
pub struct LatentPrediction {
    /// Posterior mean of the mean function `f`.
    pub mu_f: DVector<f64>,
    /// Posterior variance of `f`.
    pub var_f: DVector<f64>,
    /// Posterior mean of the log-noise function `g`.
    pub mu_g: DVector<f64>,
    /// Posterior variance of `g`.
    pub var_g: DVector<f64>,
}

/// The optimal Gaussian posterior over the mean-function inducing values.
#[derive(Debug, Clone)]
pub struct FmPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// The optimal posterior `q(f_m) = N(K_mm K_R^{-1} K_mn R^{-1} y,
/// K_mm K_R^{-1} K_mm)` with `K_R = K_mm + K_mn R^{-1} K_nm`.
///
/// This is the distribution the collapsed bound implicitly optimizes over;
/// it is also the fixed point that one unit-step natural-gradient update of
/// an explicit mean-function posterior lands on.
pub fn posterior_fm(ws: &Workspace) -> Result<FmPosterior, VshgpError> {
    let mean = &ws.kf_mm * &ws.alpha_f;
    // cov = K_mm K_R^{-1} K_mm with K_R = (Lm LB)(Lm LB)^T, so
    // cov = C^T C with C = LB^{-1} Lm^{-1} K_mm.
    let c = ws.chol_b.solve_lower(&ws.chol_kf_mm.solve_lower(&ws.kf_mm));
    let cov = c.transpose() * &c;
    Ok(FmPosterior { mean, cov })
}

/// Latent means and variances at the rows of `x_star`.
pub fn predict_latent(
    model: &VshgpModel,
    ws: &Workspace,
    x_star: &DMatrix<f64>,
) -> Result<LatentPrediction, VshgpError> {
    if x_star.ncols() != model.dim() {
        return Err(VshgpError::dim(
            "test input columns",
            model.dim(),
            x_star.ncols(),
        ));
    }
    if !x_star.iter().all(|v| v.is_finite()) {
        return Err(VshgpError::NonFinite {
            context: "test inputs",
        });
    }
    let n_star = x_star.nrows();
    let sf2 = model.kernel_f().signal_variance();
    let sg2 = model.kernel_g().signal_variance();

    // Mean function: mu_f* = k_*m alpha_f,
    // var_f* = k_** - ||Lm^{-1} k_m*||^2 + ||(Lm LB)^{-1} k_m*||^2.
    let k_sm = kernel_matrix(x_star, model.xm(), model.kernel_f())?;
    let a = ws.chol_kf_mm.solve_lower(&k_sm.transpose());
    let ab = ws.chol_b.solve_lower(&a);
    let mu_f = &k_sm * &ws.alpha_f;
    let var_f = DVector::from_fn(n_star, |j, _| {
        // Exact cancellation can leave a tiny negative; clamp to zero.
        (sf2 - a.column(j).norm_squared() + ab.column(j).norm_squared()).max(0.0)
    });

    // Log-noise function: mu_g* = k_*u U^{-1} (mu_u - mu0 1) + mu0,
    // var_g* = k_** - ||Lu^{-1} k_u*||^2 + ||L_Lambda^{-1} k_u*||^2.
    let k_su = kernel_matrix(x_star, model.xu(), model.kernel_g())?;
    let b = ws.chol_kg_uu.solve_lower(&k_su.transpose());
    let bl = ws.chol_k_lambda.solve_lower(&k_su.transpose());
    let mu_g = &k_su * &ws.u_inv_gamma + DVector::from_element(n_star, model.mu0());
    let var_g = DVector::from_fn(n_star, |j, _| {
        (sg2 - b.column(j).norm_squared() + bl.column(j).norm_squared()).max(0.0)
    });

    Ok(LatentPrediction {
        mu_f,
        var_f,
        mu_g,
        var_g,
    })
}

/// Observation-space predictive moments: `E[y*] = mu_f*` and
/// `Var[y*] = var_f* + exp(mu_g* + var_g*/2)` (the mean of the log-normal
/// noise variance).
///
/// Fails if `mu_g* + var_g*/2` exceeds 700 anywhere, where `exp` would
/// overflow; such a state means the noise model has diverged rather than
/// that the prediction is meaningfully infinite.
pub fn predict_y(latent: &LatentPrediction) -> Result<(DVector<f64>, DVector<f64>), VshgpError> {
    let n = latent.mu_f.len();
    let mut var = DVector::zeros(n);
    for i in 0..n {
        let exponent = latent.mu_g[i] + 0.5 * latent.var_g[i];
        if exponent > 700.0 {
            return Err(VshgpError::NoiseOverflow { index: i, exponent });
        }
        var[i] = latent.var_f[i] + exponent.exp();
    }
    Ok((latent.mu_f.clone(), var))
}
