//! Predictive distributions under the explicit variational state.

use nalgebra::{DMatrix, DVector};
use vshgp::LatentPrediction;
use vshgp_kernel::{chol_jitter, kernel_matrix};

use crate::model::SvshgpModel;
use crate::SvshgpError;

/// Latent predictive means and variances at new inputs.
///
/// Both latent processes follow the same pattern: project the inducing
/// posterior through the kernel, so e.g.
/// `mu_f* = k_{*m} K_mm^{-1} mu_m` and
/// `var_f* = k_** - k_{*m} K_mm^{-1} k_{m*} + k_{*m} K_mm^{-1} Sigma_m K_mm^{-1} k_{m*}`.
/// The result feeds the same observation-space helpers as the collapsed
/// model ([`vshgp::predict_y`], [`vshgp::log_predictive_density`]).
pub fn predict_latent(
    model: &SvshgpModel,
    x_star: &DMatrix<f64>,
) -> Result<LatentPrediction, SvshgpError> {
    if x_star.ncols() != model.dim() {
        return Err(crate::dim_err(
            "prediction input dimension",
            model.dim(),
            x_star.ncols(),
        ));
    }
    let q = model.q();
    let n_star = x_star.nrows();

    let kf_sm = kernel_matrix(x_star, model.xm(), model.kernel_f())?;
    let kf_mm = kernel_matrix(model.xm(), model.xm(), model.kernel_f())?;
    let chol_f = chol_jitter(&kf_mm)?;
    let om_f = chol_f.solve(&kf_sm.transpose()).transpose();
    let mu_f = &om_f * q.mu_m();
    let pf = &om_f * q.l_m();
    let sf2 = model.kernel_f().signal_variance();
    let var_f = DVector::from_fn(n_star, |i, _| {
        (sf2 - om_f.row(i).dot(&kf_sm.row(i)) + pf.row(i).norm_squared()).max(0.0)
    });

    let kg_su = kernel_matrix(x_star, model.xu(), model.kernel_g())?;
    let kg_uu = kernel_matrix(model.xu(), model.xu(), model.kernel_g())?;
    let chol_g = chol_jitter(&kg_uu)?;
    let om_g = chol_g.solve(&kg_su.transpose()).transpose();
    let gam = q.mu_u() - DVector::from_element(model.u(), model.mu0());
    let mu_g = &om_g * gam + DVector::from_element(n_star, model.mu0());
    let pg = &om_g * q.l_u();
    let sg2 = model.kernel_g().signal_variance();
    let var_g = DVector::from_fn(n_star, |i, _| {
        (sg2 - om_g.row(i).dot(&kg_su.row(i)) + pg.row(i).norm_squared()).max(0.0)
    });

    for (name, v) in [
        ("latent mean prediction", &mu_f),
        ("latent noise prediction", &mu_g),
    ] {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SvshgpError::NonFinite {
                context: name.into(),
            });
        }
    }

    Ok(LatentPrediction {
        mu_f,
        var_f,
        mu_g,
        var_g,
    })
}
