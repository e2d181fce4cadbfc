//! Natural-gradient updates for the two variational Gaussians.
//!
//! For an exponential-family Gaussian the natural parameters are
//! `theta1 = Sigma^{-1} mu` and `Theta2 = -1/2 Sigma^{-1}`, and the natural
//! gradient of the bound with respect to them equals the ordinary gradient
//! with respect to the expectation parameters `psi1 = mu` and
//! `Psi2 = mu mu^T + Sigma`; the chain rule collapses to
//! `dF/dpsi1 = g_mu - 2 G mu` and `dF/dPsi2 = G`, where `g_mu` and `G` are
//! the covariance-space gradients. One step of size `gamma` is therefore
//!
//! ```text
//! Sigma'^{-1} = Sigma^{-1} - 2 gamma G
//! Sigma'^{-1} mu' = Sigma^{-1} mu + gamma (g_mu - 2 G mu)
//! ```
//!
//! A unit step with the noise block held fixed solves the f-block exactly,
//! landing on the closed-form optimum of `q(f_m)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::bound::BatchGradients;
use crate::state::ExplicitVariational;
use crate::SvshgpError;

/// Natural and expectation parameters of one Gaussian, convertible to and
/// from the moment parameterization.
#[derive(Debug, Clone)]
pub struct NaturalParams {
    /// `Sigma^{-1} mu`
    pub theta1: DVector<f64>,
    /// `-1/2 Sigma^{-1}` (negative definite)
    pub theta2: DMatrix<f64>,
    /// `mu`
    pub psi1: DVector<f64>,
    /// `mu mu^T + Sigma` (so `psi2 - psi1 psi1^T` is positive definite)
    pub psi2: DMatrix<f64>,
}

impl NaturalParams {
    pub fn from_moments(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Self, SvshgpError> {
        let sym = (sigma + sigma.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone()).ok_or_else(|| SvshgpError::InvalidState {
            reason: "covariance is not positive definite".into(),
        })?;
        let sigma_inv = chol.inverse();
        Ok(NaturalParams {
            theta1: &sigma_inv * mu,
            theta2: sigma_inv * -0.5,
            psi1: mu.clone(),
            psi2: &sym + mu * mu.transpose(),
        })
    }

    /// Recovers `(mu, Sigma)` from the natural pair.
    pub fn to_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>), SvshgpError> {
        let prec = self.theta2.clone() * -2.0;
        let chol = Cholesky::new((&prec + prec.transpose()) * 0.5).ok_or_else(|| {
            SvshgpError::InvalidState {
                reason: "natural parameters imply an indefinite precision".into(),
            }
        })?;
        let mu = chol.solve(&self.theta1);
        let sigma = chol.inverse();
        Ok((mu, sigma))
    }
}

/// One natural-gradient step on a single Gaussian block.
///
/// Takes the current moments (`mu`, lower factor `l` of `Sigma`), the
/// covariance-space gradients, and the step size; returns the updated
/// moments, or `None` when the updated precision leaves the
/// positive-definite cone and the step must be rejected.
pub fn natural_block_step(
    mu: &DVector<f64>,
    l: &DMatrix<f64>,
    g_mu: &DVector<f64>,
    g_sigma: &DMatrix<f64>,
    gamma: f64,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    if g_mu.iter().all(|v| *v == 0.0) && g_sigma.iter().all(|v| *v == 0.0) {
        return Some((mu.clone(), l.clone()));
    }
    let dim = mu.len();
    let identity = DMatrix::identity(dim, dim);
    let inv_l = l.solve_lower_triangular(&identity)?;
    let sigma_inv = inv_l.transpose() * &inv_l;
    let gs = (g_sigma + g_sigma.transpose()) * 0.5;

    let prec_new = &sigma_inv - 2.0 * gamma * &gs;
    let prec_sym = (&prec_new + prec_new.transpose()) * 0.5;
    let chol_prec = Cholesky::new(prec_sym)?;

    let theta1_new = &sigma_inv * mu + gamma * (g_mu - 2.0 * (&gs * mu));
    let mu_new = chol_prec.solve(&theta1_new);
    let sigma_new = chol_prec.inverse();
    let l_new = Cholesky::new((&sigma_new + sigma_new.transpose()) * 0.5)?.unpack();

    if mu_new.iter().any(|v| !v.is_finite()) || l_new.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((mu_new, l_new))
}

fn stepped_block(
    name: &'static str,
    mu: &DVector<f64>,
    l: &DMatrix<f64>,
    g_mu: &DVector<f64>,
    g_sigma: &DMatrix<f64>,
    gamma: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), SvshgpError> {
    const MAX_HALVINGS: u32 = 10;
    let mut step = gamma;
    for _ in 0..=MAX_HALVINGS {
        if let Some(update) = natural_block_step(mu, l, g_mu, g_sigma, step) {
            return Ok(update);
        }
        step *= 0.5;
    }
    Err(SvshgpError::NaturalStepRejected {
        block: name,
        gamma: step * 2.0,
        halvings: MAX_HALVINGS,
    })
}

/// One natural-gradient step on both variational Gaussians.
///
/// Each block is updated independently; a block whose precision update is
/// not positive definite has its step halved (up to ten times) before the
/// whole update is declared failed.
///
/// Steps do not compose linearly: two successive steps at `gamma` differ
/// from one step at `2 * gamma` because the natural metric is re-evaluated
/// at the intermediate state. Callers owning a schedule should apply it one
/// step at a time rather than merging increments.
pub fn natural_step(
    q: &ExplicitVariational,
    grads: &BatchGradients,
    gamma: f64,
) -> Result<ExplicitVariational, SvshgpError> {
    if !(gamma.is_finite() && gamma > 0.0 && gamma <= 1.0) {
        return Err(SvshgpError::InvalidState {
            reason: format!("natural-gradient step size must be in (0, 1], got {gamma}"),
        });
    }
    let (mu_m, l_m) = stepped_block(
        "q(f_m)",
        q.mu_m(),
        q.l_m(),
        &grads.mu_m,
        &grads.sigma_m,
        gamma,
    )?;
    let (mu_u, l_u) = stepped_block(
        "q(g_u)",
        q.mu_u(),
        q.l_u(),
        &grads.mu_u,
        &grads.sigma_u,
        gamma,
    )?;
    let mut out = q.clone();
    out.replace_f(mu_m, l_m);
    out.replace_g(mu_u, l_u);
    out.validate()?;
    Ok(out)
}
