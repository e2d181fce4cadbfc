//! Factorized evidence lower bound and its mini-batch gradients.
//!
//! The bound is a sum of per-point expected log-likelihood terms minus two
//! KL penalties. A batch estimate scales the data sum by `n / |B|`, leaving
//! the KL terms untouched, which makes it unbiased under uniformly drawn
//! batches. Per call, only the `|B|` touched rows enter any product, so the
//! cost is `O(|B| m^2 + |B| u^2 + m^3 + u^3)` regardless of `n`.

use nalgebra::{DMatrix, DVector};
use vshgp_kernel::{
    chol_jitter, kernel_matrix, weighted_input_grads, weighted_param_grads, CholJitter, Side,
};

use crate::model::SvshgpModel;
use crate::SvshgpError;

/// Gradients of the batch-estimated bound with respect to the variational
/// state (covariance-space) and every hyperparameter block.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub mu_m: DVector<f64>,
    pub sigma_m: DMatrix<f64>,
    pub mu_u: DVector<f64>,
    pub sigma_u: DMatrix<f64>,
    /// Log-domain kernel gradients in `KernelParams::log_params` order.
    pub kernel_f: DVector<f64>,
    pub kernel_g: DVector<f64>,
    pub mu0: f64,
    pub xm: DMatrix<f64>,
    pub xu: DMatrix<f64>,
}

impl BatchGradients {
    /// Packs the hyperparameter gradients in [`SvshgpModel::packed_hypers`]
    /// order.
    pub fn packed_hypers(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(
            self.kernel_f.len() + self.kernel_g.len() + 1 + self.xm.len() + self.xu.len(),
        );
        out.extend(self.kernel_f.iter().copied());
        out.extend(self.kernel_g.iter().copied());
        out.push(self.mu0);
        out.extend(self.xm.transpose().iter().copied());
        out.extend(self.xu.transpose().iter().copied());
        DVector::from_vec(out)
    }
}

/// Per-batch-row moments of the two latent processes under the current
/// variational state, plus the factorizations they were built from.
struct BatchMoments {
    rho: f64,
    xb: DMatrix<f64>,
    yb: DVector<f64>,
    kf_bm: DMatrix<f64>,
    kf_mm: DMatrix<f64>,
    chol_f: CholJitter,
    om_f: DMatrix<f64>,
    mu_f: DVector<f64>,
    sf: DVector<f64>,
    kg_bu: DMatrix<f64>,
    kg_uu: DMatrix<f64>,
    chol_g: CholJitter,
    om_g: DMatrix<f64>,
    s: DVector<f64>,
    r: DVector<f64>,
}

fn check_batch(n: usize, batch: &[usize]) -> Result<(), SvshgpError> {
    if batch.is_empty() {
        return Err(SvshgpError::InvalidBatch {
            reason: "batch is empty".into(),
        });
    }
    let mut seen = vec![false; n];
    for &i in batch {
        if i >= n {
            return Err(SvshgpError::InvalidBatch {
                reason: format!("index {i} out of range for {n} data points"),
            });
        }
        if seen[i] {
            return Err(SvshgpError::InvalidBatch {
                reason: format!("index {i} appears twice"),
            });
        }
        seen[i] = true;
    }
    Ok(())
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn scale_rows(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= w[i];
    }
    out
}

fn batch_moments(model: &SvshgpModel, batch: &[usize]) -> Result<BatchMoments, SvshgpError> {
    check_batch(model.n(), batch)?;
    let q = model.q();
    let xb = select_rows(model.x(), batch);
    let yb = DVector::from_fn(batch.len(), |i, _| model.y()[batch[i]]);
    let rho = model.n() as f64 / batch.len() as f64;

    let kf_bm = kernel_matrix(&xb, model.xm(), model.kernel_f())?;
    let kf_mm = kernel_matrix(model.xm(), model.xm(), model.kernel_f())?;
    let chol_f = chol_jitter(&kf_mm)?;
    let om_f = chol_f.solve(&kf_bm.transpose()).transpose();
    let mu_f = &om_f * q.mu_m();
    let pf = &om_f * q.l_m();
    let sf2 = model.kernel_f().signal_variance();
    let sf = DVector::from_fn(batch.len(), |i, _| {
        sf2 - om_f.row(i).dot(&kf_bm.row(i)) + pf.row(i).norm_squared()
    });

    let kg_bu = kernel_matrix(&xb, model.xu(), model.kernel_g())?;
    let kg_uu = kernel_matrix(model.xu(), model.xu(), model.kernel_g())?;
    let chol_g = chol_jitter(&kg_uu)?;
    let om_g = chol_g.solve(&kg_bu.transpose()).transpose();
    let gam = q.mu_u() - DVector::from_element(model.u(), model.mu0());
    let mu_g = &om_g * gam + DVector::from_element(batch.len(), model.mu0());
    let pg = &om_g * q.l_u();
    let sg2 = model.kernel_g().signal_variance();
    let s = DVector::from_fn(batch.len(), |i, _| {
        sg2 - om_g.row(i).dot(&kg_bu.row(i)) + pg.row(i).norm_squared()
    });

    let mut r = DVector::zeros(batch.len());
    for i in 0..batch.len() {
        let value = (mu_g[i] - 0.5 * s[i]).exp();
        if !(value.is_finite() && value > 0.0) {
            return Err(SvshgpError::DegenerateNoise {
                index: batch[i],
                value,
            });
        }
        r[i] = value;
    }

    Ok(BatchMoments {
        rho,
        xb,
        yb,
        kf_bm,
        kf_mm,
        chol_f,
        om_f,
        mu_f,
        sf,
        kg_bu,
        kg_uu,
        chol_g,
        om_g,
        s,
        r,
    })
}

/// KL divergence from `N(mu_q, L_q L_q^T)` to a prior whose covariance is
/// already factored.
fn kl_to_prior(
    mu_q: &DVector<f64>,
    l_q: &DMatrix<f64>,
    mu_p: &DVector<f64>,
    chol_p: &CholJitter,
) -> f64 {
    let k = mu_q.len() as f64;
    let cross = chol_p.solve_lower(l_q);
    let white = chol_p.solve_lower_vec(&(mu_p - mu_q));
    let log_det_q = l_q.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    0.5 * (cross.norm_squared() + white.norm_squared() - k + chol_p.log_det() - log_det_q)
}

fn bound_from_moments(model: &SvshgpModel, mo: &BatchMoments) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut data = 0.0;
    for i in 0..mo.yb.len() {
        let resid = mo.yb[i] - mo.mu_f[i];
        data += -0.5 * (ln_2pi + mo.r[i].ln()) - 0.5 * resid * resid / mo.r[i]
            - 0.25 * mo.s[i]
            - 0.5 * mo.sf[i] / mo.r[i];
    }
    let q = model.q();
    let kl_f = kl_to_prior(
        q.mu_m(),
        q.l_m(),
        &DVector::zeros(model.m()),
        &mo.chol_f,
    );
    let kl_g = kl_to_prior(
        q.mu_u(),
        q.l_u(),
        &DVector::from_element(model.u(), model.mu0()),
        &mo.chol_g,
    );
    mo.rho * data - kl_f - kl_g
}

/// Batch estimate of the factorized bound: the expected log-likelihood sum
/// over `batch` scaled by `n / |B|`, minus both KL terms.
pub fn factorized_elbo(model: &SvshgpModel, batch: &[usize]) -> Result<f64, SvshgpError> {
    let mo = batch_moments(model, batch)?;
    let value = bound_from_moments(model, &mo);
    if !value.is_finite() {
        return Err(SvshgpError::NonFinite {
            context: "factorized bound".into(),
        });
    }
    Ok(value)
}

/// The exact factorized bound (every data point in the batch).
pub fn full_elbo(model: &SvshgpModel) -> Result<f64, SvshgpError> {
    let all: Vec<usize> = (0..model.n()).collect();
    factorized_elbo(model, &all)
}

/// Marginal noise variances `r_i` for every training point under the
/// current `q(g_u)`.
pub fn current_noise(model: &SvshgpModel) -> Result<DVector<f64>, SvshgpError> {
    let all: Vec<usize> = (0..model.n()).collect();
    let mo = batch_moments(model, &all)?;
    Ok(mo.r)
}

fn lower_inverse_gram(l: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>, SvshgpError> {
    // (L L^T)^{-1} = L^{-T} L^{-1}, via a triangular solve against I.
    let identity = DMatrix::identity(l.nrows(), l.nrows());
    let inv_l = l
        .solve_lower_triangular(&identity)
        .ok_or_else(|| SvshgpError::InvalidState {
            reason: format!("{context} factor is singular"),
        })?;
    Ok(inv_l.transpose() * inv_l)
}

/// Evaluates the batch bound and all its gradients in one pass.
pub fn batch_gradients(
    model: &SvshgpModel,
    batch: &[usize],
) -> Result<(f64, BatchGradients), SvshgpError> {
    let mo = batch_moments(model, batch)?;
    let value = bound_from_moments(model, &mo);
    if !value.is_finite() {
        return Err(SvshgpError::NonFinite {
            context: "factorized bound".into(),
        });
    }

    let q = model.q();
    let b = batch.len();
    let (m, u) = (model.m(), model.u());
    let identity_m = DMatrix::identity(m, m);
    let identity_u = DMatrix::identity(u, u);
    let inv_kf = mo.chol_f.solve(&identity_m);
    let inv_kg = mo.chol_g.solve(&identity_u);
    let inv_sigma_m = lower_inverse_gram(q.l_m(), "q(f_m)")?;
    let inv_sigma_u = lower_inverse_gram(q.l_u(), "q(g_u)")?;
    let sigma_m = q.sigma_m();
    let sigma_u = q.sigma_u();

    // Per-row adjoints of the data term: with respect to mu_f, sf, mu_g, s.
    let mut cv = DVector::zeros(b);
    let mut dv = DVector::zeros(b);
    let mut av = DVector::zeros(b);
    let mut bv = DVector::zeros(b);
    for i in 0..b {
        let resid = mo.yb[i] - mo.mu_f[i];
        let rr = mo.r[i];
        cv[i] = mo.rho * resid / rr;
        dv[i] = -0.5 * mo.rho / rr;
        av[i] = 0.5 * mo.rho * (resid * resid / rr - 1.0 + mo.sf[i] / rr);
        bv[i] = -0.25 * mo.rho * (resid * resid / rr + mo.sf[i] / rr);
    }

    // Variational gradients.
    let g_mu_m = mo.om_f.transpose() * &cv - &inv_kf * q.mu_m();
    let g_sigma_m =
        mo.om_f.transpose() * scale_rows(&mo.om_f, &dv) + 0.5 * (&inv_sigma_m - &inv_kf);
    let gam = q.mu_u() - DVector::from_element(u, model.mu0());
    let gam_u = &inv_kg * &gam;
    let g_mu_u = mo.om_g.transpose() * &av - &gam_u;
    let g_sigma_u =
        mo.om_g.transpose() * scale_rows(&mo.om_g, &bv) + 0.5 * (&inv_sigma_u - &inv_kg);

    // Mean-side kernel-block adjoints.
    let om_bar_f = &cv * q.mu_m().transpose() - scale_rows(&mo.kf_bm, &dv)
        + 2.0 * scale_rows(&(&mo.om_f * &sigma_m), &dv);
    let kbm_bar = -scale_rows(&mo.om_f, &dv) + &om_bar_f * &inv_kf;
    let mid_f = &inv_kf * (&sigma_m + q.mu_m() * q.mu_m().transpose()) * &inv_kf;
    let t_f = mo.om_f.transpose() * &om_bar_f * &inv_kf;
    let kfmm_bar = 0.5 * (&mid_f - &inv_kf) - 0.5 * (&t_f + t_f.transpose());

    // Noise-side kernel-block adjoints.
    let om_bar_g = &av * gam.transpose() - scale_rows(&mo.kg_bu, &bv)
        + 2.0 * scale_rows(&(&mo.om_g * &sigma_u), &bv);
    let kbu_bar = -scale_rows(&mo.om_g, &bv) + &om_bar_g * &inv_kg;
    let mid_g = &inv_kg * (&sigma_u + &gam * gam.transpose()) * &inv_kg;
    let t_g = mo.om_g.transpose() * &om_bar_g * &inv_kg;
    let kguu_bar = 0.5 * (&mid_g - &inv_kg) - 0.5 * (&t_g + t_g.transpose());

    // Kernel hyperparameter gradients: contract the adjoints against the
    // log-domain derivative of each kernel block. The diagonal blocks
    // k(x, x) = sigma^2 contribute only to the variance entry.
    let mut g_kernel_f = weighted_param_grads(&mo.xb, model.xm(), &mo.kf_bm, model.kernel_f(), &kbm_bar)?
        + weighted_param_grads(model.xm(), model.xm(), &mo.kf_mm, model.kernel_f(), &kfmm_bar)?;
    g_kernel_f[0] += dv.sum() * model.kernel_f().signal_variance();
    let mut g_kernel_g = weighted_param_grads(&mo.xb, model.xu(), &mo.kg_bu, model.kernel_g(), &kbu_bar)?
        + weighted_param_grads(model.xu(), model.xu(), &mo.kg_uu, model.kernel_g(), &kguu_bar)?;
    g_kernel_g[0] += bv.sum() * model.kernel_g().signal_variance();

    // Prior-mean gradient: data term through mu_g plus the KL mean term.
    let om_g_row_sums = DVector::from_fn(b, |i, _| mo.om_g.row(i).sum());
    let g_mu0 = av
        .iter()
        .zip(om_g_row_sums.iter())
        .map(|(a, rs)| a * (1.0 - rs))
        .sum::<f64>()
        + gam_u.sum();

    // Inducing-input gradients.
    let wmm_sym = 0.5 * (&kfmm_bar + kfmm_bar.transpose());
    let g_xm = weighted_input_grads(&mo.xb, model.xm(), &mo.kf_bm, model.kernel_f(), &kbm_bar, Side::B)?
        + 2.0 * weighted_input_grads(model.xm(), model.xm(), &mo.kf_mm, model.kernel_f(), &wmm_sym, Side::A)?;
    let wuu_sym = 0.5 * (&kguu_bar + kguu_bar.transpose());
    let g_xu = weighted_input_grads(&mo.xb, model.xu(), &mo.kg_bu, model.kernel_g(), &kbu_bar, Side::B)?
        + 2.0 * weighted_input_grads(model.xu(), model.xu(), &mo.kg_uu, model.kernel_g(), &wuu_sym, Side::A)?;

    Ok((
        value,
        BatchGradients {
            mu_m: g_mu_m,
            sigma_m: g_sigma_m,
            mu_u: g_mu_u,
            sigma_u: g_sigma_u,
            kernel_f: g_kernel_f,
            kernel_g: g_kernel_g,
            mu0: g_mu0,
            xm: g_xm,
            xu: g_xu,
        },
    ))
}
