//! The collapsed evidence lower bound and its exact gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vshgp_kernel::{chol_jitter, weighted_input_grads, weighted_param_grads, Side};

use crate::model::VshgpModel;
use crate::workspace::Workspace;
use crate::VshgpError;

/// The four additive pieces of the bound. `total` is their exact sum.
///
/// At any valid model state `mean_trace_term` and `noise_trace_term` are
/// nonpositive (up to roundoff) and `kl_term` is nonpositive, so the bound
/// never exceeds `log_marginal_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    /// `log N(y | 0, Q_f + R)`: the sparse marginal likelihood of the
    /// targets under the current noise variances.
    pub log_marginal_term: f64,
    /// `-1/2 sum_i (K_nn^f - Q_nn^f)_ii / r_i`: penalty for mass the mean
    /// function loses through the inducing bottleneck.
    pub mean_trace_term: f64,
    /// `-1/4 sum_i s_i`: penalty for posterior uncertainty in the log-noise
    /// function.
    pub noise_trace_term: f64,
    /// `-KL(q(g_u) || p(g_u))`: divergence of the noise posterior from its
    /// prior, entering the bound with a minus sign.
    pub kl_term: f64,
}

impl ElboBreakdown {
    /// The bound itself.
    pub fn total(&self) -> f64 {
        self.log_marginal_term + self.mean_trace_term + self.noise_trace_term + self.kl_term
    }
}

impl Workspace {
    /// The bound pieces for this workspace's model state.
    pub fn breakdown(&self) -> ElboBreakdown {
        ElboBreakdown {
            log_marginal_term: self.log_marginal_term,
            mean_trace_term: self.mean_trace_term,
            noise_trace_term: self.noise_trace_term,
            kl_term: self.kl_term,
        }
    }
}

/// Evaluates the bound at the current model state.
pub fn elbo(model: &VshgpModel) -> Result<ElboBreakdown, VshgpError> {
    Ok(Workspace::build(model)?.breakdown())
}

/// Exact gradient of the bound with respect to every free parameter block.
///
/// Kernel gradients are in log-parameter order (`[d/d log sv, d/d log l_1,
/// ..]`); the variational-weight gradient is with respect to the stored log
/// weights; inducing gradients have one row per inducing point.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub log_lambda: DVector<f64>,
    pub kernel_f: DVector<f64>,
    pub kernel_g: DVector<f64>,
    pub mu0: f64,
    pub xm: DMatrix<f64>,
    pub xu: DMatrix<f64>,
}

impl GradientBundle {
    /// Flattens the blocks in [`VshgpModel::packed_params`] order.
    pub fn pack(&self) -> DVector<f64> {
        let len = self.log_lambda.len()
            + self.kernel_f.len()
            + self.kernel_g.len()
            + 1
            + self.xm.len()
            + self.xu.len();
        let mut out = Vec::with_capacity(len);
        out.extend(self.log_lambda.iter());
        out.extend(self.kernel_f.iter());
        out.extend(self.kernel_g.iter());
        out.push(self.mu0);
        out.extend(self.xm.transpose().iter()); // row major
        out.extend(self.xu.transpose().iter());
        DVector::from_vec(out)
    }
}

/// Evaluates the bound and its gradients in one pass over a shared
/// workspace.
pub fn elbo_with_grads(
    model: &VshgpModel,
) -> Result<(ElboBreakdown, GradientBundle), VshgpError> {
    let ws = Workspace::build(model)?;
    let grads = ws.gradients(model)?;
    Ok((ws.breakdown(), grads))
}

impl Workspace {
    /// Gradients of the bound at this workspace's model state.
    pub fn gradients(&self, model: &VshgpModel) -> Result<GradientBundle, VshgpError> {
        let n = model.n();
        let x = model.x();
        let sf2 = model.kernel_f().signal_variance();
        let sg2 = model.kernel_g().signal_variance();

        let (lam_a, lam_b) = self.lambda_ab(sf2);
        let lab = &lam_a + &lam_b;

        // Variational-weight block. The posterior-covariance correction
        // matrix C = K_nu K_Lambda^{-1} K_un enters squared elementwise;
        // its action (C .* C) v never needs C itself:
        // (C .* C) v = colsum(Z .* ((Z diag(v) Z^T) Z)).
        let qg_lab = self.w.transpose() * (&self.w * &lab);
        let a_lab = hadamard_square_action(&self.z, &lab);
        let a_one = hadamard_square_action(&self.z, &DVector::from_element(n, 1.0));
        let a_lam = hadamard_square_action(&self.z, &self.lambda);
        let g_log_lambda = DVector::from_fn(n, |i, _| {
            self.lambda[i]
                * (0.5 * qg_lab[i] + 0.25 * a_lab[i] + 0.25 * a_one[i]
                    - 0.5 * a_lam[i]
                    - (self.mu_g[i] - model.mu0()))
        });

        // Mean-side adjoints. The symmetric adjoint S of Q_f contracts
        // into W_nm = 2 S Omega_f; the R^{-1} Omega_f parts of the marginal
        // and trace terms cancel, leaving only the two terms below.
        let om_f = self.chol_kf_mm.solve(&self.kf_nm.transpose()).transpose();
        let beta_om = om_f.transpose() * &self.beta;
        let vr_om = &self.vr * &om_f;
        let w_nm = &self.beta * beta_om.transpose()
            + self.vr.transpose() * self.chol_b.solve(&vr_om);
        let w_mm = -0.5 * (om_f.transpose() * &w_nm);

        let mut kernel_f = weighted_param_grads(x, model.xm(), &self.kf_nm, model.kernel_f(), &w_nm)?
            + weighted_param_grads(model.xm(), model.xm(), &self.kf_mm, model.kernel_f(), &w_mm)?;
        kernel_f[0] += -0.5 * self.r.map(|v| 1.0 / v).sum() * sf2;
        let xm = weighted_input_grads(x, model.xm(), &self.kf_nm, model.kernel_f(), &w_nm, Side::B)?
            + 2.0
                * weighted_input_grads(
                    model.xm(),
                    model.xm(),
                    &self.kf_mm,
                    model.kernel_f(),
                    &w_mm,
                    Side::A,
                )?;

        // Noise-side adjoints.
        let u = model.u();
        let a_v = 0.5 * &lab;
        let b_v = DVector::from_fn(n, |i, _| -0.25 * (lab[i] + 1.0));
        let om_g = self.chol_kg_uu.solve(&self.kg_nu.transpose()).transpose();
        let u_inv = self.chol_kg_uu.solve(&DMatrix::identity(u, u));
        let gam_u = &self.u_inv_gamma;
        let e_diag = DVector::from_fn(n, |i, _| 0.5 * self.lambda[i] + b_v[i]);

        let m1 = &om_g * &self.sigma_u;
        let g_mat = m1.transpose() * scale_rows(&m1, &e_diag);
        let ogu = &om_g * (&g_mat * &u_inv);
        let osu = &m1 * &u_inv;
        let usu = &u_inv * &self.sigma_u * &u_inv;
        let v_g_uu = &u_inv - gam_u * gam_u.transpose() - usu;

        let om_t_h = om_g.transpose() * &self.h;
        let om_t_a = om_g.transpose() * &a_v;
        let n_bar = &a_v * om_t_h.transpose() + &self.h * om_t_a.transpose()
            - 2.0 * scale_rows(&om_g, &b_v)
            - 2.0 * scale_rows(&ogu, &self.lambda)
            + 2.0 * scale_rows(&osu, &b_v)
            - &self.h * gam_u.transpose();
        let mut u_bar = -(&om_t_a * om_t_h.transpose())
            + om_g.transpose() * scale_rows(&om_g, &b_v)
            + &u_inv * &g_mat * &u_inv
            + 2.0 * (om_g.transpose() * scale_rows(&ogu, &self.lambda))
            - 2.0 * (om_g.transpose() * scale_rows(&osu, &b_v))
            - 0.5 * v_g_uu;
        u_bar = 0.5 * (&u_bar + u_bar.transpose());

        let mut kernel_g =
            weighted_param_grads(x, model.xu(), &self.kg_nu, model.kernel_g(), &n_bar)?
                + weighted_param_grads(model.xu(), model.xu(), &self.kg_uu, model.kernel_g(), &u_bar)?;
        kernel_g[0] += b_v.sum() * sg2;
        let xu = weighted_input_grads(x, model.xu(), &self.kg_nu, model.kernel_g(), &n_bar, Side::B)?
            + 2.0
                * weighted_input_grads(
                    model.xu(),
                    model.xu(),
                    &self.kg_uu,
                    model.kernel_g(),
                    &u_bar,
                    Side::A,
                )?;

        let mu0 = 0.5 * lab.sum();

        Ok(GradientBundle {
            log_lambda: g_log_lambda,
            kernel_f,
            kernel_g,
            mu0,
            xm,
            xu,
        })
    }
}

/// `KL(N(mu_q, sigma_q) || N(mu_p, sigma_p))` for full-covariance Gaussians.
pub fn gauss_kl(
    mu_q: &DVector<f64>,
    sigma_q: &DMatrix<f64>,
    mu_p: &DVector<f64>,
    sigma_p: &DMatrix<f64>,
) -> Result<f64, VshgpError> {
    let k = mu_q.len();
    if mu_p.len() != k {
        return Err(VshgpError::dim("KL mean lengths", k, mu_p.len()));
    }
    if sigma_q.nrows() != k || sigma_q.ncols() != k {
        return Err(VshgpError::dim("KL covariance rows", k, sigma_q.nrows()));
    }
    if sigma_p.nrows() != k || sigma_p.ncols() != k {
        return Err(VshgpError::dim("KL prior covariance rows", k, sigma_p.nrows()));
    }
    let chol_q = chol_jitter(sigma_q)?;
    let chol_p = chol_jitter(sigma_p)?;
    // tr(Sigma_p^{-1} Sigma_q) = ||L_p^{-1} L_q||_F^2.
    let a = chol_p.solve_lower(chol_q.l());
    let trace = a.iter().map(|v| v * v).sum::<f64>();
    let diff = mu_q - mu_p;
    let w = chol_p.solve_lower_vec(&diff);
    let maha = w.dot(&w);
    Ok(0.5 * (trace + maha - k as f64 + chol_p.log_det() - chol_q.log_det()))
}

/// Row-scales a matrix: `out[i, :] = m[i, :] * v[i]`.
fn scale_rows(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= v[i];
    }
    out
}

/// `(C .* C) v` where `C = Z^T Z`, without forming the `n x n` matrix `C`:
/// equals `colsum(Z .* ((Z diag(v) Z^T) Z))`.
fn hadamard_square_action(z: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut zs = z.clone();
    for (j, mut col) in zs.column_iter_mut().enumerate() {
        col *= v[j];
    }
    let core = &zs * z.transpose();
    let mz = core * z;
    DVector::from_fn(z.ncols(), |j, _| z.column(j).dot(&mz.column(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        let mu = DVector::from_vec(vec![0.3, -0.7]);
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let kl = gauss_kl(&mu, &sigma, &mu, &sigma).unwrap();
        assert!(kl.abs() < 1e-12, "kl = {kl}");
    }

    #[test]
    fn kl_matches_one_dimensional_closed_form() {
        // KL(N(0,1) || N(1,2)) = 0.5 [1/2 + 1/2 - 1 + ln 2] = ln(2)/2.
        let mu_q = DVector::from_vec(vec![0.0]);
        let sq = DMatrix::from_row_slice(1, 1, &[1.0]);
        let mu_p = DVector::from_vec(vec![1.0]);
        let sp = DMatrix::from_row_slice(1, 1, &[2.0]);
        let kl = gauss_kl(&mu_q, &sq, &mu_p, &sp).unwrap();
        assert_relative_eq!(kl, 0.5 * 2.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn kl_rejects_mismatched_shapes() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let sigma = DMatrix::identity(2, 2);
        let mu_short = DVector::from_vec(vec![0.0]);
        assert!(gauss_kl(&mu, &sigma, &mu_short, &sigma).is_err());
    }

    #[test]
    fn hadamard_square_action_matches_dense() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.25, 0.0, 2.0, -1.0]);
        let v = DVector::from_vec(vec![0.7, -0.2, 1.3]);
        let c = z.transpose() * &z;
        let dense = DMatrix::from_fn(3, 3, |i, j| c[(i, j)] * c[(i, j)]) * &v;
        let fast = hadamard_square_action(&z, &v);
        for i in 0..3 {
            assert_relative_eq!(fast[i], dense[i], max_relative = 1e-12);
        }
    }
}
