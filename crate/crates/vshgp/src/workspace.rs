//! Factorized quantities shared by the bound, its gradients, and prediction.

use nalgebra::{DMatrix, DVector};
use vshgp_kernel::{chol_jitter, kernel_matrix, CholJitter};

use crate::model::VshgpModel;
use crate::VshgpError;

/// Everything the bound, gradients, and predictions need, computed once per
/// model state in `O(n m^2 + n u^2)` time. Only `m x m` and `u x u` matrices
/// are factorized; all `n`-sized quantities are vectors or tall-skinny
/// matrices.
#[derive(Debug, Clone)]
pub struct Workspace {
    // Mean-function side: Sigma_y = V^T V + R with V = Lm^{-1} K_mn.
    pub(crate) kf_nm: DMatrix<f64>,
    pub(crate) kf_mm: DMatrix<f64>,
    pub(crate) chol_kf_mm: CholJitter,
    pub(crate) qf_diag: DVector<f64>,
    pub(crate) vr: DMatrix<f64>,
    pub(crate) chol_b: CholJitter,
    pub(crate) beta: DVector<f64>,
    pub(crate) sy_inv_diag: DVector<f64>,
    pub(crate) alpha_f: DVector<f64>,

    // Log-noise side.
    pub(crate) kg_nu: DMatrix<f64>,
    pub(crate) kg_uu: DMatrix<f64>,
    pub(crate) chol_kg_uu: CholJitter,
    pub(crate) w: DMatrix<f64>,
    pub(crate) qg_diag: DVector<f64>,
    pub(crate) chol_k_lambda: CholJitter,
    pub(crate) z: DMatrix<f64>,
    pub(crate) c_diag: DVector<f64>,
    pub(crate) gamma_p: DVector<f64>,
    pub(crate) u_inv_gamma: DVector<f64>,
    pub(crate) sigma_u: DMatrix<f64>,
    pub(crate) lambda: DVector<f64>,
    pub(crate) h: DVector<f64>,
    pub(crate) mu_g: DVector<f64>,
    pub(crate) s: DVector<f64>,
    pub(crate) r: DVector<f64>,

    // Bound pieces (see `ElboBreakdown`).
    pub(crate) log_marginal_term: f64,
    pub(crate) mean_trace_term: f64,
    pub(crate) noise_trace_term: f64,
    pub(crate) kl_term: f64,
}

impl Workspace {
    /// Builds the workspace for the current model state.
    ///
    /// Fails if a kernel matrix cannot be factorized even with jitter, or if
    /// the marginal noise variance degenerates (zero, infinite, or NaN) at
    /// any training point.
    pub fn build(model: &VshgpModel) -> Result<Self, VshgpError> {
        model.validate()?;
        let n = model.n();
        let x = model.x();
        let y = model.y();

        // Noise side first: it determines r, which the mean side needs.
        let kg_nu = kernel_matrix(x, model.xu(), model.kernel_g())?;
        let kg_uu = kernel_matrix(model.xu(), model.xu(), model.kernel_g())?;
        let kg_nn_value = model.kernel_g().signal_variance();
        let chol_kg_uu = chol_jitter(&kg_uu)?;
        let w = chol_kg_uu.solve_lower(&kg_nu.transpose());
        let qg_diag = column_squared_norms(&w);

        let lambda = model.lambda();
        let h = lambda.map(|l| l - 0.5);

        // K_Lambda = K_uu + K_un diag(lambda) K_nu, the u x u system behind
        // the optimal noise posterior covariance.
        let mut scaled = kg_nu.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= lambda[i];
        }
        let k_lambda = &kg_uu + kg_nu.transpose() * scaled;
        let chol_k_lambda = chol_jitter(&k_lambda)?;
        let z = chol_k_lambda.solve_lower(&kg_nu.transpose());
        let c_diag = column_squared_norms(&z);

        let gamma_p = kg_nu.transpose() * &h;
        let u_inv_gamma = chol_kg_uu.solve_vec(&gamma_p);
        let mu_g = &kg_nu * &u_inv_gamma + DVector::from_element(n, model.mu0());
        let s = DVector::from_fn(n, |i, _| kg_nn_value - qg_diag[i] + c_diag[i]);
        let r = DVector::from_fn(n, |i, _| (mu_g[i] - 0.5 * s[i]).exp());
        for (i, &ri) in r.iter().enumerate() {
            if !ri.is_finite() || ri <= 0.0 {
                return Err(VshgpError::DegenerateNoise {
                    index: i,
                    value: ri,
                });
            }
        }

        // Posterior covariance over the noise inducing values:
        // Sigma_u = U K_Lambda^{-1} U = (L_Lambda^{-1} U)^T (L_Lambda^{-1} U),
        // symmetric positive definite by construction.
        let s1 = chol_k_lambda.solve_lower(&kg_uu);
        let sigma_u = s1.transpose() * &s1;

        // Mean side.
        let kf_nm = kernel_matrix(x, model.xm(), model.kernel_f())?;
        let kf_mm = kernel_matrix(model.xm(), model.xm(), model.kernel_f())?;
        let kf_nn_value = model.kernel_f().signal_variance();
        let chol_kf_mm = chol_jitter(&kf_mm)?;
        let v = chol_kf_mm.solve_lower(&kf_nm.transpose());
        let qf_diag = column_squared_norms(&v);

        let mut vr = v.clone();
        for (j, mut col) in vr.column_iter_mut().enumerate() {
            col /= r[j];
        }
        let m = model.m();
        let b = DMatrix::identity(m, m) + &vr * v.transpose();
        let chol_b = chol_jitter(&b)?;

        let vy = &vr * y;
        let t = chol_b.solve_lower_vec(&vy);
        let log_det_sy = chol_b.log_det() + r.iter().map(|v| v.ln()).sum::<f64>();
        let y_over_r = DVector::from_fn(n, |i, _| y[i] / r[i]);
        let quad = y.dot(&y_over_r) - t.dot(&t);
        let log_marginal_term =
            -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_sy + quad);

        let mean_trace_term =
            -0.5 * (0..n).map(|i| (kf_nn_value - qf_diag[i]) / r[i]).sum::<f64>();
        let noise_trace_term = -0.25 * s.sum();

        // KL(q(g_u) || p(g_u)) via the K_Lambda parameterization.
        let a_lu = chol_k_lambda.solve_lower(chol_kg_uu.l());
        let tr_klam_inv_u = a_lu.iter().map(|v| v * v).sum::<f64>();
        let wv = chol_kg_uu.solve_lower_vec(&gamma_p);
        let maha = wv.dot(&wv);
        let kl = 0.5
            * (tr_klam_inv_u + maha - model.u() as f64 + chol_k_lambda.log_det()
                - chol_kg_uu.log_det());
        let kl_term = -kl;

        // Quantities the gradients and predictions reuse:
        // beta = Sigma_y^{-1} y and diag(Sigma_y^{-1}) via Woodbury,
        // alpha_f = (K_mm + K_mn R^{-1} K_nm)^{-1} K_mn R^{-1} y.
        let b_inv_vy = chol_b.solve_vec(&vy);
        let beta = &y_over_r - vr.transpose() * &b_inv_vy;
        let b_inv_vr = chol_b.solve(&vr);
        let mut sy_inv_diag = DVector::zeros(n);
        for i in 0..n {
            let corr = vr.column(i).dot(&b_inv_vr.column(i));
            sy_inv_diag[i] = 1.0 / r[i] - corr;
        }
        let alpha_f = chol_kf_mm.solve_lower_transpose_vec(&chol_b.solve_lower_transpose_vec(&t));

        let total = log_marginal_term + mean_trace_term + noise_trace_term + kl_term;
        if !total.is_finite() {
            return Err(VshgpError::NonFinite {
                context: "evidence lower bound",
            });
        }

        Ok(Workspace {
            kf_nm,
            kf_mm,
            chol_kf_mm,
            qf_diag,
            vr,
            chol_b,
            beta,
            sy_inv_diag,
            alpha_f,
            kg_nu,
            kg_uu,
            chol_kg_uu,
            w,
            qg_diag,
            chol_k_lambda,
            z,
            c_diag,
            gamma_p,
            u_inv_gamma,
            sigma_u,
            lambda,
            h,
            mu_g,
            s,
            r,
            log_marginal_term,
            mean_trace_term,
            noise_trace_term,
            kl_term,
        })
    }

    /// Posterior mean of the log-noise function at the training inputs.
    pub fn mu_g(&self) -> &DVector<f64> {
        &self.mu_g
    }

    /// Posterior variance of the log-noise function at the training inputs.
    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    /// Marginal noise variances `r_i = exp(mu_g_i - s_i / 2)`.
    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    /// Posterior mean over the noise inducing values.
    pub fn mu_u(&self, mu0: f64) -> DVector<f64> {
        DVector::from_fn(self.gamma_p.len(), |i, _| self.gamma_p[i] + mu0)
    }

    /// Posterior covariance over the noise inducing values.
    pub fn sigma_u(&self) -> &DMatrix<f64> {
        &self.sigma_u
    }

    /// `Sigma_y^{-1} y`.
    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Diagonal of the mean-side projection `Q_nn^f`.
    pub fn qf_diag(&self) -> &DVector<f64> {
        &self.qf_diag
    }

    /// Diagonal of the noise-side projection `Q_nn^g`.
    pub fn qg_diag(&self) -> &DVector<f64> {
        &self.qg_diag
    }

    /// Diagonal of the posterior-covariance correction
    /// `C = K_nu K_Lambda^{-1} K_un`.
    pub fn c_diag(&self) -> &DVector<f64> {
        &self.c_diag
    }

    /// Diagonal of `Sigma_y^{-1}`.
    pub fn sy_inv_diag(&self) -> &DVector<f64> {
        &self.sy_inv_diag
    }

    /// The two per-point weight vectors whose sum drives the noise-side
    /// gradients: `lam_a_i = (beta_i^2 - [Sigma_y^{-1}]_ii) r_i` and
    /// `lam_b_i = [K_nn^f - Q_nn^f]_ii / r_i`.
    pub fn lambda_ab(&self, kernel_f_variance: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.r.len();
        let lam_a = DVector::from_fn(n, |i, _| {
            (self.beta[i] * self.beta[i] - self.sy_inv_diag[i]) * self.r[i]
        });
        let lam_b =
            DVector::from_fn(n, |i, _| (kernel_f_variance - self.qf_diag[i]) / self.r[i]);
        (lam_a, lam_b)
    }

    /// The reconstructed optimal variational weights
    /// `0.5 (lam_a + lam_b + 1)`; every entry is nonnegative at any model
    /// state because `[Sigma_y^{-1}]_ii <= 1 / r_i`.
    pub fn reconstructed_lambda(&self, kernel_f_variance: f64) -> DVector<f64> {
        let (lam_a, lam_b) = self.lambda_ab(kernel_f_variance);
        DVector::from_fn(lam_a.len(), |i, _| 0.5 * (lam_a[i] + lam_b[i] + 1.0))
    }
}

/// Squared Euclidean norm of each column.
pub(crate) fn column_squared_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).norm_squared())
}
