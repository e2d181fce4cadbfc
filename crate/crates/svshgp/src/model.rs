//! Model state for stochastic training: data, hyperparameters, and the
//! explicit variational Gaussians.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vshgp::{Archive, VshgpModel, Workspace};
use vshgp_data::NormStats;
use vshgp_kernel::{chol_jitter, kernel_matrix, KernelParams};

use crate::state::ExplicitVariational;
use crate::SvshgpError;

/// A sparse heteroscedastic GP with explicit variational posteriors over
/// both inducing-value vectors.
///
/// Shares the collapsed model's hyperparameter layout (two kernels, prior
/// log-noise mean, two inducing sets) but replaces the per-point variational
/// weights with free Gaussians `q(f_m)` and `q(g_u)`, which is what makes
/// unbiased mini-batch training possible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvshgpModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    kernel_f: KernelParams,
    kernel_g: KernelParams,
    mu0: f64,
    xm: DMatrix<f64>,
    xu: DMatrix<f64>,
    q: ExplicitVariational,
}

impl SvshgpModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        kernel_f: KernelParams,
        kernel_g: KernelParams,
        mu0: f64,
        xm: DMatrix<f64>,
        xu: DMatrix<f64>,
        q: ExplicitVariational,
    ) -> Result<Self, SvshgpError> {
        let model = SvshgpModel {
            x,
            y,
            kernel_f,
            kernel_g,
            mu0,
            xm,
            xu,
            q,
        };
        model.validate()?;
        Ok(model)
    }

    /// Default initialization: hyperparameters exactly as the collapsed
    /// model would choose them (unit kernels, k-means inducing sets, prior
    /// log-noise mean from the target variance), and the variational state
    /// matched to the prior — `mu_m = 0`, `Sigma_m = K^f_mm`, `mu_u = mu0`,
    /// `Sigma_u = K^g_uu` — so both KL terms start at zero.
    pub fn init(
        x: DMatrix<f64>,
        y: DVector<f64>,
        m: usize,
        u: usize,
        seed: u64,
    ) -> Result<Self, SvshgpError> {
        let collapsed = VshgpModel::init(x, y, m, u, seed)?;
        Self::with_prior_state(&collapsed)
    }

    /// Copies the hyperparameters of a collapsed model and installs the
    /// prior-matched variational state.
    pub fn with_prior_state(collapsed: &VshgpModel) -> Result<Self, SvshgpError> {
        let kf_mm = kernel_matrix(collapsed.xm(), collapsed.xm(), collapsed.kernel_f())?;
        let kg_uu = kernel_matrix(collapsed.xu(), collapsed.xu(), collapsed.kernel_g())?;
        let l_m = chol_jitter(&kf_mm)?.l().clone();
        let l_u = chol_jitter(&kg_uu)?.l().clone();
        let q = ExplicitVariational::new(
            DVector::zeros(collapsed.m()),
            l_m,
            DVector::from_element(collapsed.u(), collapsed.mu0()),
            l_u,
        )?;
        SvshgpModel::new(
            collapsed.x().clone(),
            collapsed.y().clone(),
            collapsed.kernel_f().clone(),
            collapsed.kernel_g().clone(),
            collapsed.mu0(),
            collapsed.xm().clone(),
            collapsed.xu().clone(),
            q,
        )
    }

    /// Maps a collapsed model onto the explicit parameterization: `q(g_u)`
    /// is the Gaussian the variational weights induce, and `q(f_m)` is the
    /// closed-form optimum given the resulting noise vector. The factorized
    /// bound of the result equals the collapsed bound.
    pub fn from_collapsed(collapsed: &VshgpModel) -> Result<Self, SvshgpError> {
        let ws = Workspace::build(collapsed)?;
        let mu_u = ws.mu_u(collapsed.mu0());
        let sigma_u = ws.sigma_u().clone();
        let (mu_m, sigma_m) = q_star_fm(
            collapsed.x(),
            collapsed.y(),
            collapsed.xm(),
            collapsed.kernel_f(),
            ws.r(),
        )?;
        let q = ExplicitVariational::from_covariances(mu_m, &sigma_m, mu_u, &sigma_u)?;
        SvshgpModel::new(
            collapsed.x().clone(),
            collapsed.y().clone(),
            collapsed.kernel_f().clone(),
            collapsed.kernel_g().clone(),
            collapsed.mu0(),
            collapsed.xm().clone(),
            collapsed.xu().clone(),
            q,
        )
    }

    pub fn validate(&self) -> Result<(), SvshgpError> {
        let (n, d) = (self.x.nrows(), self.x.ncols());
        if n == 0 || d == 0 {
            return Err(SvshgpError::InvalidModel {
                reason: "training inputs are empty".into(),
            });
        }
        if self.y.len() != n {
            return Err(crate::dim_err("targets per input row", n, self.y.len()));
        }
        for (name, mat) in [("mean-function", &self.xm), ("noise", &self.xu)] {
            if mat.ncols() != d {
                return Err(crate::dim_err(
                    &format!("{name} inducing input dimension"),
                    d,
                    mat.ncols(),
                ));
            }
            if mat.nrows() == 0 || mat.nrows() > n {
                return Err(SvshgpError::InvalidModel {
                    reason: format!(
                        "{name} inducing set has {} points for {n} data points",
                        mat.nrows()
                    ),
                });
            }
        }
        for (name, k) in [("mean-function", &self.kernel_f), ("noise", &self.kernel_g)] {
            if k.dim() != d {
                return Err(crate::dim_err(
                    &format!("{name} kernel dimension"),
                    d,
                    k.dim(),
                ));
            }
        }
        if !self.mu0.is_finite() {
            return Err(SvshgpError::InvalidModel {
                reason: format!("prior log-noise mean is {}", self.mu0),
            });
        }
        if self.x.iter().any(|v| !v.is_finite())
            || self.y.iter().any(|v| !v.is_finite())
            || self.xm.iter().any(|v| !v.is_finite())
            || self.xu.iter().any(|v| !v.is_finite())
        {
            return Err(SvshgpError::InvalidModel {
                reason: "data or inducing inputs contain a non-finite value".into(),
            });
        }
        self.q.validate()?;
        if self.q.m() != self.xm.nrows() {
            return Err(crate::dim_err(
                "q(f_m) dimension",
                self.xm.nrows(),
                self.q.m(),
            ));
        }
        if self.q.u() != self.xu.nrows() {
            return Err(crate::dim_err(
                "q(g_u) dimension",
                self.xu.nrows(),
                self.q.u(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.xm.nrows()
    }

    pub fn u(&self) -> usize {
        self.xu.nrows()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn kernel_f(&self) -> &KernelParams {
        &self.kernel_f
    }

    pub fn kernel_g(&self) -> &KernelParams {
        &self.kernel_g
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn xm(&self) -> &DMatrix<f64> {
        &self.xm
    }

    pub fn xu(&self) -> &DMatrix<f64> {
        &self.xu
    }

    pub fn q(&self) -> &ExplicitVariational {
        &self.q
    }

    pub fn set_q(&mut self, q: ExplicitVariational) -> Result<(), SvshgpError> {
        let old = std::mem::replace(&mut self.q, q);
        if let Err(e) = self.validate() {
            self.q = old;
            return Err(e);
        }
        Ok(())
    }

    /// Number of packed hyperparameters (everything Adam moves).
    pub fn hyper_len(&self) -> usize {
        let d = self.dim();
        2 * (1 + d) + 1 + (self.m() + self.u()) * d
    }

    /// Named slices of the packed hyperparameter vector, in packing order.
    pub fn hyper_blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        let d = self.dim();
        let mut blocks = Vec::with_capacity(5);
        let mut at = 0usize;
        let mut push = |name: &'static str, len: usize, at: &mut usize| {
            blocks.push((name, *at..*at + len));
            *at += len;
        };
        push("kernel_f", 1 + d, &mut at);
        push("kernel_g", 1 + d, &mut at);
        push("mu0", 1, &mut at);
        push("inducing_f", self.m() * d, &mut at);
        push("inducing_g", self.u() * d, &mut at);
        blocks
    }

    /// Packs the hyperparameters: both kernels in log-parameter order, the
    /// prior log-noise mean, then both inducing sets row by row.
    pub fn packed_hypers(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.hyper_len());
        out.extend(self.kernel_f.log_params().iter().copied());
        out.extend(self.kernel_g.log_params().iter().copied());
        out.push(self.mu0);
        out.extend(self.xm.transpose().iter().copied());
        out.extend(self.xu.transpose().iter().copied());
        DVector::from_vec(out)
    }

    /// Inverse of [`SvshgpModel::packed_hypers`].
    pub fn set_packed_hypers(&mut self, packed: &DVector<f64>) -> Result<(), SvshgpError> {
        if packed.len() != self.hyper_len() {
            return Err(crate::dim_err(
                "packed hyperparameters",
                self.hyper_len(),
                packed.len(),
            ));
        }
        let d = self.dim();
        let mut at = 0usize;
        let take_kernel = |packed: &DVector<f64>, at: &mut usize| {
            let v = DVector::from_fn(1 + d, |i, _| packed[*at + i]);
            *at += 1 + d;
            v
        };
        let mut kf = self.kernel_f.clone();
        kf.set_log_params(&take_kernel(packed, &mut at))?;
        let mut kg = self.kernel_g.clone();
        kg.set_log_params(&take_kernel(packed, &mut at))?;
        let mu0 = packed[at];
        at += 1;
        let take_points = |rows: usize, at: &mut usize| {
            let m = DMatrix::from_fn(rows, d, |i, j| packed[*at + i * d + j]);
            *at += rows * d;
            m
        };
        let xm = take_points(self.m(), &mut at);
        let xu = take_points(self.u(), &mut at);

        let mut candidate = self.clone();
        candidate.kernel_f = kf;
        candidate.kernel_g = kg;
        candidate.mu0 = mu0;
        candidate.xm = xm;
        candidate.xu = xu;
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }

    /// Archive `kind` for this model flavor.
    pub const ARCHIVE_KIND: &'static str = "svshgp";

    pub fn save(&self, path: &Path, normalization: Option<NormStats>) -> Result<(), SvshgpError> {
        Archive::new(Self::ARCHIVE_KIND, normalization, self)?.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<NormStats>), SvshgpError> {
        let archive = Archive::load(path)?;
        if archive.kind != Self::ARCHIVE_KIND {
            return Err(SvshgpError::InvalidModel {
                reason: format!(
                    "{}: archive holds a {:?} model, not {:?}",
                    path.display(),
                    archive.kind,
                    Self::ARCHIVE_KIND
                ),
            });
        }
        let model: SvshgpModel = archive.decode()?;
        model.validate()?;
        Ok((model, archive.normalization))
    }
}

/// Closed-form optimum of `q(f_m)` for a fixed marginal noise vector `r`:
/// the Gaussian that turns the factorized bound into the collapsed bound.
pub fn q_star_fm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xm: &DMatrix<f64>,
    kernel_f: &KernelParams,
    r: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), SvshgpError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(crate::dim_err("targets per input row", n, y.len()));
    }
    if r.len() != n {
        return Err(crate::dim_err("noise entries per input row", n, r.len()));
    }
    let kf_nm = kernel_matrix(x, xm, kernel_f)?;
    let kf_mm = kernel_matrix(xm, xm, kernel_f)?;
    let m = xm.nrows();
    let scaled = DMatrix::from_fn(n, m, |i, j| kf_nm[(i, j)] / r[i]);
    let k_r = &kf_mm + kf_nm.transpose() * &scaled;
    let chol = chol_jitter(&k_r)?;
    let y_over_r = DVector::from_fn(n, |i, _| y[i] / r[i]);
    let mu = &kf_mm * chol.solve_vec(&(kf_nm.transpose() * y_over_r));
    let sigma = &kf_mm * chol.solve(&kf_mm);
    Ok((mu, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model() -> SvshgpModel {
        let x = DMatrix::from_fn(8, 1, |i, _| i as f64 * 0.7 - 3.0);
        let y = DVector::from_fn(8, |i, _| (i as f64 * 0.7 - 3.0).sin());
        SvshgpModel::init(x, y, 4, 3, 0).unwrap()
    }

    #[test]
    fn init_matches_prior() {
        let model = toy_model();
        assert_eq!(model.q().mu_m(), &DVector::zeros(4));
        assert_eq!(
            model.q().mu_u(),
            &DVector::from_element(3, model.mu0())
        );
        let kf_mm = kernel_matrix(model.xm(), model.xm(), model.kernel_f()).unwrap();
        assert!((model.q().sigma_m() - kf_mm).norm() < 1e-10);
    }

    #[test]
    fn hyper_packing_round_trips() {
        let model = toy_model();
        let packed = model.packed_hypers();
        assert_eq!(packed.len(), model.hyper_len());
        let blocks = model.hyper_blocks();
        assert_eq!(blocks.last().unwrap().1.end, model.hyper_len());
        let mut copy = model.clone();
        copy.set_packed_hypers(&packed).unwrap();
        assert_eq!(copy.packed_hypers(), packed);
        assert_eq!(copy.xm(), model.xm());
    }

    #[test]
    fn mismatched_variational_state_rejected() {
        let mut model = toy_model();
        let wrong = ExplicitVariational::new(
            DVector::zeros(5),
            DMatrix::identity(5, 5),
            DVector::zeros(3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        assert!(model.set_q(wrong).is_err());
        // The failed swap must not corrupt the model.
        model.validate().unwrap();
    }

    #[test]
    fn packed_hypers_with_wrong_length_rejected() {
        let mut model = toy_model();
        let bad = DVector::zeros(model.hyper_len() + 1);
        assert!(model.set_packed_hypers(&bad).is_err());
    }
}
