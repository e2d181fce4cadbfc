//! Explicit variational state for the uncollapsed bound.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::SvshgpError;

/// The two variational Gaussians `q(f_m) = N(mu_m, Sigma_m)` and
/// `q(g_u) = N(mu_u, Sigma_u)`.
///
/// Covariances are stored as lower Cholesky factors with strictly positive
/// diagonals, so every state that exists is positive definite by
/// construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitVariational {
    mu_m: DVector<f64>,
    l_m: DMatrix<f64>,
    mu_u: DVector<f64>,
    l_u: DMatrix<f64>,
}

fn check_factor(name: &str, l: &DMatrix<f64>, dim: usize) -> Result<(), SvshgpError> {
    if l.nrows() != dim || l.ncols() != dim {
        return Err(SvshgpError::InvalidState {
            reason: format!(
                "{name} factor is {}x{}, expected {dim}x{dim}",
                l.nrows(),
                l.ncols()
            ),
        });
    }
    for i in 0..dim {
        for j in 0..dim {
            let v = l[(i, j)];
            if !v.is_finite() {
                return Err(SvshgpError::InvalidState {
                    reason: format!("{name} factor entry ({i}, {j}) is {v}"),
                });
            }
            if j > i && v != 0.0 {
                return Err(SvshgpError::InvalidState {
                    reason: format!("{name} factor is not lower triangular at ({i}, {j})"),
                });
            }
        }
        if l[(i, i)] <= 0.0 {
            return Err(SvshgpError::InvalidState {
                reason: format!("{name} factor diagonal entry {i} is {} <= 0", l[(i, i)]),
            });
        }
    }
    Ok(())
}

impl ExplicitVariational {
    /// Builds a state from means and lower Cholesky factors, validating
    /// shapes, triangularity, and positive diagonals.
    pub fn new(
        mu_m: DVector<f64>,
        l_m: DMatrix<f64>,
        mu_u: DVector<f64>,
        l_u: DMatrix<f64>,
    ) -> Result<Self, SvshgpError> {
        let state = ExplicitVariational {
            mu_m,
            l_m,
            mu_u,
            l_u,
        };
        state.validate()?;
        Ok(state)
    }

    /// Builds a state from full covariance matrices, factoring them.
    pub fn from_covariances(
        mu_m: DVector<f64>,
        sigma_m: &DMatrix<f64>,
        mu_u: DVector<f64>,
        sigma_u: &DMatrix<f64>,
    ) -> Result<Self, SvshgpError> {
        let l_m = factor("q(f_m) covariance", sigma_m)?;
        let l_u = factor("q(g_u) covariance", sigma_u)?;
        Self::new(mu_m, l_m, mu_u, l_u)
    }

    pub fn validate(&self) -> Result<(), SvshgpError> {
        for (name, v) in [("mu_m", &self.mu_m), ("mu_u", &self.mu_u)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SvshgpError::InvalidState {
                    reason: format!("{name} has a non-finite entry"),
                });
            }
        }
        check_factor("q(f_m)", &self.l_m, self.mu_m.len())?;
        check_factor("q(g_u)", &self.l_u, self.mu_u.len())?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.mu_m.len()
    }

    pub fn u(&self) -> usize {
        self.mu_u.len()
    }

    pub fn mu_m(&self) -> &DVector<f64> {
        &self.mu_m
    }

    pub fn mu_u(&self) -> &DVector<f64> {
        &self.mu_u
    }

    /// Lower Cholesky factor of `Sigma_m`.
    pub fn l_m(&self) -> &DMatrix<f64> {
        &self.l_m
    }

    /// Lower Cholesky factor of `Sigma_u`.
    pub fn l_u(&self) -> &DMatrix<f64> {
        &self.l_u
    }

    /// Reconstructs `Sigma_m = L_m L_m^T`.
    pub fn sigma_m(&self) -> DMatrix<f64> {
        &self.l_m * self.l_m.transpose()
    }

    /// Reconstructs `Sigma_u = L_u L_u^T`.
    pub fn sigma_u(&self) -> DMatrix<f64> {
        &self.l_u * self.l_u.transpose()
    }

    pub(crate) fn replace_f(&mut self, mu_m: DVector<f64>, l_m: DMatrix<f64>) {
        self.mu_m = mu_m;
        self.l_m = l_m;
    }

    pub(crate) fn replace_g(&mut self, mu_u: DVector<f64>, l_u: DMatrix<f64>) {
        self.mu_u = mu_u;
        self.l_u = l_u;
    }

    /// Length of the unconstrained packing: both means plus both lower
    /// triangles (diagonals log-transformed).
    pub fn packed_len(&self) -> usize {
        let (m, u) = (self.m(), self.u());
        m + m * (m + 1) / 2 + u + u * (u + 1) / 2
    }

    /// Packs the state into one unconstrained vector: `mu_m`, the lower
    /// triangle of `L_m` row by row with `ln` applied to diagonal entries,
    /// then the same for the `g` block. Gradient-based optimizers can move
    /// freely in this packing without leaving the positive-definite cone.
    pub fn packed(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.packed_len());
        out.extend(self.mu_m.iter().copied());
        pack_factor(&self.l_m, &mut out);
        out.extend(self.mu_u.iter().copied());
        pack_factor(&self.l_u, &mut out);
        DVector::from_vec(out)
    }

    /// Inverse of [`ExplicitVariational::packed`].
    pub fn set_packed(&mut self, packed: &DVector<f64>) -> Result<(), SvshgpError> {
        if packed.len() != self.packed_len() {
            return Err(crate::dim_err(
                "packed variational state",
                self.packed_len(),
                packed.len(),
            ));
        }
        let (m, u) = (self.m(), self.u());
        let mut at = 0usize;
        let mu_m = DVector::from_fn(m, |i, _| packed[at + i]);
        at += m;
        let l_m = unpack_factor(packed, &mut at, m);
        let mu_u = DVector::from_fn(u, |i, _| packed[at + i]);
        at += u;
        let l_u = unpack_factor(packed, &mut at, u);
        let candidate = ExplicitVariational {
            mu_m,
            l_m,
            mu_u,
            l_u,
        };
        candidate.validate()?;
        *self = candidate;
        Ok(())
    }

    /// Maps covariance-space gradients into the packing of
    /// [`ExplicitVariational::packed`]: `dF/dL = (G + G^T) L` restricted to
    /// the lower triangle, with diagonal entries scaled by `L_ii` for the
    /// log transform.
    pub fn gradient_to_packed(
        &self,
        g_mu_m: &DVector<f64>,
        g_sigma_m: &DMatrix<f64>,
        g_mu_u: &DVector<f64>,
        g_sigma_u: &DMatrix<f64>,
    ) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.packed_len());
        out.extend(g_mu_m.iter().copied());
        pack_factor_grad(&self.l_m, g_sigma_m, &mut out);
        out.extend(g_mu_u.iter().copied());
        pack_factor_grad(&self.l_u, g_sigma_u, &mut out);
        DVector::from_vec(out)
    }
}

fn factor(name: &str, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, SvshgpError> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    Cholesky::new(sym)
        .map(|c| c.unpack())
        .ok_or_else(|| SvshgpError::InvalidState {
            reason: format!("{name} is not positive definite"),
        })
}

fn pack_factor(l: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..l.nrows() {
        for j in 0..=i {
            if i == j {
                out.push(l[(i, i)].ln());
            } else {
                out.push(l[(i, j)]);
            }
        }
    }
}

fn unpack_factor(packed: &DVector<f64>, at: &mut usize, dim: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let v = packed[*at];
            *at += 1;
            l[(i, j)] = if i == j { v.exp() } else { v };
        }
    }
    l
}

fn pack_factor_grad(l: &DMatrix<f64>, g_sigma: &DMatrix<f64>, out: &mut Vec<f64>) {
    let g_l = (g_sigma + g_sigma.transpose()) * l;
    for i in 0..l.nrows() {
        for j in 0..=i {
            if i == j {
                out.push(g_l[(i, i)] * l[(i, i)]);
            } else {
                out.push(g_l[(i, j)]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> ExplicitVariational {
        let l_m = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, -0.3, 0.8]);
        let l_u = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.2, 1.1, 0.0, -0.4, 0.5, 0.9]);
        ExplicitVariational::new(
            DVector::from_vec(vec![0.3, -0.7]),
            l_m,
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            l_u,
        )
        .unwrap()
    }

    #[test]
    fn packing_round_trips_exactly() {
        let s = state();
        let packed = s.packed();
        assert_eq!(packed.len(), s.packed_len());
        let mut copy = s.clone();
        copy.set_packed(&packed).unwrap();
        assert_eq!(copy.mu_m(), s.mu_m());
        assert_eq!(copy.mu_u(), s.mu_u());
        // The diagonal passes through ln/exp, everything else is copied.
        assert!((copy.l_m() - s.l_m()).norm() < 1e-15);
        assert!((copy.l_u() - s.l_u()).norm() < 1e-15);
    }

    #[test]
    fn non_positive_diagonal_rejected() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.0]);
        assert!(ExplicitVariational::new(
            DVector::zeros(2),
            l,
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .is_err());
    }

    #[test]
    fn upper_triangle_entries_rejected() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.5, 1.0]);
        assert!(ExplicitVariational::new(
            DVector::zeros(2),
            l,
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .is_err());
    }

    #[test]
    fn covariance_factoring_round_trips() {
        let s = state();
        let rebuilt = ExplicitVariational::from_covariances(
            s.mu_m().clone(),
            &s.sigma_m(),
            s.mu_u().clone(),
            &s.sigma_u(),
        )
        .unwrap();
        assert!((rebuilt.sigma_m() - s.sigma_m()).norm() < 1e-12);
        assert!((rebuilt.sigma_u() - s.sigma_u()).norm() < 1e-12);
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(ExplicitVariational::from_covariances(
            DVector::zeros(2),
            &sigma,
            DVector::zeros(2),
            &DMatrix::identity(2, 2),
        )
        .is_err());
    }

    #[test]
    fn factor_gradient_matches_finite_differences() {
        // F(Sigma) = sum of entries of Sigma, so dF/dSigma = all-ones.
        let s = state();
        let g_ones_m = DMatrix::from_element(2, 2, 1.0);
        let g_zero_u = DMatrix::zeros(3, 3);
        let g = s.gradient_to_packed(
            &DVector::zeros(2),
            &g_ones_m,
            &DVector::zeros(3),
            &g_zero_u,
        );
        let f = |state: &ExplicitVariational| state.sigma_m().sum();
        let packed = s.packed();
        let eps = 1e-6;
        for idx in 0..packed.len() {
            let mut plus = packed.clone();
            plus[idx] += eps;
            let mut minus = packed.clone();
            minus[idx] -= eps;
            let mut sp = s.clone();
            sp.set_packed(&plus).unwrap();
            let mut sm = s.clone();
            sm.set_packed(&minus).unwrap();
            let fd = (f(&sp) - f(&sm)) / (2.0 * eps);
            assert!(
                (g[idx] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                "index {idx}: {} vs {}",
                g[idx],
                fd
            );
        }
    }
}
