//! Cholesky factorization with escalating diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::KernelError;

/// A successful jittered factorization: `l * l^T = k_sym + jitter * I`,
/// where `k_sym` is the symmetrized input.
#[derive(Debug, Clone)]
pub struct CholJitter {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholJitter {
    /// The lower-triangular factor (strict upper triangle is zero).
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// The diagonal jitter that was added to make the factorization succeed
    /// (0 whenever the matrix was positive definite as given).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `(K + jitter I) x = b` for each column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// Solves `L x = b` (forward substitution) for each column of `b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `L^T x = b` (backward substitution) for each column of `b`.
    pub fn solve_lower_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `(K + jitter I) x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `L x = b` for a single right-hand side.
    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `L^T x = b` for a single right-hand side.
    pub fn solve_lower_transpose_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `log det (K + jitter I) = 2 * sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0
    }
}

/// Factors a symmetric matrix, adding the smallest diagonal jitter that
/// makes Cholesky succeed.
///
/// The input is symmetrized as `(K + K^T)/2` first (floating-point drift in
/// matrix products routinely breaks exact symmetry). The jitter schedule is:
/// none at all, then `1e-10 * tr(K)/p * 10^k` for `k = 0..=8`; the first
/// level at which factorization succeeds wins and is reported in the result.
pub fn chol_jitter(k: &DMatrix<f64>) -> Result<CholJitter, KernelError> {
    let p = k.nrows();
    if p != k.ncols() {
        return Err(KernelError::DimensionMismatch {
            context: "chol_jitter (matrix must be square)",
            left: p,
            right: k.ncols(),
        });
    }
    let mut sym = k.clone();
    for j in 0..p {
        for i in (j + 1)..p {
            let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = avg;
            sym[(j, i)] = avg;
        }
    }
    let trace = sym.trace();
    let base = 1e-10 * trace / p as f64;

    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(CholJitter {
            l: chol.unpack(),
            jitter: 0.0,
        });
    }
    let mut max_tried = 0.0;
    if base > 0.0 && base.is_finite() {
        for level in 0..=8u32 {
            let jitter = base * 10f64.powi(level as i32);
            max_tried = jitter;
            let mut bumped = sym.clone();
            for i in 0..p {
                bumped[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(bumped) {
                return Ok(CholJitter {
                    l: chol.unpack(),
                    jitter,
                });
            }
        }
    }
    Err(KernelError::CholeskyFailed {
        size: p,
        trace,
        max_jitter: max_tried,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_needs_no_jitter() {
        let k = DMatrix::identity(3, 3);
        let f = chol_jitter(&k).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.l(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn near_duplicate_points_need_jitter_but_reconstruct() {
        // Gram matrix of five coincident points: exactly rank one, so plain
        // Cholesky hits a zero pivot at the second column.
        let k = DMatrix::from_element(5, 5, 1.0);
        let f = chol_jitter(&k).unwrap();
        assert!(f.jitter() > 0.0);
        let recon = f.l() * f.l().transpose();
        assert!((recon - &k).norm() <= 1e-6 * k.norm());
    }

    #[test]
    fn strongly_indefinite_matrix_fails() {
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0]));
        match chol_jitter(&k) {
            Err(KernelError::CholeskyFailed { size: 3, .. }) => {}
            other => panic!("expected CholeskyFailed, got {other:?}"),
        }
    }

    #[test]
    fn non_square_rejected() {
        let k = DMatrix::zeros(2, 3);
        assert!(matches!(
            chol_jitter(&k),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn factor_is_clean_lower_triangular() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = chol_jitter(&k).unwrap();
        assert_eq!(f.l()[(0, 1)], 0.0);
        assert!((f.l() * f.l().transpose() - &k).norm() < 1e-12);
    }

    #[test]
    fn triangular_solves_invert_the_factor() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = chol_jitter(&k).unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = f.solve_lower(&b);
        assert!((f.l() * &x - &b).norm() < 1e-12);
        let y = f.solve_lower_transpose(&b);
        assert!((f.l().transpose() * &y - &b).norm() < 1e-12);
        let z = f.solve(&b);
        assert!((&k * &z - &b).norm() < 1e-12);
    }

    #[test]
    fn vector_solves_match_matrix_solves() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = chol_jitter(&k).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let bm = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert_eq!(f.solve_vec(&b).as_slice(), f.solve(&bm).as_slice());
        assert_eq!(f.solve_lower_vec(&b).as_slice(), f.solve_lower(&bm).as_slice());
        assert_eq!(
            f.solve_lower_transpose_vec(&b).as_slice(),
            f.solve_lower_transpose(&bm).as_slice()
        );
    }

    #[test]
    fn log_det_matches_direct_determinant() {
        let k = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = chol_jitter(&k).unwrap();
        assert!((f.log_det() - k.determinant().ln()).abs() < 1e-12);
    }
}
