//! SE-ARD evaluation and analytic derivatives.

use nalgebra::{DMatrix, DVector};

use crate::{KernelError, KernelParams};

/// Which side of a cross-kernel matrix `K(A, B)` a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Differentiate with respect to the rows of `A` (the left point set).
    A,
    /// Differentiate with respect to the rows of `B` (the right point set).
    B,
}

fn check_dim(context: &'static str, left: usize, right: usize) -> Result<(), KernelError> {
    if left == right {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch {
            context,
            left,
            right,
        })
    }
}

/// Evaluates `k(x, x2) = sigma_s^2 * exp(-0.5 * sum_i (x_i - x2_i)^2 / l_i^2)`.
///
/// Symmetric in its two arguments and bounded by `(0, sigma_s^2]`, with the
/// upper bound attained exactly at `x = x2`.
pub fn kernel_eval(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64, KernelError> {
    check_dim("kernel_eval points", x.len(), x2.len())?;
    check_dim("kernel_eval lengthscales", x.len(), params.dim())?;
    let mut q = 0.0;
    for i in 0..x.len() {
        let s = (x[i] - x2[i]) * (-params.log_lengthscales()[i]).exp();
        q += s * s;
    }
    Ok(params.signal_variance() * (-0.5 * q).exp())
}

/// Kernel matrix with entry `(i, j) = k(row_i(A), row_j(B))`.
///
/// Rows of `a` and `b` are points; both must have `params.dim()` columns.
/// For `a == b` the result is symmetric positive semi-definite.
pub fn kernel_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<DMatrix<f64>, KernelError> {
    check_dim("kernel_matrix left columns", a.ncols(), params.dim())?;
    check_dim("kernel_matrix right columns", b.ncols(), params.dim())?;
    let (p, q) = (a.nrows(), b.nrows());
    let sv = params.signal_variance();
    let inv_l: Vec<f64> = params
        .log_lengthscales()
        .iter()
        .map(|&ll| (-ll).exp())
        .collect();
    let mut k = DMatrix::zeros(p, q);
    for j in 0..q {
        for i in 0..p {
            let mut acc = 0.0;
            for (c, il) in inv_l.iter().enumerate() {
                let s = (a[(i, c)] - b[(j, c)]) * il;
                acc += s * s;
            }
            k[(i, j)] = sv * (-0.5 * acc).exp();
        }
    }
    Ok(k)
}

/// Diagonal of `kernel_matrix(a, a)` without forming the matrix.
///
/// For the SE-ARD kernel this is constantly `sigma_s^2`.
pub fn kernel_diag(a: &DMatrix<f64>, params: &KernelParams) -> Result<DVector<f64>, KernelError> {
    check_dim("kernel_diag columns", a.ncols(), params.dim())?;
    Ok(DVector::from_element(a.nrows(), params.signal_variance()))
}

/// Derivative matrices with respect to each log-domain parameter.
///
/// Returns `1 + d` matrices in [`KernelParams::log_params`] order:
/// `dK/d(log sigma_s^2) = K` and
/// `dK/d(log l_j) = K .* D_j` with `D_j[i,q] = (a_ij - b_qj)^2 / l_j^2`
/// (the chain rule through the log parameterization is already applied).
pub fn kernel_param_grads(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<Vec<DMatrix<f64>>, KernelError> {
    let k = kernel_matrix(a, b, params)?;
    let mut grads = Vec::with_capacity(1 + params.dim());
    grads.push(k.clone());
    let ls = params.lengthscales();
    for j in 0..params.dim() {
        let inv_l2 = 1.0 / (ls[j] * ls[j]);
        let mut g = k.clone();
        for q in 0..b.nrows() {
            for i in 0..a.nrows() {
                let d = a[(i, j)] - b[(q, j)];
                g[(i, q)] *= d * d * inv_l2;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Derivatives of `K(A, B)` with respect to the coordinates of one side,
/// packed per input dimension.
///
/// The full derivative of `K` with respect to a single coordinate
/// `A[i, j]` is a `p x q` matrix that is nonzero only in row `i`; storing
/// one such matrix per coordinate would be hugely redundant. Instead,
/// `per_dim[j]` stacks those nonzero rows:
///
/// ```text
/// side A:  per_dim[j][(i, q)] = dK[(i, q)] / dA[(i, j)] = K[(i,q)] * (B[q,j] - A[i,j]) / l_j^2
/// side B:  per_dim[j][(i, q)] = dK[(i, q)] / dB[(q, j)] = K[(i,q)] * (A[i,j] - B[q,j]) / l_j^2
/// ```
///
/// so a whole dimension's gradient contributions can be accumulated in one
/// pass (see [`InputGrads::accumulate`]).
pub fn kernel_input_grads(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &KernelParams,
    which: Side,
) -> Result<InputGrads, KernelError> {
    let k = kernel_matrix(a, b, params)?;
    let ls = params.lengthscales();
    let mut per_dim = Vec::with_capacity(params.dim());
    for j in 0..params.dim() {
        let inv_l2 = 1.0 / (ls[j] * ls[j]);
        let mut g = k.clone();
        for q in 0..b.nrows() {
            for i in 0..a.nrows() {
                let diff = match which {
                    Side::A => b[(q, j)] - a[(i, j)],
                    Side::B => a[(i, j)] - b[(q, j)],
                };
                g[(i, q)] *= diff * inv_l2;
            }
        }
        per_dim.push(g);
    }
    Ok(InputGrads { which, per_dim })
}

/// Packed per-dimension input derivatives produced by [`kernel_input_grads`].
#[derive(Debug, Clone)]
pub struct InputGrads {
    which: Side,
    per_dim: Vec<DMatrix<f64>>,
}

impl InputGrads {
    /// The side the derivatives refer to.
    pub fn side(&self) -> Side {
        self.which
    }

    /// The packed derivative matrix for input dimension `j`.
    pub fn dim(&self, j: usize) -> &DMatrix<f64> {
        &self.per_dim[j]
    }

    /// Number of packed dimensions.
    pub fn n_dims(&self) -> usize {
        self.per_dim.len()
    }

    /// Accumulates `sum_{iq} W[(i,q)] * dK[(i,q)]/d(point coordinate)` for
    /// every coordinate of the differentiated side in one pass.
    ///
    /// Returns a `points x d` matrix: row `i` is the gradient with respect
    /// to point `i` of the chosen side, given the weight matrix `w` (same
    /// shape as `K`).
    pub fn accumulate(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.per_dim.len();
        match self.which {
            Side::A => {
                let p = self.per_dim[0].nrows();
                let mut out = DMatrix::zeros(p, d);
                for (j, g) in self.per_dim.iter().enumerate() {
                    for q in 0..g.ncols() {
                        for i in 0..p {
                            out[(i, j)] += w[(i, q)] * g[(i, q)];
                        }
                    }
                }
                out
            }
            Side::B => {
                let qn = self.per_dim[0].ncols();
                let mut out = DMatrix::zeros(qn, d);
                for (j, g) in self.per_dim.iter().enumerate() {
                    for q in 0..qn {
                        for i in 0..g.nrows() {
                            out[(q, j)] += w[(i, q)] * g[(i, q)];
                        }
                    }
                }
                out
            }
        }
    }
}

/// Contraction `[sum_ij W_ij * dK_ij/dtheta]` for every log-domain parameter,
/// without materializing the derivative matrices.
///
/// `k` must be the precomputed `kernel_matrix(a, b, params)`. Returns the
/// contractions in [`KernelParams::log_params`] order.
pub fn weighted_param_grads(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    params: &KernelParams,
    w: &DMatrix<f64>,
) -> Result<DVector<f64>, KernelError> {
    check_dim("weighted_param_grads rows", w.nrows(), k.nrows())?;
    check_dim("weighted_param_grads cols", w.ncols(), k.ncols())?;
    let d = params.dim();
    let ls = params.lengthscales();
    let inv_l2: Vec<f64> = ls.iter().map(|l| 1.0 / (l * l)).collect();
    let mut out = DVector::zeros(1 + d);
    for q in 0..k.ncols() {
        for i in 0..k.nrows() {
            let wk = w[(i, q)] * k[(i, q)];
            out[0] += wk;
            for j in 0..d {
                let diff = a[(i, j)] - b[(q, j)];
                out[1 + j] += wk * diff * diff * inv_l2[j];
            }
        }
    }
    Ok(out)
}

/// Contraction of a weight matrix against the input derivatives of one side,
/// without materializing the per-dimension matrices.
///
/// Equivalent to `kernel_input_grads(a, b, params, which).accumulate(w)`
/// but computed in a single fused pass over `k` (the precomputed kernel
/// matrix). Returns a `points x d` gradient matrix for the chosen side.
pub fn weighted_input_grads(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    params: &KernelParams,
    w: &DMatrix<f64>,
    which: Side,
) -> Result<DMatrix<f64>, KernelError> {
    check_dim("weighted_input_grads rows", w.nrows(), k.nrows())?;
    check_dim("weighted_input_grads cols", w.ncols(), k.ncols())?;
    let d = params.dim();
    let ls = params.lengthscales();
    let inv_l2: Vec<f64> = ls.iter().map(|l| 1.0 / (l * l)).collect();
    let rows = match which {
        Side::A => a.nrows(),
        Side::B => b.nrows(),
    };
    let mut out = DMatrix::zeros(rows, d);
    for q in 0..k.ncols() {
        for i in 0..k.nrows() {
            let wk = w[(i, q)] * k[(i, q)];
            for j in 0..d {
                let diff = a[(i, j)] - b[(q, j)];
                match which {
                    Side::A => out[(i, j)] += wk * (-diff) * inv_l2[j],
                    Side::B => out[(q, j)] += wk * diff * inv_l2[j],
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> KernelParams {
        KernelParams::new(2.0, &[1.0]).unwrap()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        let k = kernel_eval(&[0.0], &[0.0], &params()).unwrap();
        assert_eq!(k, 2.0);
    }

    #[test]
    fn unit_distance_analytic_value() {
        let p = KernelParams::new(1.0, &[1.0]).unwrap();
        let k = kernel_eval(&[0.0], &[1.0], &p).unwrap();
        assert_relative_eq!(k, (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn eval_rejects_mismatched_dims() {
        assert!(kernel_eval(&[0.0, 1.0], &[0.0], &params()).is_err());
        assert!(kernel_eval(&[0.0, 1.0], &[0.0, 1.0], &params()).is_err());
    }

    #[test]
    fn matrix_single_point_is_signal_variance() {
        let a = DMatrix::from_row_slice(1, 1, &[0.3]);
        let k = kernel_matrix(&a, &a, &params()).unwrap();
        assert_eq!(k[(0, 0)], 2.0);
    }

    #[test]
    fn matrix_cross_is_transpose() {
        let p = KernelParams::new(1.3, &[0.7, 2.0]).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.5]);
        let b = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.1, -0.3, 1.0, 1.0]);
        let kab = kernel_matrix(&a, &b, &p).unwrap();
        let kba = kernel_matrix(&b, &a, &p).unwrap();
        assert_eq!(kab, kba.transpose());
    }

    #[test]
    fn param_grad_wrt_log_signal_variance_is_k() {
        let p = KernelParams::new(1.7, &[0.9]).unwrap();
        let a = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let g = kernel_param_grads(&a, &a, &p).unwrap();
        let k = kernel_matrix(&a, &a, &p).unwrap();
        assert_eq!(g[0], k);
    }

    #[test]
    fn param_grad_lengthscale_vanishes_at_zero_distance() {
        let p = KernelParams::new(1.0, &[0.5]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.4]);
        let g = kernel_param_grads(&a, &a, &p).unwrap();
        assert_eq!(g[1][(0, 0)], 0.0);
    }

    #[test]
    fn input_grad_of_shared_point_is_zero() {
        let p = KernelParams::new(1.0, &[1.0, 1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.2, -0.7]);
        let g = kernel_input_grads(&a, &a, &p, Side::A).unwrap();
        for j in 0..2 {
            assert_eq!(g.dim(j)[(0, 0)], 0.0);
        }
    }

    #[test]
    fn far_point_derivative_is_numerically_zero() {
        let p = KernelParams::new(1.0, &[1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[45.0]);
        let g = kernel_input_grads(&a, &b, &p, Side::A).unwrap();
        assert!(g.dim(0)[(0, 0)].abs() < 1e-300);
    }

    #[test]
    fn weighted_contractions_match_materialized() {
        let p = KernelParams::new(1.4, &[0.8, 1.3, 2.0]).unwrap();
        let a = DMatrix::from_fn(4, 3, |i, j| (i as f64 * 0.7 - j as f64 * 0.3).sin());
        let b = DMatrix::from_fn(3, 3, |i, j| (i as f64 + j as f64 * 0.5).cos());
        let w = DMatrix::from_fn(4, 3, |i, j| 0.1 + (i + 2 * j) as f64 * 0.05);
        let k = kernel_matrix(&a, &b, &p).unwrap();

        let full = kernel_param_grads(&a, &b, &p).unwrap();
        let fused = weighted_param_grads(&a, &b, &k, &p, &w).unwrap();
        for (t, g) in full.iter().enumerate() {
            assert_relative_eq!(fused[t], w.dot(g), max_relative = 1e-13);
        }

        for side in [Side::A, Side::B] {
            let packed = kernel_input_grads(&a, &b, &p, side).unwrap();
            let fused = weighted_input_grads(&a, &b, &k, &p, &w, side).unwrap();
            let acc = packed.accumulate(&w);
            assert_relative_eq!((fused - acc).norm(), 0.0, epsilon = 1e-13);
        }
    }
}
