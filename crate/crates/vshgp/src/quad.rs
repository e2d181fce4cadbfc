//! Gauss-Hermite quadrature and the log predictive density.

use nalgebra::DVector;

use crate::predict::LatentPrediction;
use crate::VshgpError;

/// Node count used when no explicit rule size is requested.
pub const DEFAULT_QUADRATURE_NODES: usize = 20;

const MAX_NEWTON_ITERS: usize = 200;

/// Nodes and weights of the `n`-point Gauss-Hermite rule for weight
/// function `exp(-t^2)`: `integral exp(-t^2) f(t) dt ~= sum_k w_k f(t_k)`.
///
/// Exact for polynomials up to degree `2n - 1`; the weights sum to
/// `sqrt(pi)`. Nodes are returned in ascending order.
pub fn gauss_hermite(n: usize) -> Result<(DVector<f64>, DVector<f64>), VshgpError> {
    if n == 0 {
        return Err(VshgpError::EmptyQuadrature);
    }
    let mut nodes = DVector::zeros(n);
    let mut weights = DVector::zeros(n);
    let half = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..half {
        // Initial guesses, largest root first: an asymptotic estimate for
        // the outermost root, then steps inward from the roots already
        // found. Newton cleans each one up to machine precision.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        for _ in 0..MAX_NEWTON_ITERS {
            let (p, dp) = hermite_orthonormal(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        if 2 * i + 1 == n {
            // The middle root of an odd rule is exactly zero.
            z = 0.0;
        }
        let (_, dp) = hermite_orthonormal(n, z);
        let w = 2.0 / (dp * dp);
        // Descending from the top end, mirrored into the bottom end, gives
        // ascending order overall.
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    Ok((nodes, weights))
}

/// Value and derivative of the degree-`n` orthonormal Hermite polynomial
/// (weight `exp(-t^2)`) at `z`, via the stable three-term recurrence.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Log density of each observed value under its predictive distribution,
/// with the log-normal noise mixture integrated by Gauss-Hermite
/// quadrature:
///
/// ```text
/// p(y* | x*) = integral N(y* | mu_f*, var_f* + e^g) N(g | mu_g*, var_g*) dg
/// ```
///
/// Every entry of `var_f` must be positive or the Gaussian density is
/// undefined; `var_g` entries may be zero (the mixture degenerates to a
/// single Gaussian and the rule is exact for any node count).
pub fn log_predictive_density(
    latent: &LatentPrediction,
    y_star: &DVector<f64>,
    nodes: usize,
) -> Result<DVector<f64>, VshgpError> {
    let n = latent.mu_f.len();
    if y_star.len() != n {
        return Err(VshgpError::dim(
            "observations per prediction",
            n,
            y_star.len(),
        ));
    }
    for i in 0..n {
        if latent.var_f[i] <= 0.0 || latent.var_g[i] < 0.0 {
            return Err(VshgpError::NonFinite {
                context: "predictive variances",
            });
        }
    }
    let (t, w) = gauss_hermite(nodes)?;
    let log_w: Vec<f64> = w
        .iter()
        .map(|wk| wk.ln() - 0.5 * std::f64::consts::PI.ln())
        .collect();
    let mut out = DVector::zeros(n);
    let mut terms = vec![0.0; nodes];
    for i in 0..n {
        let scale = (2.0 * latent.var_g[i]).sqrt();
        for k in 0..nodes {
            let g = latent.mu_g[i] + scale * t[k];
            let var = latent.var_f[i] + g.exp();
            terms[k] = log_w[k] + gaussian_log_density(y_star[i], latent.mu_f[i], var);
        }
        out[i] = log_sum_exp(&terms);
    }
    Ok(out)
}

fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let d = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
