//! Polak–Ribière+ conjugate gradient with a strong-Wolfe line search.
//!
//! The public entry point maximizes; internally everything runs in
//! minimization orientation on the negated objective. The line search follows
//! the classic bracket-then-zoom scheme with cubic interpolation, and treats
//! an unevaluable trial point (callback returned `None`, or a non-finite
//! value) as a step that went too far rather than as an error.

use nalgebra::DVector;

use crate::{OptimError, OptimizerConfig};

/// Why a conjugate-gradient run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgdOutcome {
    /// All budgeted line searches were spent.
    BudgetExhausted,
    /// The gradient's infinity norm dropped below the internal tolerance.
    Converged,
    /// A line search failed even along the steepest-ascent direction; the
    /// best point found so far is returned.
    Stalled,
}

/// Result of [`cgd_maximize`]. `trace` holds the objective at the starting
/// point followed by the value after each accepted step, so it is
/// non-decreasing and has length `line_searches + 1` at most (failed searches
/// consume budget without appending).
#[derive(Debug, Clone)]
pub struct CgdResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub trace: Vec<f64>,
    pub line_searches: usize,
    pub outcome: CgdOutcome,
}

/// Gradient tolerance (infinity norm, minimization orientation) below which
/// the run reports [`CgdOutcome::Converged`].
const GRAD_TOL: f64 = 1e-12;
/// Cap on bracketing expansions per line search.
const MAX_BRACKET: usize = 50;
/// Cap on zoom refinements per line search.
const MAX_ZOOM: usize = 30;
/// Largest step length the bracket phase will ever try.
const ALPHA_MAX: f64 = 1e12;
/// A trial point is accepted only once its directional slope has flattened
/// to this fraction of the initial one (or the configured curvature constant
/// if that is tighter). The curvature constant alone admits points far from
/// the one-dimensional minimum — under the conventional loose value 0.9 even
/// a raw doubling trial often passes — and such sloppy steps destroy the
/// conjugacy that makes the method worth running. Accepted points always
/// satisfy the formal strong-Wolfe conditions since this bound is stricter.
const SLOPE_FLAT_FRACTION: f64 = 0.02;

/// A fully evaluated point along the current search direction.
struct LinePoint {
    alpha: f64,
    value: f64,
    slope: f64,
    point: DVector<f64>,
    grad: DVector<f64>,
}

/// Maximizes `objective` from `x0` using at most `max_line_searches` strong-
/// Wolfe line searches (each search may spend several objective evaluations;
/// failed searches count against the budget too). The callback returns the
/// value and gradient of the function being maximized, or `None` where it
/// cannot be evaluated. A budget of zero returns the starting point.
///
/// Errors only when the starting point itself is unevaluable or non-finite;
/// later failures degrade into a steepest-ascent restart and then a graceful
/// stop at the best point seen.
pub fn cgd_maximize<F>(
    mut objective: F,
    x0: DVector<f64>,
    max_line_searches: usize,
    config: &OptimizerConfig,
) -> Result<CgdResult, OptimError>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    config.validate()?;
    let (c1, c2) = (config.c1, config.c2);

    // Minimization orientation from here on.
    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let (value, grad) = objective(x)?;
        value.is_finite().then(|| (-value, -grad))
    };

    let (f0, g0) = match eval(&x0) {
        Some(pair) => pair,
        None => {
            // Distinguish "callback refused" from "callback returned NaN".
            return match objective(&x0) {
                Some((value, _)) => Err(OptimError::NonFiniteStart { value }),
                None => Err(OptimError::StartEvalFailed),
            };
        }
    };

    let mut x = x0;
    let mut fx = f0;
    let mut gx = g0;
    let mut d = -&gx;
    let mut trace = vec![-fx];
    let mut f_prev = fx;
    let mut restarted = false;
    let mut searches = 0usize;
    let mut outcome = CgdOutcome::BudgetExhausted;

    while searches < max_line_searches {
        if gx.amax() <= GRAD_TOL || !gx.iter().all(|g| g.is_finite()) {
            outcome = if gx.amax() <= GRAD_TOL {
                CgdOutcome::Converged
            } else {
                CgdOutcome::Stalled
            };
            break;
        }

        let mut dphi0 = gx.dot(&d);
        if !(dphi0 < 0.0) {
            // Conjugacy has broken down; fall back to steepest descent.
            d = -&gx;
            dphi0 = -gx.norm_squared();
            if !(dphi0 < 0.0) {
                outcome = CgdOutcome::Converged;
                break;
            }
        }

        let alpha_init = initial_step(searches, fx, f_prev, dphi0);
        let accepted = strong_wolfe(&mut eval, &x, &d, fx, dphi0, alpha_init, c1, c2);
        searches += 1;

        match accepted {
            Some(pt) => {
                // Polak–Ribière+ with the clip to zero, plus Powell's restart:
                // once consecutive gradients stop being roughly orthogonal the
                // conjugacy assumption has drifted too far, so start over from
                // steepest ascent rather than keep compounding the error.
                let powell_drift = pt.grad.dot(&gx).abs() >= 0.2 * pt.grad.norm_squared();
                let beta = if powell_drift {
                    0.0
                } else {
                    (pt.grad.dot(&(&pt.grad - &gx)) / gx.norm_squared()).max(0.0)
                };
                f_prev = fx;
                x = pt.point;
                fx = pt.value;
                d = -&pt.grad + beta * d;
                gx = pt.grad;
                trace.push(-fx);
                restarted = false;
            }
            None if restarted => {
                outcome = CgdOutcome::Stalled;
                break;
            }
            None => {
                d = -&gx;
                restarted = true;
            }
        }
    }

    Ok(CgdResult {
        x,
        value: -fx,
        trace,
        line_searches: searches,
        outcome,
    })
}

/// First trial step for a line search: scale-aware on the first iteration,
/// afterwards the classic estimate from the previous decrease.
fn initial_step(search_index: usize, fx: f64, f_prev: f64, dphi0: f64) -> f64 {
    if search_index == 0 {
        return 1.0 / (1.0 + (-dphi0).sqrt());
    }
    let guess = 2.02 * (fx - f_prev) / dphi0;
    if guess.is_finite() && guess > 0.0 {
        guess.clamp(1e-12, ALPHA_MAX)
    } else {
        1.0
    }
}

/// Bracket-then-zoom strong-Wolfe search on `phi(alpha) = f(x + alpha d)`.
/// Returns a point satisfying sufficient decrease, and in the regular exit
/// paths the curvature condition as well; `None` means no acceptable step
/// was found.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<E>(
    eval: &mut E,
    x: &DVector<f64>,
    d: &DVector<f64>,
    phi0: f64,
    dphi0: f64,
    alpha_init: f64,
    c1: f64,
    c2: f64,
) -> Option<LinePoint>
where
    E: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut probe = |alpha: f64| -> Option<LinePoint> {
        let point = x + alpha * d;
        let (value, grad) = eval(&point)?;
        let slope = grad.dot(d);
        Some(LinePoint {
            alpha,
            value,
            slope,
            point,
            grad,
        })
    };
    let sufficient = |pt: &LinePoint| pt.value <= phi0 + c1 * pt.alpha * dphi0;
    let slope_tol = -dphi0 * c2.min(SLOPE_FLAT_FRACTION);
    let flat = |pt: &LinePoint| pt.slope.abs() <= slope_tol;

    let mut prev = LinePoint {
        alpha: 0.0,
        value: phi0,
        slope: dphi0,
        point: x.clone(),
        grad: DVector::zeros(0), // never read: alpha 0 is never accepted
    };
    let mut alpha = alpha_init.clamp(f64::MIN_POSITIVE, ALPHA_MAX);

    for iter in 0..MAX_BRACKET {
        match probe(alpha) {
            None => {
                // Unevaluable: the step overshot into bad territory. Back off
                // toward the last good point.
                alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
                if alpha - prev.alpha <= f64::EPSILON * prev.alpha.max(1.0) {
                    return None;
                }
            }
            Some(pt) => {
                if !sufficient(&pt) || (iter > 0 && pt.value >= prev.value) {
                    return zoom(&mut probe, prev, pt, phi0, dphi0, c1, slope_tol);
                }
                if flat(&pt) {
                    return Some(pt);
                }
                if pt.slope >= 0.0 {
                    return zoom(&mut probe, pt, prev, phi0, dphi0, c1, slope_tol);
                }
                if pt.alpha >= ALPHA_MAX {
                    return Some(pt); // sufficient decrease still holds out here
                }
                alpha = (pt.alpha * 2.0).min(ALPHA_MAX);
                prev = pt;
            }
        }
    }
    // Expansion never found a bracket; settle for the last good point if any.
    (prev.alpha > 0.0).then_some(prev)
}

/// Zoom phase: shrinks `[lo, hi]` keeping the invariant that `lo` satisfies
/// sufficient decrease with the smallest value seen. `hi` may be a point that
/// failed to evaluate (value = +inf), in which case interpolation degrades to
/// bisection.
fn zoom<P>(
    probe: &mut P,
    mut lo: LinePoint,
    mut hi: LinePoint,
    phi0: f64,
    dphi0: f64,
    c1: f64,
    slope_tol: f64,
) -> Option<LinePoint>
where
    P: FnMut(f64) -> Option<LinePoint>,
{
    let finish = |lo: LinePoint| (lo.alpha > 0.0).then_some(lo);

    for _ in 0..MAX_ZOOM {
        let width = (hi.alpha - lo.alpha).abs();
        if width <= f64::EPSILON * lo.alpha.abs().max(1.0) {
            return finish(lo);
        }
        let alpha = cubic_interpolate(&lo, &hi);
        match probe(alpha) {
            None => {
                // Mark the failed trial as an upper wall and keep shrinking.
                hi = LinePoint {
                    alpha,
                    value: f64::INFINITY,
                    slope: f64::NAN,
                    point: DVector::zeros(0),
                    grad: DVector::zeros(0),
                };
            }
            Some(pt) => {
                if pt.value > phi0 + c1 * pt.alpha * dphi0 || pt.value >= lo.value {
                    hi = pt;
                } else {
                    if pt.slope.abs() <= slope_tol {
                        return Some(pt);
                    }
                    if pt.slope * (hi.alpha - lo.alpha) >= 0.0 {
                        hi = lo;
                    }
                    lo = pt;
                }
            }
        }
    }
    finish(lo)
}

/// Minimizer of the cubic fitted to two points with values and slopes,
/// safeguarded to stay well inside the interval; falls back to bisection
/// when the cubic has no interior minimum or an endpoint is unevaluable.
fn cubic_interpolate(a: &LinePoint, b: &LinePoint) -> f64 {
    let (lo, hi) = if a.alpha <= b.alpha { (a, b) } else { (b, a) };
    let width = hi.alpha - lo.alpha;
    let bisect = lo.alpha + 0.5 * width;
    if !(lo.value.is_finite() && hi.value.is_finite() && lo.slope.is_finite() && hi.slope.is_finite())
    {
        return bisect;
    }

    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.alpha - hi.alpha);
    let d2_sq = d1 * d1 - lo.slope * hi.slope;
    if d2_sq < 0.0 {
        return bisect;
    }
    let d2 = d2_sq.sqrt();
    let candidate =
        hi.alpha - width * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if !candidate.is_finite() {
        return bisect;
    }
    // Keep a safety margin of 10% of the interval from each end.
    candidate.clamp(lo.alpha + 0.1 * width, hi.alpha - 0.1 * width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> OptimizerConfig {
        OptimizerConfig::default()
    }

    /// Concave quadratic with maximum value 3.0 at (1, -2).
    fn bowl(x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let a = x[0] - 1.0;
        let b = x[1] + 2.0;
        let value = 3.0 - (2.0 * a * a + 0.5 * b * b + a * b);
        let grad = DVector::from_vec(vec![-(4.0 * a + b), -(a + b)]);
        Some((value, grad))
    }

    #[test]
    fn quadratic_bowl_converges_within_five_searches() {
        let x0 = DVector::from_vec(vec![4.0, 4.0]);
        let res = cgd_maximize(bowl, x0, 5, &config()).unwrap();
        assert!(
            (res.value - 3.0).abs() < 1e-8,
            "value {} after {} searches",
            res.value,
            res.line_searches
        );
        assert!((res.x[0] - 1.0).abs() < 1e-4);
        assert!((res.x[1] + 2.0).abs() < 1e-4);
    }

    #[test]
    fn zero_budget_returns_start_unchanged() {
        let x0 = DVector::from_vec(vec![4.0, 4.0]);
        let res = cgd_maximize(bowl, x0.clone(), 0, &config()).unwrap();
        assert_eq!(res.x, x0);
        assert_eq!(res.line_searches, 0);
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.outcome, CgdOutcome::BudgetExhausted);
    }

    #[test]
    fn negated_rosenbrock_reaches_optimum() {
        let objective = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let value = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let grad = DVector::from_vec(vec![
                2.0 * (1.0 - a) + 400.0 * a * (b - a * a),
                -200.0 * (b - a * a),
            ]);
            Some((value, grad))
        };
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let res = cgd_maximize(objective, x0, 200, &config()).unwrap();
        assert!(res.value > -1e-6, "value {}", res.value);
        assert!((res.x[0] - 1.0).abs() < 1e-3);
        assert!((res.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trace_is_non_decreasing_and_starts_at_f0() {
        let objective = |x: &DVector<f64>| {
            // Oscillatory and anisotropic enough to force real bracketing work.
            let value = -(x[0].powi(4) + 50.0 * x[1] * x[1] + (3.0 * x[0]).sin());
            let grad = DVector::from_vec(vec![
                -(4.0 * x[0].powi(3) + 3.0 * (3.0 * x[0]).cos()),
                -100.0 * x[1],
            ]);
            Some((value, grad))
        };
        let x0 = DVector::from_vec(vec![2.0, -3.0]);
        let f0 = objective(&x0).unwrap().0;
        let res = cgd_maximize(objective, x0, 40, &config()).unwrap();
        assert_eq!(res.trace[0], f0);
        for w in res.trace.windows(2) {
            assert!(w[1] >= w[0], "trace decreased: {} -> {}", w[0], w[1]);
        }
        assert_eq!(*res.trace.last().unwrap(), res.value);
    }

    #[test]
    fn unevaluable_region_is_backed_away_from() {
        // Objective only defined for x < 2; maximum at x = 1 on the boundary
        // of a log barrier-free region. The search must shrink steps instead
        // of erroring out.
        let objective = |x: &DVector<f64>| {
            let t = x[0];
            if t >= 2.0 {
                return None;
            }
            Some((
                -(t - 1.0) * (t - 1.0),
                DVector::from_vec(vec![-2.0 * (t - 1.0)]),
            ))
        };
        let x0 = DVector::from_vec(vec![-5.0]);
        let res = cgd_maximize(objective, x0, 20, &config()).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-4, "x {}", res.x[0]);
    }

    #[test]
    fn unevaluable_start_is_an_error() {
        let objective = |_x: &DVector<f64>| None;
        let err = cgd_maximize(objective, DVector::from_vec(vec![0.0]), 5, &config()).unwrap_err();
        assert!(matches!(err, OptimError::StartEvalFailed));
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let objective = |_x: &DVector<f64>| Some((f64::NAN, DVector::from_vec(vec![0.0])));
        let err = cgd_maximize(objective, DVector::from_vec(vec![0.0]), 5, &config()).unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteStart { .. }));
    }

    #[test]
    fn already_optimal_start_reports_convergence() {
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let res = cgd_maximize(bowl, x0.clone(), 10, &config()).unwrap();
        assert_eq!(res.outcome, CgdOutcome::Converged);
        assert_eq!(res.x, x0);
        assert_eq!(res.line_searches, 0);
    }
}
