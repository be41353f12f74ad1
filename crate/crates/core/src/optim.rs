//! Limited-memory quasi-Newton minimization with box projection.
//!
//! A compact projected L-BFGS: search directions come from the standard
//! two-loop recursion over a bounded history of curvature pairs, bound
//! handling uses gradient-projection (components sitting at a bound with the
//! gradient pushing outward are frozen out of the direction), and steps are
//! chosen by a weak-Wolfe bisection line search along the feasible segment
//! of the ray, so curvature pairs stay well-conditioned. Convergence is
//! declared on a small projected gradient or a small relative objective
//! decrease. With infinite bounds this reduces to plain L-BFGS, which is how
//! the logistic-regression trainer uses it.

use std::collections::VecDeque;

/// Componentwise box constraints; entries may be infinite.
#[derive(Clone, Debug)]
pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    fn project(&self, x: &mut [f64]) {
        for ((xi, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(lo, hi);
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Options {
    pub max_iterations: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease drops below this.
    pub obj_rel_tol: f64,
    /// Number of curvature pairs retained.
    pub history: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 60;

/// Infinity norm of `x - project(x - g)`, the first-order stationarity
/// measure for box-constrained problems.
fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let stepped = (x[i] - g[i]).clamp(bounds.lower[i], bounds.upper[i]);
        norm = norm.max((x[i] - stepped).abs());
    }
    norm
}

/// Largest step `alpha >= 0` such that `x + alpha * d` stays inside the box,
/// or infinity when no moving component ever reaches a bound.
fn feasible_extent(x: &[f64], d: &[f64], bounds: &Bounds) -> f64 {
    let mut extent = f64::INFINITY;
    for i in 0..x.len() {
        if d[i] > 0.0 {
            extent = extent.min((bounds.upper[i] - x[i]) / d[i]);
        } else if d[i] < 0.0 {
            extent = extent.min((bounds.lower[i] - x[i]) / d[i]);
        }
    }
    extent.max(0.0)
}

/// Minimizes `f` from `x0` inside `bounds`. `f` writes the gradient into its
/// second argument and returns the objective value.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &Options) -> Solution
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    assert_eq!(bounds.lower.len(), dim);
    assert_eq!(bounds.upper.len(), dim);

    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Solution { x, value: fx, converged: false, iterations: 0 };
    }

    // Curvature history (s, y, 1/sᵀy), newest at the back.
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut direction = vec![0.0; dim];
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut x_best = vec![0.0; dim];
    let mut g_best = vec![0.0; dim];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        if projected_gradient_norm(&x, &g, bounds) <= opts.grad_tol {
            converged = true;
            iterations = iter;
            break;
        }

        // Variables pinned at a bound with the gradient pushing outward stay
        // fixed this iteration.
        let active: Vec<bool> = (0..dim)
            .map(|i| {
                (x[i] <= bounds.lower[i] && g[i] > 0.0)
                    || (x[i] >= bounds.upper[i] && g[i] < 0.0)
            })
            .collect();

        // Two-loop recursion on the free subspace.
        for i in 0..dim {
            direction[i] = if active[i] { 0.0 } else { -g[i] };
        }
        let mut alphas = vec![0.0; pairs.len()];
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let mut dot = 0.0;
            for i in 0..dim {
                if !active[i] {
                    dot += s[i] * direction[i];
                }
            }
            let a = rho * dot;
            alphas[k] = a;
            for i in 0..dim {
                if !active[i] {
                    direction[i] -= a * y[i];
                }
            }
        }
        if let Some((s, y, _)) = pairs.back() {
            let (mut sy, mut yy) = (0.0, 0.0);
            for i in 0..dim {
                if !active[i] {
                    sy += s[i] * y[i];
                    yy += y[i] * y[i];
                }
            }
            if sy > 0.0 && yy > 0.0 {
                let scale = sy / yy;
                for d in direction.iter_mut() {
                    *d *= scale;
                }
            }
        }
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let mut dot = 0.0;
            for i in 0..dim {
                if !active[i] {
                    dot += y[i] * direction[i];
                }
            }
            let b = rho * dot;
            for i in 0..dim {
                if !active[i] {
                    direction[i] += s[i] * (alphas[k] - b);
                }
            }
        }
        // Guard: fall back to projected steepest descent when the recursion
        // fails to produce a descent direction.
        let mut dg: f64 = direction.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if !dg.is_finite() || dg >= 0.0 {
            for i in 0..dim {
                direction[i] = if active[i] { 0.0 } else { -g[i] };
            }
            dg = direction.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        }

        // Feasible extent of the ray: step length at which the first free
        // component reaches its bound. A quasi-Newton direction can point a
        // free component straight out of the box (extent zero); steepest
        // descent never does, so retry with it before declaring stationarity.
        let mut alpha_max = feasible_extent(&x, &direction, bounds);
        if alpha_max <= 0.0 {
            for i in 0..dim {
                direction[i] = if active[i] { 0.0 } else { -g[i] };
            }
            dg = direction.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            alpha_max = feasible_extent(&x, &direction, bounds);
            if alpha_max <= 0.0 {
                converged = projected_gradient_norm(&x, &g, bounds) <= opts.grad_tol;
                break;
            }
        }

        // Weak-Wolfe bisection on the feasible segment: find a step passing
        // the Armijo decrease test whose directional derivative has also
        // flattened enough (or that reaches the bound), so stored curvature
        // pairs keep s'y > 0. Near the numerical floor the curvature test can
        // be unsatisfiable, so the lowest Armijo-passing point is kept as a
        // fallback.
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut alpha = alpha_max.min(1.0);
        let mut f_fallback = f64::INFINITY;
        let mut wolfe_value = None;
        for _ in 0..MAX_LINE_SEARCH {
            for i in 0..dim {
                x_new[i] =
                    (x[i] + alpha * direction[i]).clamp(bounds.lower[i], bounds.upper[i]);
            }
            let f_new = f(&x_new, &mut g_new);
            if !f_new.is_finite() || f_new > fx + ARMIJO_C1 * alpha * dg {
                hi = alpha;
                alpha = 0.5 * (lo + hi);
                continue;
            }
            if f_new <= f_fallback {
                f_fallback = f_new;
                x_best.copy_from_slice(&x_new);
                g_best.copy_from_slice(&g_new);
            }
            let dg_new: f64 = direction.iter().zip(&g_new).map(|(d, gi)| d * gi).sum();
            if dg_new < WOLFE_C2 * dg && alpha < alpha_max {
                lo = alpha;
                alpha = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    (2.0 * alpha).min(alpha_max)
                };
                continue;
            }
            wolfe_value = Some(f_new);
            break;
        }
        let f_accepted = if let Some(value) = wolfe_value {
            x_best.copy_from_slice(&x_new);
            g_best.copy_from_slice(&g_new);
            value
        } else if f_fallback.is_finite() {
            f_fallback
        } else {
            // No admissible step: declare convergence only if first-order
            // conditions hold.
            converged = projected_gradient_norm(&x, &g, bounds) <= opts.grad_tol;
            break;
        };

        // Update curvature history and state from the accepted point.
        let s: Vec<f64> = (0..dim).map(|i| x_best[i] - x[i]).collect();
        let y: Vec<f64> = (0..dim).map(|i| g_best[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - f_accepted;
        let scale = fx.abs().max(f_accepted.abs()).max(1.0);
        x.copy_from_slice(&x_best);
        g.copy_from_slice(&g_best);
        fx = f_accepted;
        if decrease <= opts.obj_rel_tol * scale {
            converged = true;
            break;
        }
    }
    if !converged && projected_gradient_norm(&x, &g, bounds) <= opts.grad_tol {
        converged = true;
    }

    Solution { x, value: fx, converged, iterations }
}
