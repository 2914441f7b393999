//! Projected limited-memory BFGS for box-constrained smooth minimisation.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub pg_tol: f64,
    /// Stop when the relative decrease of the objective drops below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            pg_tol: 1e-6,
            f_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (l, u))| ((xi - gi).clamp(*l, *u) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimises `f` (value and gradient) over the box `[lower, upper]`
/// starting from `x0`.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> LocalResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return LocalResult {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    let mut alpha_buf = vec![0.0; opts.memory];

    for iter in 0..opts.max_iter {
        if projected_grad_norm(&x, &g, lower, upper) <= opts.pg_tol {
            return LocalResult {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            };
        }
        for i in 0..n {
            let at_lower = x[i] <= lower[i] && g[i] > 0.0;
            let at_upper = x[i] >= upper[i] && g[i] < 0.0;
            free[i] = !(at_lower || at_upper);
        }

        let mut steepest = mem.is_empty();
        if !steepest {
            // Two-loop recursion restricted to the free variables.
            for i in 0..n {
                d[i] = if free[i] { g[i] } else { 0.0 };
            }
            for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
                let a = rho * dot_masked(s, &d, &free);
                alpha_buf[k] = a;
                for i in 0..n {
                    if free[i] {
                        d[i] -= a * y[i];
                    }
                }
            }
            let (s_last, y_last, _) = mem.back().expect("non-empty");
            let gamma = dot_masked(s_last, y_last, &free) / dot_masked(y_last, y_last, &free).max(1e-300);
            let gamma = if gamma.is_finite() && gamma > 0.0 { gamma } else { 1.0 };
            for v in d.iter_mut() {
                *v *= gamma;
            }
            for (k, (s, y, rho)) in mem.iter().enumerate() {
                let b = rho * dot_masked(y, &d, &free);
                for i in 0..n {
                    if free[i] {
                        d[i] += (alpha_buf[k] - b) * s[i];
                    }
                }
            }
            for i in 0..n {
                d[i] = if free[i] { -d[i] } else { 0.0 };
            }
            let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if !(gd < 0.0) {
                steepest = true;
                mem.clear();
            }
        }
        if steepest {
            let gmax = g
                .iter()
                .zip(&free)
                .filter(|(_, f)| **f)
                .map(|(v, _)| v.abs())
                .fold(0.0, f64::max);
            let scale = if gmax > 1.0 { 1.0 / gmax } else { 1.0 };
            for i in 0..n {
                d[i] = if free[i] { -g[i] * scale } else { 0.0 };
            }
        }

        // Backtracking along the projection arc.
        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lower, upper);
            let decrease: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if !steepest {
                mem.clear();
                continue;
            }
            let converged = projected_grad_norm(&x, &g, lower, upper) <= opts.pg_tol * 1e3;
            return LocalResult {
                x,
                value: fx,
                iterations: iter,
                converged,
            };
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if rel <= opts.f_tol {
            return LocalResult {
                x,
                value: fx,
                iterations: iter + 1,
                converged: true,
            };
        }
    }
    let converged = projected_grad_norm(&x, &g, lower, upper) <= opts.pg_tol;
    LocalResult {
        x,
        value: fx,
        iterations: opts.max_iter,
        converged,
    }
}

#[inline]
fn dot_masked(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((x, y), _)| x * y)
        .sum()
}
