//! Self-contained smooth constrained optimiser.
//!
//! Inequality constraints `c_i(v) <= 0` are handled by an augmented
//! Lagrangian outer loop; each subproblem is a box-constrained minimisation
//! solved with projected L-BFGS. Every problem is started from several
//! points and the best result is kept (ties go to the lowest start index).

pub mod lbfgs;

use crate::domain::{sobol_unit, DomainBox};
use lbfgs::{minimize_box, LbfgsOptions};

/// Smooth scalar function returning its value and writing its gradient.
pub type SmoothFn<'a> = Box<dyn Fn(&[f64], &mut [f64]) -> f64 + 'a>;

pub struct NlpProblem<'a> {
    pub objective: SmoothFn<'a>,
    /// Inequality constraints `c(v) <= 0`.
    pub constraints: Vec<SmoothFn<'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
}

impl<'a> NlpProblem<'a> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlpOptions {
    pub tol: f64,
    pub feas_tol: f64,
    /// Inner iterations per augmented-Lagrangian round.
    pub max_iter: usize,
    pub max_outer: usize,
    pub penalty0: f64,
    pub penalty_growth: f64,
    pub memory: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            feas_tol: 1e-6,
            max_iter: 400,
            max_outer: 12,
            penalty0: 10.0,
            penalty_growth: 10.0,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub max_violation: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start_index: usize,
}

fn max_violation(p: &NlpProblem<'_>, v: &[f64], scratch: &mut [f64]) -> f64 {
    p.constraints
        .iter()
        .map(|c| c(v, scratch).max(0.0))
        .fold(0.0, f64::max)
}

struct LegResult {
    x: Vec<f64>,
    value: f64,
    violation: f64,
    converged: bool,
    iterations: usize,
}

fn solve_from(p: &NlpProblem<'_>, start: &[f64], opts: &NlpOptions) -> LegResult {
    let n = p.dim();
    let m = p.constraints.len();
    let inner = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        pg_tol: opts.tol,
        f_tol: 1e-14,
    };
    let mut scratch = vec![0.0; n];
    if m == 0 {
        let r = minimize_box(|v, g| (p.objective)(v, g), start, &p.lower, &p.upper, &inner);
        return LegResult {
            value: r.value,
            x: r.x,
            violation: 0.0,
            converged: r.converged,
            iterations: r.iterations,
        };
    }

    let mut mult = vec![0.0; m];
    let mut rho = opts.penalty0;
    let mut x = start.to_vec();
    let mut iterations = 0;
    let mut prev_measure = f64::INFINITY;
    let mut converged = false;
    let mut cvals = vec![0.0; m];
    for _ in 0..opts.max_outer {
        let mult_ref = &mult;
        let lagr = |v: &[f64], g: &mut [f64]| {
            let mut cg = vec![0.0; v.len()];
            let mut val = (p.objective)(v, g);
            for (i, c) in p.constraints.iter().enumerate() {
                let ci = c(v, &mut cg);
                let shifted = mult_ref[i] + rho * ci;
                if shifted > 0.0 {
                    val += (shifted * shifted - mult_ref[i] * mult_ref[i]) / (2.0 * rho);
                    for (gj, cj) in g.iter_mut().zip(&cg) {
                        *gj += shifted * cj;
                    }
                } else {
                    val -= mult_ref[i] * mult_ref[i] / (2.0 * rho);
                }
            }
            val
        };
        let r = minimize_box(lagr, &x, &p.lower, &p.upper, &inner);
        iterations += r.iterations;
        x = r.x;
        for (i, c) in p.constraints.iter().enumerate() {
            cvals[i] = c(&x, &mut scratch);
        }
        // Feasibility-complementarity measure of the AL method.
        let measure = cvals
            .iter()
            .zip(&mult)
            .map(|(c, mu)| c.max(-mu / rho).abs())
            .fold(0.0, f64::max);
        for i in 0..m {
            mult[i] = (mult[i] + rho * cvals[i]).max(0.0);
        }
        log::trace!("al round: rho={rho} measure={measure} inner_converged={}", r.converged);
        if measure <= opts.feas_tol && r.converged {
            converged = true;
            break;
        }
        if measure > 0.1 * prev_measure {
            rho *= opts.penalty_growth;
        }
        prev_measure = measure;
    }
    let value = (p.objective)(&x, &mut scratch);
    let violation = max_violation(p, &x, &mut scratch);
    LegResult {
        x,
        value,
        violation,
        converged: converged && violation <= opts.feas_tol,
        iterations,
    }
}

/// Multi-start augmented-Lagrangian solve.
///
/// Feasible starts are kept as fallback candidates, so the returned value is
/// never worse than the objective at any feasible start.
pub fn solve_nlp(p: &NlpProblem<'_>, opts: &NlpOptions) -> NlpSolution {
    assert!(!p.starts.is_empty(), "at least one start required");
    let mut scratch = vec![0.0; p.dim()];
    let mut best: Option<NlpSolution> = None;
    let mut any_converged = false;
    let better = |cand: &NlpSolution, cur: &NlpSolution, feas_tol: f64| -> bool {
        let cf = cand.max_violation <= feas_tol;
        let bf = cur.max_violation <= feas_tol;
        match (cf, bf) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => cand.value < cur.value,
            (false, false) => cand.max_violation < cur.max_violation,
        }
    };
    let mut total_iters = 0;
    for (idx, s) in p.starts.iter().enumerate() {
        let mut s = s.clone();
        for ((v, l), u) in s.iter_mut().zip(&p.lower).zip(&p.upper) {
            *v = v.clamp(*l, *u);
        }
        let start_viol = max_violation(p, &s, &mut scratch);
        let leg = solve_from(p, &s, opts);
        total_iters += leg.iterations;
        any_converged |= leg.converged;
        let mut cands = vec![NlpSolution {
            argmin: leg.x,
            value: leg.value,
            max_violation: leg.violation,
            converged: leg.converged,
            iterations: leg.iterations,
            start_index: idx,
        }];
        if start_viol <= opts.feas_tol {
            let v = (p.objective)(&s, &mut scratch);
            cands.push(NlpSolution {
                argmin: s,
                value: v,
                max_violation: start_viol,
                converged: false,
                iterations: 0,
                start_index: idx,
            });
        }
        for c in cands {
            match &best {
                None => best = Some(c),
                Some(b) if better(&c, b, opts.feas_tol) => best = Some(c),
                _ => {}
            }
        }
    }
    let mut best = best.expect("non-empty starts");
    best.iterations = total_iters;
    best.converged = any_converged && best.max_violation <= opts.feas_tol;
    best
}

/// Central finite-difference gradient wrapper for value-only functions.
pub fn with_fd_gradient<'a, F>(f: F) -> impl Fn(&[f64], &mut [f64]) -> f64 + 'a
where
    F: Fn(&[f64]) -> f64 + 'a,
{
    const H: f64 = 1e-6;
    move |x: &[f64], g: &mut [f64]| {
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let orig = xp[i];
            xp[i] = orig + H;
            let fp = f(&xp);
            xp[i] = orig - H;
            let fm = f(&xp);
            xp[i] = orig;
            g[i] = (fp - fm) / (2.0 * H);
        }
        f(x)
    }
}

/// Start points for a box search: the explicit points first, then scrambled
/// Sobol points until `n_starts` are available.
pub fn box_starts(domain: &DomainBox, n_starts: usize, seed: u32, explicit: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = explicit.iter().take(n_starts.max(explicit.len())).cloned().collect();
    let extra = n_starts.saturating_sub(starts.len());
    starts.extend(
        sobol_unit(extra, domain.dim(), seed)
            .into_iter()
            .map(|u| domain.from_unit(&u)),
    );
    starts
}

/// Multi-start projected quasi-Newton minimisation over a box.
///
/// Returns the best iterate; ties keep the lowest start index.
pub fn minimize_over_box<F>(f: F, domain: &DomainBox, starts: &[Vec<f64>], opts: &NlpOptions) -> (Vec<f64>, f64)
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    assert!(!starts.is_empty(), "at least one start required");
    let inner = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        pg_tol: opts.tol,
        f_tol: 1e-14,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let r = minimize_box(&f, s, domain.lower(), domain.upper(), &inner);
        if best.as_ref().map_or(true, |(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    best.expect("non-empty starts")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> NlpOptions {
        NlpOptions::default()
    }

    #[test]
    fn active_quadratic_constraint() {
        let p = NlpProblem {
            objective: Box::new(|v, g| {
                g[0] = 2.0 * v[0];
                v[0] * v[0]
            }),
            constraints: vec![Box::new(|v, g| {
                g[0] = -1.0;
                1.0 - v[0]
            })],
            lower: vec![-5.0],
            upper: vec![5.0],
            starts: vec![vec![-3.0], vec![4.0]],
        };
        let s = solve_nlp(&p, &opts());
        assert!(s.converged);
        assert!((s.argmin[0] - 1.0).abs() < 1e-5);
        assert!((s.value - 1.0).abs() < 1e-5);
        assert!(s.max_violation <= 1e-6);
    }

    #[test]
    fn linear_objective_on_ball() {
        let p = NlpProblem {
            objective: Box::new(|v, g| {
                g[0] = 1.0;
                g[1] = 0.0;
                v[0]
            }),
            constraints: vec![Box::new(|v, g| {
                g[0] = 2.0 * v[0];
                g[1] = 2.0 * v[1];
                v[0] * v[0] + v[1] * v[1] - 1.0
            })],
            lower: vec![-2.0, -2.0],
            upper: vec![2.0, 2.0],
            starts: vec![vec![0.0, 0.3]],
        };
        let s = solve_nlp(&p, &opts());
        assert!(s.converged, "{s:?}");
        assert!((s.argmin[0] + 1.0).abs() < 1e-4 && s.argmin[1].abs() < 1e-2, "{s:?}");
        assert!((s.value + 1.0).abs() < 1e-5);
    }

    #[test]
    fn unconstrained_minimum() {
        let p = NlpProblem {
            objective: Box::new(|v, g| {
                g[0] = 2.0 * (v[0] - 2.0);
                (v[0] - 2.0).powi(2)
            }),
            constraints: vec![],
            lower: vec![-10.0],
            upper: vec![10.0],
            starts: vec![vec![0.0]],
        };
        let s = solve_nlp(&p, &opts());
        assert!((s.argmin[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_keeps_first_start() {
        let dom = DomainBox::cube(2, 0.0, 1.0).unwrap();
        let starts = box_starts(&dom, 4, 1, &[vec![0.25, 0.75]]);
        let (x, v) = minimize_over_box(
            |_, g| {
                g.iter_mut().for_each(|v| *v = 0.0);
                3.0
            },
            &dom,
            &starts,
            &opts(),
        );
        assert_eq!(v, 3.0);
        assert_eq!(x, vec![0.25, 0.75]);
    }

    #[test]
    fn fd_gradient_wrapper() {
        let f = with_fd_gradient(|x: &[f64]| x[0].sin() * x[1]);
        let mut g = [0.0; 2];
        let v = f(&[0.3, 2.0], &mut g);
        assert!((v - 0.3f64.sin() * 2.0).abs() < 1e-15);
        assert!((g[0] - 0.3f64.cos() * 2.0).abs() < 1e-8);
        assert!((g[1] - 0.3f64.sin()).abs() < 1e-8);
    }
}
