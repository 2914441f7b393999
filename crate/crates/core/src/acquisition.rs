//! Candidate generation and decision gates of the collaborative loop.
//!
//! All points here live in the unit cube the surrogate models work in.

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefInterval, BeliefModel};
use crate::domain::{sobol_unit, DomainBox};
use crate::error::{CobolError, Result};
use crate::gp::GpPosterior;
use crate::nlp::{minimize_over_box, solve_nlp, NlpOptions, NlpProblem, SmoothFn};

/// Primal-dual weight and gate settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub zeta: f64,
    pub eta: f64,
    pub g_thr: f64,
    pub lambda0: f64,
}

impl DualState {
    pub fn new(lambda0: f64, zeta: f64, eta: f64, g_thr: f64) -> Result<Self> {
        if !(lambda0 >= 0.0) {
            return Err(CobolError::invalid("lambda0", "must be non-negative"));
        }
        if !(zeta > 0.0) {
            return Err(CobolError::invalid("zeta", "must be positive"));
        }
        if !(eta >= 1.0) {
            return Err(CobolError::invalid("eta", "must be at least 1"));
        }
        if !(g_thr > 0.0) {
            return Err(CobolError::invalid("g_thr", "must be positive"));
        }
        Ok(Self {
            lambda: lambda0,
            zeta,
            eta,
            g_thr,
            lambda0,
        })
    }
}

/// `lambda <- max(0, lambda + zeta * z_star)`.
pub fn dual_update(dual: &DualState, z_star: f64) -> DualState {
    DualState {
        lambda: (dual.lambda + dual.zeta * z_star).max(0.0),
        ..*dual
    }
}

/// True when the expert should be asked: interval wider than `g_thr`.
pub fn handover_gate(interval: &BeliefInterval, g_thr: f64) -> bool {
    interval.width() > g_thr
}

/// Multi-start settings for the acquisition solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcqOptions {
    pub starts: usize,
    pub seed: u32,
    pub nlp: NlpOptions,
}

impl Default for AcqOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            nlp: NlpOptions::default(),
        }
    }
}

fn start_points(domain: &DomainBox, opts: &AcqOptions, explicit: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = explicit.to_vec();
    let extra = opts.starts.saturating_sub(starts.len()).max(1);
    starts.extend(
        sobol_unit(extra, domain.dim(), opts.seed)
            .into_iter()
            .map(|u| domain.from_unit(&u)),
    );
    starts
}

/// Starting points for the surrogate searches: the best observed point
/// (if any) followed by Sobol points.
fn gp_starts(post: &GpPosterior, domain: &DomainBox, opts: &AcqOptions) -> Vec<Vec<f64>> {
    let best = post
        .points()
        .iter()
        .zip(post.values())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(p, _)| p.clone());
    start_points(domain, opts, best.as_slice())
}

/// Minimiser of `mu - beta * sigma` over the box.
pub fn vanilla_lcb_candidate(post: &GpPosterior, domain: &DomainBox, opts: &AcqOptions) -> Vec<f64> {
    let starts = gp_starts(post, domain, opts);
    minimize_over_box(|x, g| post.bound_grad(x, -1.0, g), domain, &starts, &opts.nlp).0
}

/// `min_x mu + beta * sigma`.
pub fn min_ucb(post: &GpPosterior, domain: &DomainBox, opts: &AcqOptions) -> f64 {
    let starts = gp_starts(post, domain, opts);
    minimize_over_box(|x, g| post.bound_grad(x, 1.0, g), domain, &starts, &opts.nlp).1
}

/// No-harm test with a precomputed `min_x ucb`.
pub fn no_harm_check(x_c: &[f64], x_u: &[f64], post: &GpPosterior, eta: f64, min_ucb: f64) -> bool {
    let (_, s_u) = post.mean_std(x_u);
    let (_, s_c) = post.mean_std(x_c);
    post.lcb(x_c) <= min_ucb && s_u <= eta * s_c
}

/// No-harm test: `lcb(x_c) <= min ucb` and `sigma(x_u) <= eta * sigma(x_c)`.
pub fn no_harm_gate(x_c: &[f64], x_u: &[f64], post: &GpPosterior, eta: f64, domain: &DomainBox, opts: &AcqOptions) -> bool {
    no_harm_check(x_c, x_u, post, eta, min_ucb(post, domain, opts))
}

/// Result of the joint expert-augmented solve.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCandidate {
    pub x: Vec<f64>,
    /// Pointwise lower belief bound at `x`.
    pub z_star: f64,
    /// Latent value returned by the joint solve (`None` on fallback).
    pub z_joint: Option<f64>,
    /// Set when the joint solve failed and the vanilla candidate was used.
    pub fallback: bool,
}

/// Variable layout `[u (n), v, x (d)]` shared by the joint problems.
struct JointLayout {
    n: usize,
    d: usize,
}

impl JointLayout {
    fn start(&self, u: &[f64], x: &[f64]) -> Vec<f64> {
        u.iter().copied().chain(std::iter::once(0.0)).chain(x.iter().copied()).collect()
    }

    fn bounds(&self, b: f64, domain: &DomainBox) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![-b; self.n + 1];
        let mut hi = vec![b; self.n + 1];
        lo.extend_from_slice(domain.lower());
        hi.extend_from_slice(domain.upper());
        (lo, hi)
    }
}

fn set_constraints<'a>(model: &'a BeliefModel, beta1: f64, lay: &JointLayout) -> Vec<SmoothFn<'a>> {
    let n = lay.n;
    let b = model.norm_bound();
    let floor = model.ll_mle() - beta1;
    vec![
        Box::new(move |w: &[f64], g: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            let mut s = 0.0;
            for i in 0..=n {
                g[i] = 2.0 * w[i];
                s += w[i] * w[i];
            }
            s - b * b
        }),
        Box::new(move |w: &[f64], g: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            let ll = model.whitened_ll_grad(&w[..n], &mut g[..n]);
            g[..n].iter_mut().for_each(|e| *e = -*e);
            floor - ll
        }),
    ]
}

/// Joint solve of `min f_lcb(x) + lambda * z` over the confidence set and
/// the box, followed by a pointwise lower-bound solve at the returned `x`.
///
/// Falls back to `x_u` when the joint solve does not converge.
pub fn expert_augmented_candidate(
    post: &GpPosterior,
    model: &BeliefModel,
    beta1: f64,
    lambda: f64,
    domain: &DomainBox,
    x_u: &[f64],
    opts: &AcqOptions,
) -> Result<AugmentedCandidate> {
    let lay = JointLayout {
        n: model.len(),
        d: domain.dim(),
    };
    let (lower, upper) = lay.bounds(model.norm_bound(), domain);
    let x_starts = start_points(domain, opts, &[x_u.to_vec()]);
    let starts: Vec<Vec<f64>> = x_starts.iter().map(|x| lay.start(model.mle_u(), x)).collect();
    let n = lay.n;
    let d = lay.d;
    let problem = NlpProblem {
        objective: Box::new(move |w: &[f64], g: &mut [f64]| {
            let (u, rest) = w.split_at(n);
            let (v, x) = (rest[0], &rest[1..]);
            let (gu, grest) = g.split_at_mut(n);
            let (gv, gx) = grest.split_at_mut(1);
            let f = post.bound_grad(x, -1.0, gx);
            let mut gzx = vec![0.0; d];
            let (z, dzdv) = model.latent_with_grad(x, u, v, gu, &mut gzx);
            gu.iter_mut().for_each(|e| *e *= lambda);
            gv[0] = lambda * dzdv;
            for j in 0..d {
                gx[j] += lambda * gzx[j];
            }
            f + lambda * z
        }),
        constraints: set_constraints(model, beta1, &lay),
        lower,
        upper,
        starts,
    };
    let sol = solve_nlp(&problem, &opts.nlp);
    if !sol.converged {
        log::debug!(
            "joint acquisition solve failed (violation {:e}); using vanilla candidate",
            sol.max_violation
        );
        let z_star = model.lower_at(x_u, beta1)?;
        return Ok(AugmentedCandidate {
            x: x_u.to_vec(),
            z_star,
            z_joint: None,
            fallback: true,
        });
    }
    let w = sol.argmin;
    let mut x = w[n + 1..].to_vec();
    domain.clamp(&mut x);
    let mut scratch = vec![0.0; n];
    let mut scratch_x = vec![0.0; d];
    let (z_joint, _) = model.latent_with_grad(&x, &w[..n], w[n], &mut scratch, &mut scratch_x);
    let z_star = model.lower_at(&x, beta1)?;
    Ok(AugmentedCandidate {
        x,
        z_star,
        z_joint: Some(z_joint),
        fallback: false,
    })
}

/// Result of the expert-constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedCandidate {
    pub x: Vec<f64>,
    pub z_star: f64,
    /// True when the unconstrained minimiser already satisfied the constraint.
    pub unconstrained: bool,
    pub fallback: bool,
}

/// `min f_lcb(x)` subject to `lower_g(x) <= 0`.
pub fn expert_constrained_candidate(
    post: &GpPosterior,
    model: &BeliefModel,
    beta1: f64,
    domain: &DomainBox,
    x_u: &[f64],
    opts: &AcqOptions,
) -> Result<ConstrainedCandidate> {
    let z_u = model.lower_at(x_u, beta1)?;
    if z_u <= 0.0 {
        return Ok(ConstrainedCandidate {
            x: x_u.to_vec(),
            z_star: z_u,
            unconstrained: true,
            fallback: false,
        });
    }
    let lay = JointLayout {
        n: model.len(),
        d: domain.dim(),
    };
    let (lower, upper) = lay.bounds(model.norm_bound(), domain);
    let x_starts = start_points(domain, opts, &[x_u.to_vec()]);
    let starts: Vec<Vec<f64>> = x_starts.iter().map(|x| lay.start(model.mle_u(), x)).collect();
    let n = lay.n;
    let d = lay.d;
    let mut constraints = set_constraints(model, beta1, &lay);
    constraints.push(Box::new(move |w: &[f64], g: &mut [f64]| {
        let (u, rest) = w.split_at(n);
        let (v, x) = (rest[0], &rest[1..]);
        let (gu, grest) = g.split_at_mut(n);
        let (gv, gx) = grest.split_at_mut(1);
        let (z, dzdv) = model.latent_with_grad(x, u, v, gu, gx);
        gv[0] = dzdv;
        z
    }));
    let problem = NlpProblem {
        objective: Box::new(move |w: &[f64], g: &mut [f64]| {
            g[..=n].iter_mut().for_each(|e| *e = 0.0);
            post.bound_grad(&w[n + 1..], -1.0, &mut g[n + 1..])
        }),
        constraints,
        lower,
        upper,
        starts,
    };
    let sol = solve_nlp(&problem, &opts.nlp);
    if !sol.converged {
        return Ok(ConstrainedCandidate {
            x: x_u.to_vec(),
            z_star: z_u,
            unconstrained: false,
            fallback: true,
        });
    }
    let mut x = sol.argmin[n + 1..n + 1 + d].to_vec();
    domain.clamp(&mut x);
    let z_star = model.lower_at(&x, beta1)?;
    Ok(ConstrainedCandidate {
        x,
        z_star,
        unconstrained: false,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_update_examples() {
        let d = DualState::new(1.0, 0.02, 3.0, 0.1).unwrap();
        assert!((dual_update(&d, -0.5).lambda - 0.99).abs() < 1e-15);
        assert!((dual_update(&d, 2.0).lambda - 1.04).abs() < 1e-15);
        let z = DualState { lambda: 0.0, ..d };
        assert_eq!(dual_update(&z, -5.0).lambda, 0.0);
    }

    #[test]
    fn handover_is_strict() {
        assert!(handover_gate(&BeliefInterval::from_latent(-1.0, 1.0), 0.1));
        assert!(!handover_gate(&BeliefInterval::from_latent(0.0, 0.05), 0.1));
        assert!(!handover_gate(&BeliefInterval::from_latent(0.25, 0.5), 0.25));
    }

    #[test]
    fn dual_state_validation() {
        assert!(DualState::new(-1.0, 0.02, 3.0, 0.1).is_err());
        assert!(DualState::new(1.0, 0.02, 0.5, 0.1).is_err());
    }
}
