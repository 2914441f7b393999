//! Likelihood-ratio confidence set for the expert's latent belief function.
//!
//! Labels follow `P(reject at x) = S(g(x))` for an unknown `g` in an RKHS
//! ball of radius `B_g`. The confidence set keeps every `g` in the ball whose
//! log-likelihood is within `beta1` of the constrained maximum likelihood
//! estimate; its pointwise infimum and supremum give the belief interval.
//!
//! By the representer theorem every problem here is finite dimensional in
//! the function values at the labelled points (plus the query point). The
//! norm constraint `[Z; z]^T K^{-1} [Z; z] <= B_g^2` is handled in whitened
//! coordinates: with `K + jI = L L^T`, `Z = L u` and
//! `z = k_x^T (K + jI)^{-1} Z + sqrt(s_x) v` where `s_x` is the Schur
//! complement of the augmented Gram matrix, the quadratic form is exactly
//! `|u|^2 + v^2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CobolError, Result};
use crate::kernel::KernelConfig;
use crate::linalg::{backward_solve_t, dot, forward_solve, jittered_cholesky, lower_mul, lower_t_mul};
use crate::nlp::{solve_nlp, NlpOptions, NlpProblem};

/// Base diagonal jitter for the belief Gram matrix.
pub const GRAM_JITTER: f64 = 1e-8;
/// Upper limit for online doubling, relative to the initial bound.
pub const MAX_DOUBLINGS: u32 = 10;

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe `ln(1 + e^z)`.
#[inline]
pub fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Expert labels. `0` means accept, `1` means reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BeliefDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    /// Iteration at which each label arrived (0 for pre-training labels).
    stamps: Vec<usize>,
    /// Drop labels older than this many iterations; `None` keeps all.
    window: Option<usize>,
}

impl BeliefDataset {
    pub fn new(window: Option<usize>) -> Self {
        Self {
            window,
            ..Default::default()
        }
    }

    pub fn from_labels(points: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let mut ds = Self::new(None);
        if points.len() != labels.len() {
            return Err(CobolError::LengthMismatch {
                left: points.len(),
                right: labels.len(),
            });
        }
        for (p, l) in points.into_iter().zip(labels) {
            ds.push(p, l, 0)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: Vec<f64>, label: u8, stamp: usize) -> Result<()> {
        if label > 1 {
            return Err(CobolError::invalid("label", format!("must be 0 or 1, got {label}")));
        }
        self.points.push(x);
        self.labels.push(label);
        self.stamps.push(stamp);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    /// Labels still inside the window at iteration `now`.
    pub fn active(&self, now: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let keep = |s: usize| self.window.map_or(true, |w| now.saturating_sub(s) < w);
        self.points
            .iter()
            .zip(&self.labels)
            .zip(&self.stamps)
            .filter(|(_, s)| keep(**s))
            .map(|((p, l), _)| (p.clone(), *l))
            .unzip()
    }
}

/// Parameters of the confidence set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSetParams {
    /// RKHS norm bound `B_g`.
    pub norm_bound: f64,
    /// Log-likelihood slack `beta1`.
    pub beta1: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl ConfidenceSetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm_bound > 0.0) {
            return Err(CobolError::invalid("B_g", "must be positive"));
        }
        if !(self.beta1 >= 0.0) {
            return Err(CobolError::invalid("beta1", "must be non-negative"));
        }
        if !(self.epsilon > 0.0) {
            return Err(CobolError::invalid("epsilon", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CobolError::invalid("delta", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// How the runtime radius `beta1` is derived. The covering number is
/// replaced by `log_cover_proxy` in the lemma form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// `alpha1 * B_g / base_norm_bound`: a tuned scalar that grows with the
    /// norm bound.
    Scaled,
    /// `alpha1 * sqrt(32 q B_g^2 (ln(pi^2 t^2 / (6 delta)) + log_cover_proxy)) + 2 eps t`.
    Lemma,
}

/// Runtime radius of the likelihood-ratio set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRule {
    pub mode: RadiusMode,
    pub alpha1: f64,
    pub base_norm_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub log_cover_proxy: f64,
}

impl RadiusRule {
    pub fn radius(&self, q: usize, t: usize, norm_bound: f64) -> Result<f64> {
        match self.mode {
            RadiusMode::Scaled => {
                if !(self.base_norm_bound > 0.0) {
                    return Err(CobolError::invalid("base_norm_bound", "must be positive"));
                }
                Ok(self.alpha1 * norm_bound / self.base_norm_bound)
            }
            RadiusMode::Lemma => self.doubling_slack(q, t, norm_bound),
        }
    }

    /// Slack of the norm-bound detection test; always the lemma form.
    pub fn doubling_slack(&self, q: usize, t: usize, norm_bound: f64) -> Result<f64> {
        let radical = beta1(0.0, self.delta, q, t.max(1), norm_bound, self.log_cover_proxy)?;
        Ok(self.alpha1 * radical + 2.0 * self.epsilon * t.max(1) as f64)
    }

    pub fn params(&self, q: usize, t: usize, norm_bound: f64) -> Result<ConfidenceSetParams> {
        Ok(ConfidenceSetParams {
            norm_bound,
            beta1: self.radius(q, t, norm_bound)?,
            epsilon: self.epsilon,
            delta: self.delta,
        })
    }
}

/// Pointwise belief interval on the latent and probability scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefInterval {
    pub lower: f64,
    pub upper: f64,
    pub prob_lower: f64,
    pub prob_upper: f64,
}

impl BeliefInterval {
    pub fn from_latent(lower: f64, upper: f64) -> Self {
        let (lower, upper) = if lower <= upper { (lower, upper) } else { (upper, lower) };
        Self {
            lower,
            upper,
            prob_lower: sigmoid(lower),
            prob_upper: sigmoid(upper),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `sum z_i l_i - sum ln(1 + e^{z_i})`.
pub fn log_likelihood(z: &[f64], labels: &[u8]) -> Result<f64> {
    if z.len() != labels.len() {
        return Err(CobolError::LengthMismatch {
            left: z.len(),
            right: labels.len(),
        });
    }
    Ok(ll_unchecked(z, labels))
}

#[inline]
fn ll_unchecked(z: &[f64], labels: &[u8]) -> f64 {
    z.iter()
        .zip(labels)
        .map(|(zi, li)| zi * *li as f64 - log1p_exp(*zi))
        .sum()
}

/// Confidence radius `sqrt(32 q B_g^2 ln(pi^2 t^2 N / (6 delta))) + 2 eps t`
/// with `ln N` supplied as `log_cover_proxy`.
pub fn beta1(epsilon: f64, delta: f64, q: usize, t: usize, b_g: f64, log_cover_proxy: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CobolError::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if t < 1 {
        return Err(CobolError::invalid("t", "must be at least 1"));
    }
    if !(b_g > 0.0) {
        return Err(CobolError::invalid("B_g", "must be positive"));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let log_term = (pi2 * (t * t) as f64 / (6.0 * delta)).ln() + log_cover_proxy;
    let radical = (32.0 * q as f64 * b_g * b_g * log_term.max(0.0)).sqrt();
    Ok(radical + 2.0 * epsilon * t as f64)
}

/// Result of the constrained maximum likelihood problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MleSolution {
    pub z: Vec<f64>,
    pub ll: f64,
}

/// Fitted belief model: factorised Gram matrix of the labelled points plus
/// the constrained MLE for a given norm bound.
#[derive(Debug, Clone)]
pub struct BeliefModel {
    kernel: KernelConfig,
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    chol_l: DMatrix<f64>,
    jitter: f64,
    norm_bound: f64,
    mle_u: Vec<f64>,
    mle_z: Vec<f64>,
    ll_mle: f64,
    opts: NlpOptions,
}

impl BeliefModel {
    /// Factorises the Gram matrix and solves the MLE problem.
    pub fn fit(kernel: &KernelConfig, points: &[Vec<f64>], labels: &[u8], norm_bound: f64) -> Result<Self> {
        Self::fit_with(kernel, points, labels, norm_bound, NlpOptions::default())
    }

    pub fn fit_with(
        kernel: &KernelConfig,
        points: &[Vec<f64>],
        labels: &[u8],
        norm_bound: f64,
        opts: NlpOptions,
    ) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(CobolError::LengthMismatch {
                left: points.len(),
                right: labels.len(),
            });
        }
        if !(norm_bound > 0.0) {
            return Err(CobolError::invalid("B_g", "must be positive"));
        }
        for p in points {
            kernel.check_dim(p)?;
        }
        let n = points.len();
        let (chol_l, jitter) = if n == 0 {
            (DMatrix::zeros(0, 0), GRAM_JITTER)
        } else {
            let (c, j) = jittered_cholesky(&kernel.gram(points), GRAM_JITTER)?;
            (c.l(), j)
        };
        let mut model = Self {
            kernel: kernel.clone(),
            points: points.to_vec(),
            labels: labels.to_vec(),
            chol_l,
            jitter,
            norm_bound,
            mle_u: vec![0.0; n],
            mle_z: vec![0.0; n],
            ll_mle: 0.0,
            opts,
        };
        if n > 0 {
            model.solve_mle()?;
        }
        Ok(model)
    }

    fn z_from_u(&self, u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; u.len()];
        lower_mul(&self.chol_l, u, &mut z);
        z
    }

    fn solve_mle(&mut self) -> Result<()> {
        let n = self.points.len();
        let b = self.norm_bound;
        let l = &self.chol_l;
        let labels = &self.labels;
        let problem = NlpProblem {
            objective: Box::new(move |u: &[f64], g: &mut [f64]| {
                let mut z = vec![0.0; n];
                lower_mul(l, u, &mut z);
                let ll = ll_unchecked(&z, labels);
                let dz: Vec<f64> = z.iter().zip(labels).map(|(zi, li)| sigmoid(*zi) - *li as f64).collect();
                lower_t_mul(l, &dz, g);
                -ll
            }),
            constraints: vec![Box::new(move |u: &[f64], g: &mut [f64]| {
                for (gi, ui) in g.iter_mut().zip(u) {
                    *gi = 2.0 * ui;
                }
                dot(u, u) - b * b
            })],
            lower: vec![-b; n],
            upper: vec![b; n],
            starts: vec![vec![0.0; n]],
        };
        let sol = solve_nlp(&problem, &self.opts);
        // A feasible iterate of this concave problem is accepted when the
        // inner solver stalls on a flat likelihood.
        if !sol.converged && sol.max_violation > self.opts.feas_tol {
            return Err(CobolError::SolverFailure {
                message: "maximum likelihood problem".into(),
                best_value: -sol.value,
                max_violation: sol.max_violation,
                best_point: self.z_from_u(&sol.argmin),
            });
        }
        // Keep the iterate inside the ball exactly.
        let mut u = sol.argmin;
        let norm = dot(&u, &u).sqrt();
        if norm > b {
            u.iter_mut().for_each(|v| *v *= b / norm);
        }
        self.mle_z = self.z_from_u(&u);
        self.ll_mle = ll_unchecked(&self.mle_z, &self.labels);
        self.mle_u = u;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn mle(&self) -> MleSolution {
        MleSolution {
            z: self.mle_z.clone(),
            ll: self.ll_mle,
        }
    }

    pub fn ll_mle(&self) -> f64 {
        self.ll_mle
    }

    pub(crate) fn mle_u(&self) -> &[f64] {
        &self.mle_u
    }

    /// Log-likelihood of `Z = L u` and its gradient in `u`.
    pub(crate) fn whitened_ll_grad(&self, u: &[f64], grad_u: &mut [f64]) -> f64 {
        let z = self.z_from_u(u);
        let dz: Vec<f64> = z
            .iter()
            .zip(&self.labels)
            .map(|(zi, li)| *li as f64 - sigmoid(*zi))
            .collect();
        lower_t_mul(&self.chol_l, &dz, grad_u);
        ll_unchecked(&z, &self.labels)
    }

    /// MLE extended to `x` (minimum-norm interpolant of the MLE values).
    pub fn mle_prediction(&self, x: &[f64]) -> f64 {
        let n = self.points.len();
        if n == 0 {
            return 0.0;
        }
        let mut a = self.kernel.cross(&self.points, x);
        forward_solve(&self.chol_l, &mut a);
        dot(&a, &self.mle_u)
    }

    /// Schur complement `k(x,x) + j - k_x^T (K + jI)^{-1} k_x` and the
    /// whitened cross-covariance `L^{-1} k_x`.
    fn whitened_cross(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut l = self.kernel.cross(&self.points, x);
        forward_solve(&self.chol_l, &mut l);
        let s = (self.kernel.diag() + self.jitter - dot(&l, &l)).max(1e-14);
        (l, s)
    }

    /// Latent value `z(u, v, x)` with gradients in `u`, `v` and `x`.
    ///
    /// `grad_u` receives `L^{-1} k_x`; the returned tuple is `(z, dz/dv)`.
    pub(crate) fn latent_with_grad(&self, x: &[f64], u: &[f64], v: f64, grad_u: &mut [f64], grad_x: &mut [f64]) -> (f64, f64) {
        let n = self.points.len();
        let d = x.len();
        let mut kx = vec![0.0; n];
        let mut dk = vec![0.0; n * d];
        for (i, p) in self.points.iter().enumerate() {
            kx[i] = self.kernel.k_grad_x(x, p, &mut dk[i * d..(i + 1) * d]);
        }
        let mut l = kx;
        forward_solve(&self.chol_l, &mut l);
        let s_raw = self.kernel.diag() + self.jitter - dot(&l, &l);
        let s = s_raw.max(1e-14);
        let sqrt_s = s.sqrt();
        let z = dot(&l, u) + sqrt_s * v;
        grad_u.copy_from_slice(&l);
        // a = (K + jI)^{-1} k_x, w = L^{-T} u
        let mut a = l;
        backward_solve_t(&self.chol_l, &mut a);
        let mut w = u.to_vec();
        backward_solve_t(&self.chol_l, &mut w);
        let s_active = s_raw > 1e-14;
        for j in 0..d {
            let mut gw = 0.0;
            let mut gs = 0.0;
            for i in 0..n {
                gw += w[i] * dk[i * d + j];
                gs -= 2.0 * a[i] * dk[i * d + j];
            }
            grad_x[j] = gw + if s_active { v * gs / (2.0 * sqrt_s) } else { 0.0 };
        }
        (z, sqrt_s)
    }

    /// Extreme latent value at `x` over the confidence set: the infimum for
    /// `sign = 1`, the supremum for `sign = -1` (returned as a plain value).
    fn extreme(&self, x: &[f64], beta1: f64, sign: f64) -> Result<f64> {
        let n = self.points.len();
        let b = self.norm_bound;
        let (l, s) = self.whitened_cross(x);
        let sqrt_s = s.sqrt();
        if n == 0 {
            return Ok(-sign * b * sqrt_s);
        }
        let floor = self.ll_mle - beta1;
        let lx = l.clone();
        let problem = NlpProblem {
            objective: Box::new(move |uv: &[f64], g: &mut [f64]| {
                g[..n].iter_mut().zip(&lx).for_each(|(gi, li)| *gi = sign * li);
                g[n] = sign * sqrt_s;
                sign * (dot(&lx, &uv[..n]) + sqrt_s * uv[n])
            }),
            constraints: vec![
                Box::new(move |uv: &[f64], g: &mut [f64]| {
                    for (gi, ui) in g.iter_mut().zip(uv) {
                        *gi = 2.0 * ui;
                    }
                    dot(uv, uv) - b * b
                }),
                Box::new(move |uv: &[f64], g: &mut [f64]| {
                    let ll = self.whitened_ll_grad(&uv[..n], &mut g[..n]);
                    g[..n].iter_mut().for_each(|e| *e = -*e);
                    g[n] = 0.0;
                    floor - ll
                }),
            ],
            lower: vec![-b; n + 1],
            upper: vec![b; n + 1],
            starts: vec![self.mle_u.iter().copied().chain(std::iter::once(0.0)).collect()],
        };
        let sol = solve_nlp(&problem, &self.opts);
        if !sol.converged && sol.max_violation > self.opts.feas_tol {
            return Err(CobolError::SolverFailure {
                message: "belief interval problem".into(),
                best_value: sign * sol.value,
                max_violation: sol.max_violation,
                best_point: sol.argmin,
            });
        }
        let z = sign * sol.value;
        // The reproducing-kernel bound always holds.
        let cap = b * (self.kernel.diag() + self.jitter).sqrt();
        Ok(z.clamp(-cap, cap))
    }

    /// Lower end of the belief interval at `x`.
    pub fn lower_at(&self, x: &[f64], beta1: f64) -> Result<f64> {
        self.kernel.check_dim(x)?;
        self.extreme(x, beta1, 1.0)
    }

    /// Upper end of the belief interval at `x`.
    pub fn upper_at(&self, x: &[f64], beta1: f64) -> Result<f64> {
        self.kernel.check_dim(x)?;
        self.extreme(x, beta1, -1.0)
    }

    pub fn interval(&self, x: &[f64], beta1: f64) -> Result<BeliefInterval> {
        let lo = self.lower_at(x, beta1)?;
        let hi = self.upper_at(x, beta1)?;
        Ok(BeliefInterval::from_latent(lo, hi.max(lo)))
    }
}

/// Constrained maximum likelihood estimate of the latent values at the
/// labelled points.
pub fn solve_mle(ds: &BeliefDataset, b_g: f64, cfg: &KernelConfig) -> Result<MleSolution> {
    if ds.is_empty() {
        return Ok(MleSolution { z: Vec::new(), ll: 0.0 });
    }
    Ok(BeliefModel::fit(cfg, ds.points(), ds.labels(), b_g)?.mle())
}

/// Pointwise belief interval at `x`.
///
/// `ll_mle` must come from [`solve_mle`] on the same dataset; the MLE point is
/// re-derived internally to seed the solver and the supplied value is used
/// as the likelihood floor reference.
pub fn g_interval(
    x: &[f64],
    ds: &BeliefDataset,
    params: &ConfidenceSetParams,
    cfg: &KernelConfig,
    ll_mle: f64,
) -> Result<BeliefInterval> {
    params.validate()?;
    let mut model = BeliefModel::fit(cfg, ds.points(), ds.labels(), params.norm_bound)?;
    if !ds.is_empty() {
        if ll_mle > model.ll_mle + 1e-6 {
            return Err(CobolError::invalid("ll_mle", "exceeds the attainable likelihood"));
        }
        model.ll_mle = ll_mle.min(model.ll_mle);
    }
    model.interval(x, params.beta1)
}

/// Online norm-bound estimation: doubles `b_hat` while the likelihood gain
/// from the doubled ball exceeds the doubled ball's slack, capped at
/// `2^10 * b_hat`.
pub fn maybe_double_norm_bound(
    ds: &BeliefDataset,
    b_hat: f64,
    rule: &RadiusRule,
    cfg: &KernelConfig,
    t: usize,
) -> Result<f64> {
    if !(b_hat > 0.0) {
        return Err(CobolError::invalid("B_hat", "must be positive"));
    }
    if ds.is_empty() {
        return Ok(b_hat);
    }
    let cap = b_hat * 2f64.powi(MAX_DOUBLINGS as i32);
    let mut b = b_hat;
    let mut current = solve_mle(ds, b, cfg)?.ll;
    while b * 2.0 <= cap * (1.0 + 1e-12) {
        let doubled = solve_mle(ds, 2.0 * b, cfg)?.ll;
        let slack = rule.doubling_slack(ds.len(), t, 2.0 * b)?;
        if current < doubled - slack {
            b *= 2.0;
            current = doubled;
        } else {
            break;
        }
    }
    Ok(b)
}
