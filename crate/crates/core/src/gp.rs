//! Exact zero-mean GP regression for the objective surrogate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CobolError, Result};
use crate::kernel::KernelConfig;
use crate::linalg::{backward_solve_t, dot, forward_solve, jittered_cholesky};

/// Queried objective points and their noisy observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ObjectiveDataset {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Observation noise level.
    pub noise_sigma: f64,
    /// Regulariser added to the Gram diagonal.
    pub regularizer: f64,
}

impl ObjectiveDataset {
    pub fn new(noise_sigma: f64, regularizer: f64) -> Self {
        Self {
            points: Vec::new(),
            values: Vec::new(),
            noise_sigma,
            regularizer,
        }
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        self.points.push(x);
        self.values.push(y);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.values.len() {
            return Err(CobolError::LengthMismatch {
                left: self.points.len(),
                right: self.values.len(),
            });
        }
        if !(self.regularizer > 0.0) {
            return Err(CobolError::invalid("regularizer", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(CobolError::invalid("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    /// Values shifted to zero mean and scaled to unit variance.
    ///
    /// Returns `(standardized, mean, std)`; the std falls back to 1 for
    /// fewer than two points or constant data.
    pub fn standardized(&self) -> (Vec<f64>, f64, f64) {
        let n = self.values.len();
        if n == 0 {
            return (Vec::new(), 0.0, 1.0);
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        (self.values.iter().map(|v| (v - mean) / std).collect(), mean, std)
    }
}

/// Tolerance below zero at which a computed variance is treated as a
/// numerical failure instead of rounding noise.
const NEGATIVE_VARIANCE_TOL: f64 = -1e-12;

/// Posterior of a zero-mean GP conditioned on a dataset, with the
/// confidence multiplier used for the LCB/UCB.
///
/// Immutable after construction; refits build new instances.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelConfig,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    regularizer: f64,
    jitter: f64,
    chol_l: DMatrix<f64>,
    alpha: Vec<f64>,
    beta: f64,
    bound_b_f: f64,
}

impl GpPosterior {
    /// Factorises `K + r I` for the given points and (already transformed)
    /// targets.
    pub fn fit(kernel: KernelConfig, points: &[Vec<f64>], values: &[f64], regularizer: f64) -> Result<Self> {
        if points.len() != values.len() {
            return Err(CobolError::LengthMismatch {
                left: points.len(),
                right: values.len(),
            });
        }
        if !(regularizer > 0.0) {
            return Err(CobolError::invalid("regularizer", "must be positive"));
        }
        for p in points {
            kernel.check_dim(p)?;
        }
        let mut gram = kernel.gram(points);
        for i in 0..points.len() {
            gram[(i, i)] += regularizer;
        }
        let (chol, jitter) = jittered_cholesky(&gram, 0.0)?;
        let chol_l = chol.l();
        let mut alpha = values.to_vec();
        forward_solve(&chol_l, &mut alpha);
        backward_solve_t(&chol_l, &mut alpha);
        Ok(Self {
            kernel,
            points: points.to_vec(),
            values: values.to_vec(),
            regularizer,
            jitter,
            chol_l,
            alpha,
            beta: 1.0,
            bound_b_f: 1.0,
        })
    }

    pub fn with_beta(mut self, beta: f64, bound_b_f: f64) -> Self {
        self.beta = beta;
        self.bound_b_f = bound_b_f;
        self
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn bound_b_f(&self) -> f64 {
        self.bound_b_f
    }

    pub fn regularizer(&self) -> f64 {
        self.regularizer
    }

    /// Extra diagonal jitter the factorisation needed beyond `r`.
    pub fn jitter(&self) -> f64 {
        self.jitter
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.kernel.check_dim(x)?;
        let mut kx = self.kernel.cross(&self.points, x);
        let mean = dot(&kx, &self.alpha);
        forward_solve(&self.chol_l, &mut kx);
        let var = self.kernel.diag() - dot(&kx, &kx);
        if var < NEGATIVE_VARIANCE_TOL {
            return Err(CobolError::Numerical(format!("posterior variance {var:e} is negative")));
        }
        Ok((mean, var.max(0.0)))
    }

    /// Mean and standard deviation with their gradients; variance clamped at 0.
    pub fn mean_std_grad(&self, x: &[f64], grad_mean: &mut [f64], grad_std: &mut [f64]) -> (f64, f64) {
        let d = x.len();
        let n = self.points.len();
        let mut kx = vec![0.0; n];
        let mut dk = vec![0.0; n * d];
        for (i, p) in self.points.iter().enumerate() {
            kx[i] = self.kernel.k_grad_x(x, p, &mut dk[i * d..(i + 1) * d]);
        }
        let mean = dot(&kx, &self.alpha);
        // b = (K + rI)^{-1} k
        let mut b = kx.clone();
        forward_solve(&self.chol_l, &mut b);
        let quad = dot(&b, &b);
        backward_solve_t(&self.chol_l, &mut b);
        let var = (self.kernel.diag() - quad).max(0.0);
        let std = var.sqrt();
        for j in 0..d {
            let mut gm = 0.0;
            let mut gv = 0.0;
            for i in 0..n {
                gm += self.alpha[i] * dk[i * d + j];
                gv -= 2.0 * b[i] * dk[i * d + j];
            }
            grad_mean[j] = gm;
            grad_std[j] = if std > 1e-10 { gv / (2.0 * std) } else { 0.0 };
        }
        (mean, std)
    }

    pub fn mean_std(&self, x: &[f64]) -> (f64, f64) {
        let mut kx = self.kernel.cross(&self.points, x);
        let mean = dot(&kx, &self.alpha);
        forward_solve(&self.chol_l, &mut kx);
        let var = (self.kernel.diag() - dot(&kx, &kx)).max(0.0);
        (mean, var.sqrt())
    }

    /// Lower confidence bound `mu - beta * sigma`.
    pub fn lcb(&self, x: &[f64]) -> f64 {
        let (m, s) = self.mean_std(x);
        m - self.beta * s
    }

    /// Upper confidence bound `mu + beta * sigma`.
    pub fn ucb(&self, x: &[f64]) -> f64 {
        let (m, s) = self.mean_std(x);
        m + self.beta * s
    }

    /// `mu + sign * beta * sigma` and its gradient.
    pub fn bound_grad(&self, x: &[f64], sign: f64, grad: &mut [f64]) -> f64 {
        let d = x.len();
        let mut gm = vec![0.0; d];
        let mut gs = vec![0.0; d];
        let (m, s) = self.mean_std_grad(x, &mut gm, &mut gs);
        for j in 0..d {
            grad[j] = gm[j] + sign * self.beta * gs[j];
        }
        m + sign * self.beta * s
    }
}

/// Confidence multiplier `B_f + sigma * sqrt(2 (gamma_prev + 1 + ln(2/delta)))`.
pub fn beta_f(b_f: f64, sigma: f64, gamma_prev: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CobolError::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(b_f > 0.0) {
        return Err(CobolError::invalid("B_f", "must be positive"));
    }
    if !(sigma >= 0.0) || !(gamma_prev >= 0.0) {
        return Err(CobolError::invalid("sigma/gamma", "must be non-negative"));
    }
    Ok(b_f + sigma * (2.0 * (gamma_prev + 1.0 + (2.0 / delta).ln())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1() -> KernelConfig {
        KernelConfig::isotropic(1, 0.2).unwrap()
    }

    #[test]
    fn empty_dataset_returns_prior() {
        let gp = GpPosterior::fit(k1(), &[], &[], 1e-4).unwrap();
        assert_eq!(gp.predict(&[0.3]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn single_observation_by_hand() {
        let r = 1e-4;
        let y0 = 2.5;
        let gp = GpPosterior::fit(k1(), &[vec![0.4]], &[y0], r).unwrap();
        let (m, v) = gp.predict(&[0.4]).unwrap();
        assert!((m - y0 / (1.0 + r)).abs() < 1e-12);
        assert!((v - (1.0 - 1.0 / (1.0 + r))).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let gp = GpPosterior::fit(k1(), &[vec![0.4]], &[1.0], 1e-4).unwrap();
        assert!(gp.predict(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let k = KernelConfig::new(vec![0.3, 0.5], 1.0).unwrap();
        let pts = vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.5, 0.9]];
        let gp = GpPosterior::fit(k, &pts, &[1.0, -0.5, 0.3], 1e-4).unwrap().with_beta(1.7, 1.0);
        let x = [0.35, 0.55];
        let mut g = [0.0; 2];
        gp.bound_grad(&x, -1.0, &mut g);
        for j in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (gp.lcb(&xp) - gp.lcb(&xm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
        }
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_f(1.0, 0.0, 123.0, 0.01).unwrap(), 1.0);
        let delta = 2.0 / std::f64::consts::E;
        assert!((beta_f(1.0, 1.0, 0.0, delta).unwrap() - 3.0).abs() < 1e-12);
        assert!(beta_f(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(beta_f(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn standardization_handles_degenerate_data() {
        let mut ds = ObjectiveDataset::new(1e-4, 1e-4);
        ds.push(vec![0.0], 3.0);
        let (z, m, s) = ds.standardized();
        assert_eq!((z[0], m, s), (0.0, 3.0, 1.0));
        ds.push(vec![1.0], 5.0);
        let (z, _, _) = ds.standardized();
        assert!((z[0] + z[1]).abs() < 1e-12);
    }
}
