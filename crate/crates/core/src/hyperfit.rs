//! Lengthscale fitting by maximising the GP log marginal likelihood.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gp::ObjectiveDataset;
use crate::kernel::KernelConfig;
use crate::linalg::jittered_cholesky;
use crate::nlp::lbfgs::{minimize_box, LbfgsOptions};

pub const MIN_LENGTHSCALE: f64 = 1e-3;
pub const MAX_LENGTHSCALE: f64 = 1e3;
pub const DEFAULT_RESTARTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub kernel: KernelConfig,
    /// Negative log marginal likelihood at the returned kernel.
    pub nll: f64,
    /// Negative log marginal likelihood at the initial kernel.
    pub initial_nll: f64,
    /// Set when the data cannot identify lengthscales (all inputs identical).
    pub degenerate: bool,
}

/// Negative log marginal likelihood of `values` under a zero-mean GP with
/// kernel `cfg` and diagonal regulariser `r`, plus its gradient with respect
/// to the log-lengthscales.
pub fn neg_log_marginal_likelihood(
    cfg: &KernelConfig,
    points: &[Vec<f64>],
    values: &[f64],
    r: f64,
    grad_log_ls: Option<&mut [f64]>,
) -> f64 {
    let n = points.len();
    if n == 0 {
        if let Some(g) = grad_log_ls {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        return 0.0;
    }
    let mut gram = cfg.gram(points);
    let kernel_only = gram.clone();
    for i in 0..n {
        gram[(i, i)] += r;
    }
    let Ok((chol, _)) = jittered_cholesky(&gram, 0.0) else {
        return f64::INFINITY;
    };
    let y = nalgebra::DVector::from_column_slice(values);
    let alpha = chol.solve(&y);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
    let nll = 0.5 * y.dot(&alpha) + logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if let Some(g) = grad_log_ls {
        let kinv = chol.inverse();
        let d = cfg.dim();
        let ls = cfg.lengthscales();
        for (j, gj) in g.iter_mut().enumerate().take(d) {
            // dK/dlog(l_j) = K o (dx_j^2 / l_j^2); dNLL = 0.5 tr((K^-1 - aa^T) dK)
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    let diff = points[a][j] - points[b][j];
                    let dk = kernel_only[(a, b)] * diff * diff / (ls[j] * ls[j]);
                    acc += (kinv[(a, b)] - alpha[a] * alpha[b]) * dk;
                }
            }
            *gj = 0.5 * acc;
        }
    }
    nll
}

/// Multi-start gradient-based maximisation of the marginal likelihood over
/// the lengthscales (output scale held fixed).
///
/// Starts from `cfg0` and `restarts` additional log-uniform draws; the
/// returned NLL is never above the NLL at `cfg0`.
pub fn fit_kernel_hyperparams(ds: &ObjectiveDataset, cfg0: &KernelConfig, restarts: usize, seed: u64) -> FitOutcome {
    let (values, _, _) = ds.standardized();
    let r = ds.regularizer;
    let initial_nll = neg_log_marginal_likelihood(cfg0, &ds.points, &values, r, None);
    let unchanged = |degenerate| FitOutcome {
        kernel: cfg0.clone(),
        nll: initial_nll,
        initial_nll,
        degenerate,
    };
    if ds.len() < 2 {
        return unchanged(false);
    }
    let first = &ds.points[0];
    if ds.points.iter().all(|p| p == first) {
        log::warn!("all inputs identical; keeping initial kernel hyperparameters");
        return unchanged(true);
    }

    let d = cfg0.dim();
    let lo = vec![MIN_LENGTHSCALE.ln(); d];
    let hi = vec![MAX_LENGTHSCALE.ln(); d];
    let objective = |theta: &[f64], g: &mut [f64]| {
        let cfg = cfg0.with_lengthscales(theta.iter().map(|t| t.exp()).collect());
        let v = neg_log_marginal_likelihood(&cfg, &ds.points, &values, r, Some(g));
        if v.is_finite() {
            v
        } else {
            g.iter_mut().for_each(|x| *x = 0.0);
            f64::INFINITY
        }
    };
    let opts = LbfgsOptions {
        memory: 10,
        max_iter: 200,
        pg_tol: 1e-5,
        f_tol: 1e-10,
    };

    let mut starts: Vec<Vec<f64>> = vec![cfg0
        .lengthscales()
        .iter()
        .map(|l| l.clamp(MIN_LENGTHSCALE, MAX_LENGTHSCALE).ln())
        .collect()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Log-uniform over [0.01, 10] in unit-cube coordinates.
    for _ in 0..restarts {
        starts.push((0..d).map(|_| rng.random_range((0.01f64).ln()..(10f64).ln())).collect());
    }

    let mut best = (cfg0.clone(), initial_nll);
    for s in &starts {
        let res = minimize_box(objective, s, &lo, &hi, &opts);
        if res.value.is_finite() && res.value < best.1 {
            best = (cfg0.with_lengthscales(res.x.iter().map(|t| t.exp()).collect()), res.value);
        }
    }
    FitOutcome {
        kernel: best.0,
        nll: best.1,
        initial_nll,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_datasets_keep_initial_config() {
        let cfg0 = KernelConfig::isotropic(1, 0.5).unwrap();
        let mut ds = ObjectiveDataset::new(1e-4, 1e-4);
        assert_eq!(fit_kernel_hyperparams(&ds, &cfg0, 4, 0).kernel, cfg0);
        ds.push(vec![0.3], 1.0);
        assert_eq!(fit_kernel_hyperparams(&ds, &cfg0, 4, 0).kernel, cfg0);
    }

    #[test]
    fn identical_inputs_flag_degenerate() {
        let cfg0 = KernelConfig::isotropic(1, 0.5).unwrap();
        let mut ds = ObjectiveDataset::new(1e-4, 1e-4);
        ds.push(vec![0.3], 1.0);
        ds.push(vec![0.3], 2.0);
        let out = fit_kernel_hyperparams(&ds, &cfg0, 4, 0);
        assert!(out.degenerate);
        assert_eq!(out.kernel, cfg0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = KernelConfig::new(vec![0.3, 0.6], 1.0).unwrap();
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3], vec![0.4, 0.5]];
        let ys = vec![0.3, -1.0, 0.8, 0.1];
        let mut g = vec![0.0; 2];
        neg_log_marginal_likelihood(&cfg, &pts, &ys, 1e-3, Some(&mut g));
        for j in 0..2 {
            let h: f64 = 1e-6;
            let mut lp = cfg.lengthscales().to_vec();
            let mut lm = lp.clone();
            lp[j] *= h.exp();
            lm[j] *= (-h).exp();
            let fp = neg_log_marginal_likelihood(&cfg.with_lengthscales(lp), &pts, &ys, 1e-3, None);
            let fm = neg_log_marginal_likelihood(&cfg.with_lengthscales(lm), &pts, &ys, 1e-3, None);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", g[j]);
        }
    }

    #[test]
    fn zero_restarts_refines_locally() {
        let cfg0 = KernelConfig::isotropic(1, 0.05).unwrap();
        let mut ds = ObjectiveDataset::new(1e-4, 1e-4);
        for i in 0..8 {
            let x = i as f64 / 7.0;
            ds.push(vec![x], (3.0 * x).sin());
        }
        let out = fit_kernel_hyperparams(&ds, &cfg0, 0, 1);
        assert!(out.nll <= out.initial_nll);
        assert!(out.kernel.lengthscales()[0] > 0.05);
    }
}
