//! Run configuration with the hyperparameter keys of the method.

use serde::{Deserialize, Serialize};

use crate::belief::RadiusMode;
use crate::error::{CobolError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CobolConfig {
    /// Number of optimisation steps `T`.
    pub horizon: usize,
    /// Uniform objective evaluations before the loop.
    pub n_init_points: usize,
    /// Uniform expert labels before the loop (expert-using methods only).
    pub n_init_labels: usize,
    /// GP regulariser `r`.
    pub r: f64,
    /// Noise scale in the GP confidence multiplier; `None` means `r`.
    pub sigma: Option<f64>,
    pub delta: f64,
    pub b_f: f64,
    pub lambda0: f64,
    /// Dual step size.
    #[serde(alias = "xi")]
    pub zeta: f64,
    /// Initial RKHS norm bound for the belief function.
    pub b_g: f64,
    /// Scale of the likelihood-ratio radius.
    pub alpha1: f64,
    pub radius_rule: RadiusMode,
    pub eta: f64,
    /// Handover threshold on the latent interval width.
    pub g_thr: f64,
    /// Covering resolution; `None` means `1 / horizon`.
    pub epsilon: Option<f64>,
    pub log_cover_proxy: f64,
    pub gp_restarts: usize,
    pub acq_starts: usize,
    pub info_gain_grid: usize,
    pub initial_lengthscale: f64,
    pub output_scale: f64,
    pub fit_hyperparameters: bool,
    pub norm_bound_doubling: bool,
    pub label_window: Option<usize>,
}

impl Default for CobolConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            n_init_points: 3,
            n_init_labels: 10,
            r: 1e-4,
            sigma: None,
            delta: 0.01,
            b_f: 1.0,
            lambda0: 1.0,
            zeta: 0.02,
            b_g: 1.0,
            alpha1: 0.01,
            radius_rule: RadiusMode::Scaled,
            eta: 3.0,
            g_thr: 0.1,
            epsilon: None,
            log_cover_proxy: 0.0,
            gp_restarts: 4,
            acq_starts: 8,
            info_gain_grid: 256,
            initial_lengthscale: 0.3,
            output_scale: 1.0,
            fit_hyperparameters: true,
            norm_bound_doubling: true,
            label_window: None,
        }
    }
}

fn check(ok: bool, name: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CobolError::invalid(name, reason))
    }
}

impl CobolConfig {
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.r)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(1.0 / self.horizon.max(1) as f64)
    }

    /// Field-level validation.
    pub fn validate(&self) -> Result<()> {
        check(self.horizon >= 1, "horizon", "must be at least 1")?;
        check(self.r > 0.0, "r", "must be positive")?;
        check(self.sigma.map_or(true, |s| s >= 0.0), "sigma", "must be non-negative")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0, 1)")?;
        check(self.b_f > 0.0, "b_f", "must be positive")?;
        check(self.lambda0 >= 0.0, "lambda0", "must be non-negative")?;
        check(self.zeta > 0.0, "zeta", "must be positive")?;
        check(self.b_g > 0.0, "b_g", "must be positive")?;
        check(self.alpha1 >= 0.0, "alpha1", "must be non-negative")?;
        check(self.eta >= 1.0, "eta", "must be at least 1")?;
        check(self.g_thr > 0.0, "g_thr", "must be positive")?;
        check(self.epsilon.map_or(true, |e| e > 0.0), "epsilon", "must be positive")?;
        check(self.log_cover_proxy.is_finite(), "log_cover_proxy", "must be finite")?;
        check(self.acq_starts >= 1, "acq_starts", "must be at least 1")?;
        check(self.info_gain_grid >= 1, "info_gain_grid", "must be at least 1")?;
        check(self.initial_lengthscale > 0.0, "initial_lengthscale", "must be positive")?;
        check(
            self.output_scale > 0.0 && self.output_scale <= 1.0,
            "output_scale",
            "must lie in (0, 1]",
        )?;
        check(self.label_window.map_or(true, |w| w >= 1), "label_window", "must be at least 1")?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
