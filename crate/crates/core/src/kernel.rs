//! Stationary kernels. Only the ARD squared-exponential family is provided.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CobolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    ArdRbf,
}

/// ARD-RBF kernel `s * exp(-0.5 * sum_i ((x_i - y_i) / l_i)^2)`.
///
/// The output scale is restricted to `(0, 1]` so that `k(x, x') <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    lengthscales: Vec<f64>,
    output_scale: f64,
    #[serde(default)]
    family: KernelFamily,
}

impl KernelConfig {
    pub fn new(lengthscales: Vec<f64>, output_scale: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(CobolError::invalid("lengthscales", "at least one dimension required"));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(CobolError::invalid("lengthscales", format!("must be positive, got {l}")));
        }
        if !(output_scale > 0.0 && output_scale <= 1.0) {
            return Err(CobolError::invalid(
                "output_scale",
                format!("must lie in (0, 1], got {output_scale}"),
            ));
        }
        Ok(Self {
            lengthscales,
            output_scale,
            family: KernelFamily::ArdRbf,
        })
    }

    /// Isotropic unit-scale kernel.
    pub fn isotropic(dim: usize, lengthscale: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], 1.0)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.k(x, y))
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CobolError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Unchecked evaluation; callers guarantee matching dimensions.
    #[inline]
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((a, b), l) in x.iter().zip(y).zip(&self.lengthscales) {
            let d = (a - b) / l;
            s += d * d;
        }
        self.output_scale * (-0.5 * s).exp()
    }

    /// `k(x, x)`, constant for a stationary kernel.
    #[inline]
    pub fn diag(&self) -> f64 {
        self.output_scale
    }

    /// Kernel value and its gradient with respect to the first argument.
    #[inline]
    pub fn k_grad_x(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.k(x, y);
        for (((g, a), b), l) in grad.iter_mut().zip(x).zip(y).zip(&self.lengthscales) {
            *g = -k * (a - b) / (l * l);
        }
        k
    }

    /// Gram matrix over a point set.
    pub fn gram(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag();
            for j in 0..i {
                let v = self.k(&points[i], &points[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Cross-covariance vector `k(X, x)`.
    pub fn cross(&self, points: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        points.iter().map(|p| self.k(p, x)).collect()
    }

    pub(crate) fn with_lengthscales(&self, lengthscales: Vec<f64>) -> Self {
        Self {
            lengthscales,
            output_scale: self.output_scale,
            family: self.family,
        }
    }
}
