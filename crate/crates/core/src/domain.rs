//! Box-shaped search domains and low-discrepancy point sets.

use serde::{Deserialize, Serialize};

use crate::error::{CobolError, Result};

/// Axis-aligned, compact, non-empty search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(CobolError::LengthMismatch {
                left: lower.len(),
                right: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(CobolError::invalid("domain", "zero-dimensional box"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(CobolError::invalid(
                    "domain",
                    format!("bounds of dimension {i} must satisfy lower < upper, got [{l}, {u}]"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of the box into unit-cube coordinates.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    /// Inverse of [`DomainBox::to_unit`].
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

const SOBOL_BLOCK: usize = 1 << 16;

/// Owen-scrambled Sobol points in `[0,1)^dim`.
///
/// Sequences longer than 2^16 continue on a fresh scramble seed.
pub fn sobol_unit(n: usize, dim: usize, seed: u32) -> Vec<Vec<f64>> {
    assert!(dim <= sobol_burley::NUM_DIMENSIONS as usize, "sobol dimension too large");
    (0..n)
        .map(|i| {
            let block = (i / SOBOL_BLOCK) as u32;
            let idx = (i % SOBOL_BLOCK) as u32;
            let s = seed.wrapping_add(block.wrapping_mul(0x9E37_79B9));
            (0..dim)
                .map(|j| sobol_burley::sample(idx, j as u32, s) as f64)
                .collect()
        })
        .collect()
}

/// Sobol points mapped into `domain`.
pub fn sobol_in(domain: &DomainBox, n: usize, seed: u32) -> Vec<Vec<f64>> {
    sobol_unit(n, domain.dim(), seed)
        .into_iter()
        .map(|u| domain.from_unit(&u))
        .collect()
}
