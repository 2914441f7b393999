//! Analytic test objectives, all minimised.

use std::f64::consts::{E, PI};

use crate::domain::{sobol_in, DomainBox};
use crate::error::{CobolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ackley,
    HolderTable,
    Rastrigin,
    Michalewicz,
    Rosenbrock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    name: String,
    family: Family,
    domain: DomainBox,
    optimizer: Option<Vec<f64>>,
    optimum: Option<f64>,
}

pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

/// Negated Hölder table so that the optimum is a minimum.
pub fn holder_table(x: &[f64]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    -(x[0].sin() * x[1].cos() * (1.0 - r / PI).abs().exp()).abs()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

pub fn michalewicz(x: &[f64]) -> f64 {
    -x.iter()
        .enumerate()
        .map(|(i, v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powi(20))
        .sum::<f64>()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn split_dim(name: &str, prefix: &str) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() {
        return None;
    }
    rest.parse().ok().filter(|d| *d >= 1)
}

impl Benchmark {
    /// Looks up `ackley<d>`, `rastrigin<d>`, `michalewicz<d>`,
    /// `rosenbrock<d>` or `holder_table`. Bare family names use the default
    /// dimensions 4, 2, 5, 3.
    pub fn by_name(name: &str) -> Result<Self> {
        let name = name.to_ascii_lowercase();
        let defaults = [("ackley", 4), ("rastrigin", 2), ("michalewicz", 5), ("rosenbrock", 3)];
        let resolved = defaults
            .iter()
            .find(|(p, _)| *p == name)
            .map(|(p, d)| format!("{p}{d}"))
            .unwrap_or_else(|| name.clone());
        let unknown = || CobolError::UnknownBenchmark(name.clone());
        if resolved == "holder_table" || resolved == "holdertable" {
            return Ok(Self {
                name: "holder_table".into(),
                family: Family::HolderTable,
                domain: DomainBox::cube(2, 0.0, 10.0)?,
                optimizer: Some(vec![8.05502, 9.66459]),
                optimum: Some(-19.2085),
            });
        }
        let (family, d) = [
            ("ackley", Family::Ackley),
            ("rastrigin", Family::Rastrigin),
            ("michalewicz", Family::Michalewicz),
            ("rosenbrock", Family::Rosenbrock),
        ]
        .iter()
        .find_map(|(p, f)| split_dim(&resolved, p).map(|d| (*f, d)))
        .ok_or_else(unknown)?;
        let (domain, optimizer, optimum) = match family {
            Family::Ackley => (DomainBox::cube(d, -1.0, 1.0)?, Some(vec![0.0; d]), Some(0.0)),
            Family::Rastrigin => (DomainBox::cube(d, -5.12, 5.12)?, Some(vec![0.0; d]), Some(0.0)),
            Family::Rosenbrock => {
                if d < 2 {
                    return Err(unknown());
                }
                (DomainBox::cube(d, -5.0, 10.0)?, Some(vec![1.0; d]), Some(0.0))
            }
            Family::Michalewicz => {
                let known = match d {
                    2 => Some(-1.8013),
                    5 => Some(-4.687658),
                    10 => Some(-9.66015),
                    _ => None,
                };
                (DomainBox::cube(d, 0.0, PI)?, None, known)
            }
            Family::HolderTable => unreachable!(),
        };
        Ok(Self {
            name: resolved,
            family,
            domain,
            optimizer,
            optimum,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn optimizer(&self) -> Option<&[f64]> {
        self.optimizer.as_deref()
    }

    /// Known global minimum value.
    pub fn optimum(&self) -> Option<f64> {
        self.optimum
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::Ackley => ackley(x),
            Family::HolderTable => holder_table(x),
            Family::Rastrigin => rastrigin(x),
            Family::Michalewicz => michalewicz(x),
            Family::Rosenbrock => rosenbrock(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(CobolError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Minimum and maximum over a scrambled Sobol scan of `n` points.
    pub fn sobol_range(&self, n: usize, seed: u32) -> (f64, f64) {
        sobol_in(&self.domain, n, seed)
            .iter()
            .map(|x| self.eval_unchecked(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Bounds used to scale the synthetic expert: the known optimum (or the
    /// scan minimum) and a 10^4-point scan maximum.
    pub fn expert_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.sobol_range(10_000, 0);
        (self.optimum.unwrap_or(lo).min(lo), hi)
    }
}

/// Names accepted by [`Benchmark::by_name`] with their default dimensions.
pub const STANDARD_BENCHMARKS: [&str; 5] = ["ackley4", "holder_table", "rastrigin2", "michalewicz5", "rosenbrock3"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stated_optima() {
        assert!(ackley(&[0.0; 4]).abs() < 1e-12);
        assert_eq!(rosenbrock(&[1.0; 3]), 0.0);
        assert_eq!(rastrigin(&[0.0, 0.0]), 0.0);
        assert!((holder_table(&[8.05502, 9.66459]) + 19.2085).abs() < 1e-4);
    }

    #[test]
    fn name_resolution() {
        assert_eq!(Benchmark::by_name("ackley").unwrap().dim(), 4);
        assert_eq!(Benchmark::by_name("Rastrigin1").unwrap().dim(), 1);
        assert_eq!(Benchmark::by_name("holder_table").unwrap().dim(), 2);
        assert!(matches!(Benchmark::by_name("sphere"), Err(CobolError::UnknownBenchmark(_))));
        assert!(Benchmark::by_name("rosenbrock1").is_err());
        assert!(Benchmark::by_name("ackley4").unwrap().eval(&[0.0]).is_err());
    }
}
