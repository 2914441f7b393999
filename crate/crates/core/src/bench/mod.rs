//! Benchmark objectives, synthetic-expert experiments and their reporting.

pub mod export;
pub mod functions;
pub mod metrics;
pub mod report;
pub mod runner;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{CobolError, Result};
use crate::experts::ObjectiveOracle;

pub use functions::Benchmark;
pub use metrics::{compute_metrics, MetricSeries};
pub use runner::{run_experiment, run_single, ExperimentPlan, RunSpec};

/// `f(x) + N(0, sigma^2)`.
pub fn noisy_eval<R: Rng + ?Sized>(bench: &Benchmark, x: &[f64], sigma: f64, rng: &mut R) -> Result<f64> {
    let f = bench.eval(x)?;
    if sigma == 0.0 {
        return Ok(f);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CobolError::invalid("sigma", e.to_string()))?;
    Ok(f + normal.sample(rng))
}

/// Seeded noisy benchmark oracle.
#[derive(Debug, Clone)]
pub struct NoisyObjective {
    bench: Benchmark,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoisyObjective {
    pub fn new(bench: Benchmark, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(CobolError::invalid("sigma", "must be a finite non-negative number"));
        }
        Ok(Self {
            bench,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.bench
    }
}

impl ObjectiveOracle for NoisyObjective {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        noisy_eval(&self.bench, x, self.sigma, &mut self.rng)
    }
}
