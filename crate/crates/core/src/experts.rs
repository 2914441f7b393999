//! Expert oracles and the objective oracle interface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::sigmoid;
use crate::domain::DomainBox;
use crate::error::{CobolError, Result};

/// Maximum number of draws in [`rejection_sample`].
pub const MAX_REJECTION_ATTEMPTS: usize = 10_000;

/// What the expert sees alongside a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelContext {
    pub x: Vec<f64>,
    pub p_lower: f64,
    pub p_upper: f64,
    pub t: usize,
}

/// Source of accept (0) / reject (1) labels.
pub trait ExpertOracle {
    fn label(&mut self, x: &[f64], ctx: &LabelContext) -> Result<u8>;
}

/// Source of (noisy) objective values.
pub trait ObjectiveOracle {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;
}

/// Affine map of `[f_min, f_max]` onto `[-3, 3]`, clamped.
pub fn rho_scale(v: f64, f_min: f64, f_max: f64) -> Result<f64> {
    if !(f_min < f_max) {
        return Err(CobolError::invalid("f_min", "must be below f_max"));
    }
    let s = -3.0 + 6.0 * (v - f_min) / (f_max - f_min);
    Ok(s.clamp(-3.0, 3.0))
}

/// Probability that the synthetic expert rejects a point with value `f_value`.
pub fn reject_probability(f_value: f64, accuracy: f64, f_min: f64, f_max: f64) -> Result<f64> {
    Ok(sigmoid(accuracy * rho_scale(f_value, f_min, f_max)?))
}

/// One Bernoulli draw of the synthetic expert.
pub fn synthetic_label<R: Rng + ?Sized>(f_value: f64, accuracy: f64, f_min: f64, f_max: f64, rng: &mut R) -> Result<u8> {
    let p = reject_probability(f_value, accuracy, f_min, f_max)?;
    Ok((rng.random::<f64>() < p) as u8)
}

type Objective = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Labeller whose reject probability is `S(a * rho(f(x)))`.
pub struct SyntheticExpert {
    accuracy: f64,
    f_min: f64,
    f_max: f64,
    f: Objective,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for SyntheticExpert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticExpert")
            .field("accuracy", &self.accuracy)
            .field("f_min", &self.f_min)
            .field("f_max", &self.f_max)
            .finish_non_exhaustive()
    }
}

impl SyntheticExpert {
    pub fn new(
        accuracy: f64,
        f_min: f64,
        f_max: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        seed: u64,
    ) -> Result<Self> {
        if !(f_min < f_max) {
            return Err(CobolError::invalid("f_min", "must be below f_max"));
        }
        if !accuracy.is_finite() {
            return Err(CobolError::invalid("accuracy", "must be finite"));
        }
        Ok(Self {
            accuracy,
            f_min,
            f_max,
            f: Box::new(f),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn reject_prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.accuracy * rho_scale((self.f)(x), self.f_min, self.f_max).expect("validated bounds"))
    }
}

impl ExpertOracle for SyntheticExpert {
    fn label(&mut self, x: &[f64], _ctx: &LabelContext) -> Result<u8> {
        let p = self.reject_prob(x);
        Ok((self.rng.random::<f64>() < p) as u8)
    }
}

/// Scripted expert that rejects a region with a fixed probability.
pub struct StepFunctionExpert {
    reject_region: Box<dyn Fn(&[f64]) -> bool + Send + Sync>,
    p_inside: f64,
    p_outside: f64,
    rng: ChaCha8Rng,
}

impl StepFunctionExpert {
    pub fn new(
        reject_region: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        p_inside: f64,
        p_outside: f64,
        seed: u64,
    ) -> Result<Self> {
        for (name, p) in [("p_inside", p_inside), ("p_outside", p_outside)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CobolError::invalid(name, "must lie in [0, 1]"));
            }
        }
        Ok(Self {
            reject_region: Box::new(reject_region),
            p_inside,
            p_outside,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn reject_prob(&self, x: &[f64]) -> f64 {
        if (self.reject_region)(x) {
            self.p_inside
        } else {
            self.p_outside
        }
    }
}

impl ExpertOracle for StepFunctionExpert {
    fn label(&mut self, x: &[f64], _ctx: &LabelContext) -> Result<u8> {
        let p = self.reject_prob(x);
        Ok((self.rng.random::<f64>() < p) as u8)
    }
}

/// Adapter for a blocking labelling callback, e.g. a human at a terminal.
pub struct CallbackExpert<F>(pub F);

impl<F> ExpertOracle for CallbackExpert<F>
where
    F: FnMut(&LabelContext) -> Result<u8>,
{
    fn label(&mut self, _x: &[f64], ctx: &LabelContext) -> Result<u8> {
        let l = (self.0)(ctx)?;
        if l > 1 {
            return Err(CobolError::Oracle(format!("label must be 0 or 1, got {l}")));
        }
        Ok(l)
    }
}

/// Draws uniform points from `domain` and keeps one with probability
/// `1 - reject_prob(x)`.
pub fn rejection_sample<R: Rng + ?Sized>(
    domain: &DomainBox,
    reject_prob: impl Fn(&[f64]) -> f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let x: Vec<f64> = domain
            .lower()
            .iter()
            .zip(domain.upper())
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect();
        let p = reject_prob(&x);
        if rng.random::<f64>() >= p {
            return Ok(x);
        }
    }
    Err(CobolError::SamplingExhausted {
        attempts: MAX_REJECTION_ATTEMPTS,
    })
}
