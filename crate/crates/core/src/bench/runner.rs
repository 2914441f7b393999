//! Benchmark experiments with synthetic experts.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::functions::Benchmark;
use super::NoisyObjective;
use crate::config::CobolConfig;
use crate::engine::{stream_seed, CobolEngine};
use crate::error::Result;
use crate::experts::{rejection_sample, ObjectiveOracle, SyntheticExpert};
use crate::record::{Arm, InitialObservation, Method, RunRecord, StepRecord};
use crate::run::drive;

/// Stream identifiers for the per-run random sources.
pub const EXPERT_STREAM: u64 = 101;
pub const NOISE_STREAM: u64 = 202;
pub const SAMPLER_STREAM: u64 = 303;

/// One run of one method on one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub benchmark: Benchmark,
    pub method: Method,
    pub accuracy: f64,
    pub seed: u64,
    pub config: CobolConfig,
    pub noise_sigma: f64,
}

impl RunSpec {
    pub fn run_id(&self) -> String {
        format!("{}-{}-a{}-s{}", self.benchmark.name(), self.method.name(), self.accuracy, self.seed)
    }

    /// Synthetic expert for this run, scaled by the benchmark bounds.
    pub fn expert(&self, bounds: (f64, f64)) -> Result<SyntheticExpert> {
        let b = self.benchmark.clone();
        SyntheticExpert::new(
            self.accuracy,
            bounds.0,
            bounds.1,
            move |x| b.eval_unchecked(x),
            stream_seed(self.seed, EXPERT_STREAM),
        )
    }

    pub fn objective(&self) -> Result<NoisyObjective> {
        NoisyObjective::new(self.benchmark.clone(), self.noise_sigma, stream_seed(self.seed, NOISE_STREAM))
    }
}

/// Executes one run; failures are stored in the returned record.
pub fn run_single(spec: &RunSpec) -> Result<RunRecord> {
    run_single_with_bounds(spec, spec.benchmark.expert_bounds())
}

fn run_single_with_bounds(spec: &RunSpec, bounds: (f64, f64)) -> Result<RunRecord> {
    let mut objective = spec.objective()?;
    let mut expert = spec.expert(bounds)?;
    if spec.method == Method::ExpertSampling {
        return expert_sampling_run(spec, &mut objective, &expert);
    }
    let mut engine = CobolEngine::new(spec.config.clone(), spec.method, spec.benchmark.domain().clone(), spec.seed)?
        .with_meta(spec.run_id(), Some(spec.benchmark.name().to_string()), Some(spec.accuracy));
    drive(&mut engine, &mut objective, &mut expert);
    Ok(engine.into_record())
}

/// Baseline that draws every query from the expert's acceptance
/// distribution by rejection sampling.
fn expert_sampling_run(spec: &RunSpec, objective: &mut NoisyObjective, expert: &SyntheticExpert) -> Result<RunRecord> {
    let domain = spec.benchmark.domain();
    let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, SAMPLER_STREAM));
    let mut record = RunRecord {
        run_id: spec.run_id(),
        method: Method::ExpertSampling,
        benchmark: Some(spec.benchmark.name().to_string()),
        accuracy: Some(spec.accuracy),
        seed: spec.seed,
        config: spec.config.clone(),
        initial: Vec::new(),
        initial_labels: Vec::new(),
        steps: Vec::new(),
        error: None,
    };
    let mut body = || -> Result<()> {
        for _ in 0..spec.config.n_init_points {
            let u: Vec<f64> = (0..domain.dim()).map(|_| init_rng.random::<f64>()).collect();
            let x = domain.from_unit(&u);
            let y = objective.evaluate(&x)?;
            record.initial.push(InitialObservation { x, y });
        }
        for t in 1..=spec.config.horizon {
            let start = std::time::Instant::now();
            let x = rejection_sample(domain, |x| expert.reject_prob(x), &mut rng)?;
            let overhead_ms = start.elapsed().as_secs_f64() * 1e3;
            let y = objective.evaluate(&x)?;
            record.steps.push(StepRecord {
                t,
                arm: Arm::ExpertSampling,
                x,
                queried: false,
                label: None,
                evaluated: true,
                y: Some(y),
                z_star: None,
                z_joint: None,
                interval: None,
                lambda: spec.config.lambda0,
                beta_f: spec.config.b_f,
                beta1: 0.0,
                norm_bound: spec.config.b_g,
                no_harm_pass: false,
                handover_fired: false,
                fallback: false,
                overhead_ms,
            });
        }
        Ok(())
    };
    if let Err(e) = body() {
        record.error = Some(e.to_string());
    }
    Ok(record)
}

/// A sweep over seeds for one (benchmark, method, accuracy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub benchmark: String,
    pub method: Method,
    pub accuracy: f64,
    pub seeds: Vec<u64>,
    pub config: CobolConfig,
    /// Observation noise; `None` uses the configured `sigma`.
    pub noise_sigma: Option<f64>,
}

/// Runs every seed of the plan concurrently. Individual run failures are recorded in
/// the corresponding record and do not stop the sweep.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<RunRecord>> {
    plan.config.validate()?;
    let benchmark = Benchmark::by_name(&plan.benchmark)?;
    let bounds = benchmark.expert_bounds();
    let noise_sigma = plan.noise_sigma.unwrap_or_else(|| plan.config.sigma());
    plan.seeds
        .par_iter()
        .map(|&seed| {
            let spec = RunSpec {
                benchmark: benchmark.clone(),
                method: plan.method,
                accuracy: plan.accuracy,
                seed,
                config: plan.config.clone(),
                noise_sigma,
            };
            run_single_with_bounds(&spec, bounds)
        })
        .collect()
}
