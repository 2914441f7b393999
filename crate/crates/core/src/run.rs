//! In-process drivers that answer engine requests from oracles.

use crate::config::CobolConfig;
use crate::domain::DomainBox;
use crate::engine::{CobolEngine, Request};
use crate::error::Result;
use crate::experts::{ExpertOracle, LabelContext, ObjectiveOracle};
use crate::record::{Method, RunRecord};

/// Runs the engine to completion.
///
/// On an oracle or solver error the error is stored in the record and the
/// partial trace is kept.
pub fn drive(engine: &mut CobolEngine, objective: &mut dyn ObjectiveOracle, expert: &mut dyn ExpertOracle) {
    if let Err(e) = drive_inner(engine, objective, expert) {
        log::warn!("run {} aborted: {e}", engine.record().run_id);
        engine.set_error(e.to_string());
    }
}

fn drive_inner(engine: &mut CobolEngine, objective: &mut dyn ObjectiveOracle, expert: &mut dyn ExpertOracle) -> Result<()> {
    loop {
        match engine.poll()? {
            Request::Finished => return Ok(()),
            Request::Observation(req) => {
                let y = objective.evaluate(&req.x)?;
                engine.submit_observation(y)?;
            }
            Request::Label(req) => {
                let ctx = LabelContext {
                    x: req.x.clone(),
                    p_lower: req.p_lower,
                    p_upper: req.p_upper,
                    t: req.t,
                };
                let label = expert.label(&req.x, &ctx)?;
                engine.submit_label(label)?;
            }
        }
    }
}

fn run_method(
    method: Method,
    objective: &mut dyn ObjectiveOracle,
    expert: &mut dyn ExpertOracle,
    config: &CobolConfig,
    domain: &DomainBox,
    seed: u64,
) -> Result<RunRecord> {
    let mut engine = CobolEngine::new(config.clone(), method, domain.clone(), seed)?;
    drive(&mut engine, objective, expert);
    Ok(engine.into_record())
}

/// Collaborative optimisation with an expert-augmented candidate each step.
pub fn cobol_run(
    objective: &mut dyn ObjectiveOracle,
    expert: &mut dyn ExpertOracle,
    config: &CobolConfig,
    domain: &DomainBox,
    seed: u64,
) -> Result<RunRecord> {
    run_method(Method::Cobol, objective, expert, config, domain, seed)
}

/// Expert-constrained variant: each step either queries or evaluates.
pub fn cobohl_run(
    objective: &mut dyn ObjectiveOracle,
    expert: &mut dyn ExpertOracle,
    config: &CobolConfig,
    domain: &DomainBox,
    seed: u64,
) -> Result<RunRecord> {
    run_method(Method::Cobohl, objective, expert, config, domain, seed)
}
