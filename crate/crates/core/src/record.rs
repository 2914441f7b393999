//! Per-step traces of a run.

use serde::{Deserialize, Serialize};

use crate::config::CobolConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cobol,
    Cobohl,
    VanillaLcb,
    Random,
    ExpertSampling,
}

impl Method {
    pub fn uses_expert(self) -> bool {
        matches!(self, Method::Cobol | Method::Cobohl)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Cobol => "cobol",
            Method::Cobohl => "cobohl",
            Method::VanillaLcb => "vanilla_lcb",
            Method::Random => "random",
            Method::ExpertSampling => "expert_sampling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Method::Cobol,
            Method::Cobohl,
            Method::VanillaLcb,
            Method::Random,
            Method::ExpertSampling,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    ExpertAugmented,
    Vanilla,
    Random,
    ExpertSampling,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::ExpertAugmented => "expert_augmented",
            Arm::Vanilla => "vanilla",
            Arm::Random => "random",
            Arm::ExpertSampling => "expert_sampling",
        }
    }
}

/// One optimisation step. Points are in the original domain coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub arm: Arm,
    pub x: Vec<f64>,
    pub queried: bool,
    pub label: Option<u8>,
    pub evaluated: bool,
    pub y: Option<f64>,
    /// Lower belief bound at the expert-augmented candidate.
    pub z_star: Option<f64>,
    /// Latent value from the joint solve.
    pub z_joint: Option<f64>,
    /// Belief interval (latent scale) at `x` when it was computed.
    pub interval: Option<[f64; 2]>,
    /// Dual weight used in this step.
    pub lambda: f64,
    pub beta_f: f64,
    pub beta1: f64,
    pub norm_bound: f64,
    pub no_harm_pass: bool,
    pub handover_fired: bool,
    /// Joint solve failed and the vanilla candidate was used instead.
    pub fallback: bool,
    pub overhead_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialObservation {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLabel {
    pub x: Vec<f64>,
    pub label: u8,
}

/// Full trace of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub method: Method,
    pub benchmark: Option<String>,
    pub accuracy: Option<f64>,
    pub seed: u64,
    pub config: CobolConfig,
    pub initial: Vec<InitialObservation>,
    pub initial_labels: Vec<InitialLabel>,
    pub steps: Vec<StepRecord>,
    /// Error that aborted the run, if any.
    pub error: Option<String>,
}

impl RunRecord {
    /// Equality ignoring wall-clock fields.
    pub fn trace_eq(&self, other: &RunRecord) -> bool {
        self.stripped() == other.stripped()
    }

    fn stripped(&self) -> RunRecord {
        let mut r = self.clone();
        for s in &mut r.steps {
            s.overhead_ms = 0.0;
        }
        r
    }

    pub fn queries(&self) -> usize {
        self.steps.iter().filter(|s| s.queried).count()
    }

    pub fn evaluations(&self) -> usize {
        self.steps.iter().filter(|s| s.evaluated).count()
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.steps.len() == self.config.horizon
    }
}
