//! Resumable run state machine.
//!
//! The engine never calls an oracle itself. It exposes the next thing it
//! needs through [`CobolEngine::poll`] and is fed answers through
//! [`CobolEngine::submit_label`] and [`CobolEngine::submit_observation`], so
//! in-process drivers and the HTTP session service share one code path and
//! produce identical traces for identical inputs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    dual_update, expert_augmented_candidate, expert_constrained_candidate, handover_gate, min_ucb, no_harm_check,
    vanilla_lcb_candidate, AcqOptions, DualState,
};
use crate::belief::{maybe_double_norm_bound, BeliefDataset, BeliefInterval, BeliefModel, RadiusRule, MAX_DOUBLINGS};
use crate::config::CobolConfig;
use crate::domain::DomainBox;
use crate::error::{CobolError, Result};
use crate::gp::{beta_f, GpPosterior, ObjectiveDataset};
use crate::hyperfit::fit_kernel_hyperparams;
use crate::info_gain::info_gain_on_grid;
use crate::kernel::KernelConfig;
use crate::nlp::NlpOptions;
use crate::record::{Arm, InitialLabel, InitialObservation, Method, RunRecord, StepRecord};

/// Label request. `t = 0` marks pre-training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub x: Vec<f64>,
    pub t: usize,
    pub p_lower: f64,
    pub p_upper: f64,
}

/// Objective evaluation request. `t = 0` marks initial design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRequest {
    pub x: Vec<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Label(LabelRequest),
    Observation(ObservationRequest),
    Finished,
}

#[derive(Debug, Clone)]
struct Draft {
    record: StepRecord,
    x_unit: Vec<f64>,
    compute_ms: f64,
}

#[derive(Debug, Clone)]
enum Pending {
    InitObservation { x_unit: Vec<f64> },
    InitLabel { x_unit: Vec<f64>, interval: BeliefInterval },
    StepLabel(Box<Draft>),
    StepObservation(Box<Draft>),
    Finished,
}

/// Derives an independent stream seed.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub struct CobolEngine {
    config: CobolConfig,
    method: Method,
    domain: DomainBox,
    unit: DomainBox,
    seed: u64,
    rng: ChaCha8Rng,
    f_data: ObjectiveDataset,
    kernel: KernelConfig,
    gp: Option<GpPosterior>,
    beta: f64,
    labels: BeliefDataset,
    belief: Option<BeliefModel>,
    rule: RadiusRule,
    norm_bound: f64,
    beta1: f64,
    dual: DualState,
    t: usize,
    pending: Option<Pending>,
    record: RunRecord,
}

impl CobolEngine {
    pub fn new(config: CobolConfig, method: Method, domain: DomainBox, seed: u64) -> Result<Self> {
        config.validate()?;
        if method == Method::ExpertSampling {
            return Err(CobolError::invalid(
                "method",
                "expert sampling draws from the expert directly and has no engine",
            ));
        }
        let d = domain.dim();
        let kernel = KernelConfig::new(vec![config.initial_lengthscale; d], config.output_scale)?;
        let rule = RadiusRule {
            mode: config.radius_rule,
            alpha1: config.alpha1,
            base_norm_bound: config.b_g,
            epsilon: config.epsilon(),
            delta: config.delta,
            log_cover_proxy: config.log_cover_proxy,
        };
        let dual = DualState::new(config.lambda0, config.zeta, config.eta, config.g_thr)?;
        let record = RunRecord {
            run_id: format!("{}-{seed}", method.name()),
            method,
            benchmark: None,
            accuracy: None,
            seed,
            config: config.clone(),
            initial: Vec::new(),
            initial_labels: Vec::new(),
            steps: Vec::new(),
            error: None,
        };
        Ok(Self {
            f_data: ObjectiveDataset::new(config.sigma(), config.r),
            labels: BeliefDataset::new(config.label_window),
            norm_bound: config.b_g,
            beta1: rule.radius(0, 1, config.b_g)?,
            beta: config.b_f,
            unit: DomainBox::unit(d),
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, 0)),
            gp: None,
            belief: None,
            t: 0,
            pending: None,
            config,
            method,
            domain,
            seed,
            kernel,
            rule,
            dual,
            record,
        })
    }

    /// Attaches descriptive metadata to the trace.
    pub fn with_meta(mut self, run_id: impl Into<String>, benchmark: Option<String>, accuracy: Option<f64>) -> Self {
        self.record.run_id = run_id.into();
        self.record.benchmark = benchmark;
        self.record.accuracy = accuracy;
        self
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn into_record(self) -> RunRecord {
        self.record
    }

    pub fn config(&self) -> &CobolConfig {
        &self.config
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Number of completed optimisation steps.
    pub fn steps_done(&self) -> usize {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.dual.lambda
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// Marks the run as aborted.
    pub fn set_error(&mut self, message: String) {
        self.record.error = Some(message);
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.pending, Some(Pending::Finished))
    }

    /// Next request; computes the next step if nothing is pending.
    pub fn poll(&mut self) -> Result<Request> {
        if self.pending.is_none() {
            let p = self.advance()?;
            self.pending = Some(p);
        }
        Ok(self.current_request())
    }

    /// Request that is currently outstanding, without computing anything.
    pub fn peek(&self) -> Option<Request> {
        self.pending.as_ref().map(|_| self.current_request())
    }

    fn current_request(&self) -> Request {
        match self.pending.as_ref().expect("pending set") {
            Pending::InitObservation { x_unit } => Request::Observation(ObservationRequest {
                x: self.domain.from_unit(x_unit),
                t: 0,
            }),
            Pending::InitLabel { x_unit, interval } => Request::Label(LabelRequest {
                x: self.domain.from_unit(x_unit),
                t: 0,
                p_lower: interval.prob_lower,
                p_upper: interval.prob_upper,
            }),
            Pending::StepLabel(d) => {
                let iv = d.record.interval.expect("label steps carry an interval");
                let iv = BeliefInterval::from_latent(iv[0], iv[1]);
                Request::Label(LabelRequest {
                    x: d.record.x.clone(),
                    t: d.record.t,
                    p_lower: iv.prob_lower,
                    p_upper: iv.prob_upper,
                })
            }
            Pending::StepObservation(d) => Request::Observation(ObservationRequest {
                x: d.record.x.clone(),
                t: d.record.t,
            }),
            Pending::Finished => Request::Finished,
        }
    }

    pub fn submit_label(&mut self, label: u8) -> Result<()> {
        if label > 1 {
            return Err(CobolError::invalid("label", format!("must be 0 or 1, got {label}")));
        }
        match self.pending.take() {
            Some(Pending::InitLabel { x_unit, .. }) => {
                self.record.initial_labels.push(InitialLabel {
                    x: self.domain.from_unit(&x_unit),
                    label,
                });
                self.labels.push(x_unit, label, 0)?;
                self.on_new_label()?;
                Ok(())
            }
            Some(Pending::StepLabel(mut d)) => {
                let start = Instant::now();
                self.labels.push(d.x_unit.clone(), label, d.record.t)?;
                self.on_new_label()?;
                d.record.label = Some(label);
                d.compute_ms += ms_since(start);
                if self.method == Method::Cobohl || label == 1 {
                    self.finish_step(*d);
                } else {
                    self.pending = Some(Pending::StepObservation(d));
                }
                Ok(())
            }
            other => {
                self.pending = other;
                Err(CobolError::Protocol("no label is pending".into()))
            }
        }
    }

    pub fn submit_observation(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(CobolError::invalid("y", "must be finite"));
        }
        match self.pending.take() {
            Some(Pending::InitObservation { x_unit }) => {
                self.record.initial.push(InitialObservation {
                    x: self.domain.from_unit(&x_unit),
                    y,
                });
                self.f_data.push(x_unit, y);
                self.gp = None;
                Ok(())
            }
            Some(Pending::StepObservation(mut d)) => {
                self.f_data.push(d.x_unit.clone(), y);
                self.gp = None;
                d.record.evaluated = true;
                d.record.y = Some(y);
                self.finish_step(*d);
                Ok(())
            }
            other => {
                self.pending = other;
                Err(CobolError::Protocol("no observation is pending".into()))
            }
        }
    }

    fn finish_step(&mut self, d: Draft) {
        let mut rec = d.record;
        rec.overhead_ms = d.compute_ms;
        self.record.steps.push(rec);
        self.t += 1;
    }

    fn uniform_unit(&mut self) -> Vec<f64> {
        (0..self.domain.dim()).map(|_| self.rng.random::<f64>()).collect()
    }

    fn advance(&mut self) -> Result<Pending> {
        if self.record.initial.len() < self.config.n_init_points {
            return Ok(Pending::InitObservation {
                x_unit: self.uniform_unit(),
            });
        }
        if self.method.uses_expert() && self.record.initial_labels.len() < self.config.n_init_labels {
            let x_unit = self.uniform_unit();
            self.ensure_gp()?;
            self.ensure_belief()?;
            let interval = self.model().interval(&x_unit, self.beta1)?;
            return Ok(Pending::InitLabel { x_unit, interval });
        }
        if self.t >= self.config.horizon {
            return Ok(Pending::Finished);
        }
        let start = Instant::now();
        let mut draft = match self.method {
            Method::Cobol => self.cobol_step()?,
            Method::Cobohl => self.cobohl_step()?,
            Method::VanillaLcb => self.vanilla_step()?,
            Method::Random => self.random_step(),
            Method::ExpertSampling => unreachable!("rejected in constructor"),
        };
        draft.compute_ms = ms_since(start);
        Ok(if draft.record.handover_fired {
            Pending::StepLabel(Box::new(draft))
        } else {
            Pending::StepObservation(Box::new(draft))
        })
    }

    fn model(&self) -> &BeliefModel {
        self.belief.as_ref().expect("belief model fitted")
    }

    fn gp(&self) -> &GpPosterior {
        self.gp.as_ref().expect("gp fitted")
    }

    /// Refits hyperparameters, the posterior and the confidence multiplier
    /// after the objective dataset changed.
    fn ensure_gp(&mut self) -> Result<()> {
        if self.gp.is_some() {
            return Ok(());
        }
        let n = self.f_data.len();
        if self.config.fit_hyperparameters && n >= 2 {
            let out = fit_kernel_hyperparams(
                &self.f_data,
                &self.kernel,
                self.config.gp_restarts,
                stream_seed(self.seed, 1_000 + n as u64),
            );
            if out.kernel != self.kernel {
                self.kernel = out.kernel;
                // The belief kernel copies the objective kernel.
                self.belief = None;
            }
        }
        let grid = self.config.info_gain_grid.max(n);
        let gamma = info_gain_on_grid(&self.kernel, self.config.r, n, grid, stream_seed(self.seed, 2) as u32)?;
        let b = beta_f(self.config.b_f, self.config.sigma(), gamma, self.config.delta)?;
        self.beta = self.beta.max(b);
        let (values, _, _) = self.f_data.standardized();
        let gp = GpPosterior::fit(self.kernel.clone(), &self.f_data.points, &values, self.config.r)?
            .with_beta(self.beta, self.config.b_f);
        self.gp = Some(gp);
        Ok(())
    }

    fn ensure_belief(&mut self) -> Result<()> {
        if self.belief.is_some() {
            return Ok(());
        }
        let (pts, labs) = self.labels.active(self.t);
        self.belief = Some(BeliefModel::fit_with(
            &self.kernel,
            &pts,
            &labs,
            self.norm_bound,
            NlpOptions::default(),
        )?);
        Ok(())
    }

    fn on_new_label(&mut self) -> Result<()> {
        self.belief = None;
        let now = self.t.max(1);
        let (pts, labs) = self.labels.active(self.t);
        let q = pts.len();
        if self.config.norm_bound_doubling {
            let ds = BeliefDataset::from_labels(pts, labs)?;
            let cap = self.config.b_g * 2f64.powi(MAX_DOUBLINGS as i32);
            self.norm_bound = maybe_double_norm_bound(&ds, self.norm_bound, &self.rule, &self.kernel, now)?.min(cap);
        }
        self.beta1 = self.rule.radius(q, now, self.norm_bound)?;
        Ok(())
    }

    fn acq_options(&self, t: usize) -> AcqOptions {
        AcqOptions {
            starts: self.config.acq_starts,
            seed: stream_seed(self.seed, 10_000 + t as u64) as u32,
            nlp: NlpOptions::default(),
        }
    }

    fn blank_step(&self, t: usize, arm: Arm, x_unit: &[f64]) -> StepRecord {
        StepRecord {
            t,
            arm,
            x: self.domain.from_unit(x_unit),
            queried: false,
            label: None,
            evaluated: false,
            y: None,
            z_star: None,
            z_joint: None,
            interval: None,
            lambda: self.dual.lambda,
            beta_f: self.beta,
            beta1: self.beta1,
            norm_bound: self.norm_bound,
            no_harm_pass: false,
            handover_fired: false,
            fallback: false,
            overhead_ms: 0.0,
        }
    }

    fn draft(record: StepRecord, x_unit: Vec<f64>) -> Draft {
        Draft {
            record,
            x_unit,
            compute_ms: 0.0,
        }
    }

    fn random_step(&mut self) -> Draft {
        let x = self.uniform_unit();
        let rec = self.blank_step(self.t + 1, Arm::Random, &x);
        Self::draft(rec, x)
    }

    fn vanilla_step(&mut self) -> Result<Draft> {
        self.ensure_gp()?;
        let t = self.t + 1;
        let x_u = vanilla_lcb_candidate(self.gp(), &self.unit, &self.acq_options(t));
        let rec = self.blank_step(t, Arm::Vanilla, &x_u);
        Ok(Self::draft(rec, x_u))
    }

    fn cobol_step(&mut self) -> Result<Draft> {
        self.ensure_gp()?;
        self.ensure_belief()?;
        let t = self.t + 1;
        let opts = self.acq_options(t);
        let gp = self.gp();
        let model = self.model();
        let x_u = vanilla_lcb_candidate(gp, &self.unit, &opts);
        let cand = expert_augmented_candidate(gp, model, self.beta1, self.dual.lambda, &self.unit, &x_u, &opts)?;
        let ucb_min = min_ucb(gp, &self.unit, &opts);
        let pass = no_harm_check(&cand.x, &x_u, gp, self.config.eta, ucb_min);

        let (arm, x_t) = if pass {
            (Arm::ExpertAugmented, cand.x.clone())
        } else {
            (Arm::Vanilla, x_u)
        };
        let mut rec = self.blank_step(t, arm, &x_t);
        rec.z_star = Some(cand.z_star);
        rec.z_joint = cand.z_joint;
        rec.fallback = cand.fallback;
        rec.no_harm_pass = pass;
        if pass {
            let upper = model.upper_at(&x_t, self.beta1)?;
            let iv = BeliefInterval::from_latent(cand.z_star, upper.max(cand.z_star));
            rec.interval = Some([iv.lower, iv.upper]);
            rec.handover_fired = handover_gate(&iv, self.config.g_thr);
            rec.queried = rec.handover_fired;
        }
        self.dual = dual_update(&self.dual, cand.z_star);
        Ok(Self::draft(rec, x_t))
    }

    fn cobohl_step(&mut self) -> Result<Draft> {
        self.ensure_gp()?;
        self.ensure_belief()?;
        let t = self.t + 1;
        let opts = self.acq_options(t);
        let gp = self.gp();
        let model = self.model();
        let x_u = vanilla_lcb_candidate(gp, &self.unit, &opts);
        let cand = expert_constrained_candidate(gp, model, self.beta1, &self.unit, &x_u, &opts)?;
        let arm = if cand.unconstrained || cand.fallback {
            Arm::Vanilla
        } else {
            Arm::ExpertAugmented
        };
        let upper = model.upper_at(&cand.x, self.beta1)?;
        let iv = BeliefInterval::from_latent(cand.z_star, upper.max(cand.z_star));
        let mut rec = self.blank_step(t, arm, &cand.x);
        rec.z_star = Some(cand.z_star);
        rec.fallback = cand.fallback;
        rec.interval = Some([iv.lower, iv.upper]);
        rec.handover_fired = handover_gate(&iv, self.config.g_thr);
        rec.queried = rec.handover_fired;
        Ok(Self::draft(rec, cand.x))
    }
}
