//! Session state machines and their registry.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use cobol_core::bench::runner::NOISE_STREAM;
use cobol_core::bench::{compute_metrics, Benchmark, NoisyObjective};
use cobol_core::config::CobolConfig;
use cobol_core::engine::{stream_seed, CobolEngine, Request};
use cobol_core::experts::ObjectiveOracle;
use cobol_core::record::{Method, RunRecord};
use cobol_core::DomainBox;
use serde::{Deserialize, Serialize};

use crate::error::SessionError;
use crate::store::{list_logs, Event, EventLog};

/// Environment variable naming the event-log root.
pub const DATA_DIR_ENV: &str = "COBOL_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingLabel,
    AwaitingObservation,
    Computing,
    Finished,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::AwaitingLabel => "awaiting_label",
            Phase::AwaitingObservation => "awaiting_observation",
            Phase::Computing => "computing",
            Phase::Finished => "finished",
        }
    }
}

/// What the client is asked for. Probabilities are present for label requests only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub x: Vec<f64>,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Named benchmark evaluated by the service with seeded noise.
    Benchmark {
        name: String,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    /// Values are supplied by the client.
    External { lower: Vec<f64>, upper: Vec<f64> },
}

fn default_method() -> Method {
    Method::Cobol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub config: CobolConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub seed: u64,
    /// Repeated creates with the same key return the same session.
    #[serde(default)]
    pub idempotency_key: Option<String>,
    /// Run id recorded in the trace; defaults to the session id.
    #[serde(default)]
    pub run_id: Option<String>,
    /// Expert accuracy recorded in the trace, if known.
    #[serde(default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    /// Objective evaluations including the initial design.
    pub evaluations: usize,
    pub best_y: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextAction {
    pub session_id: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Cumulative expert queries after each step.
    pub queries: Vec<usize>,
    pub lambda: Vec<f64>,
    /// Best observed value after each step.
    pub best_y: Vec<Option<f64>>,
    /// Present for benchmarks with a known optimum.
    pub simple_regret: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub phase: Phase,
    pub pending: Option<PendingView>,
    /// Completed steps.
    pub t: usize,
    pub objective: ObjectiveSpec,
    pub method: Method,
    pub seed: u64,
    pub config: CobolConfig,
    pub history: RunRecord,
    pub metrics: SessionMetrics,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Label(u8),
    Observation(f64),
}

struct Runner {
    engine: CobolEngine,
    objective: Option<NoisyObjective>,
}

impl Runner {
    fn build(session_id: &str, req: &CreateRequest) -> Result<Self, SessionError> {
        req.config.validate()?;
        if req.method == Method::ExpertSampling {
            return Err(SessionError::invalid("method", "not available in a live session"));
        }
        let (domain, objective, bench_name) = match &req.objective {
            ObjectiveSpec::Benchmark { name, noise_sigma } => {
                let b = Benchmark::by_name(name)?;
                let sigma = noise_sigma.unwrap_or(req.config.sigma());
                let obj = NoisyObjective::new(b.clone(), sigma, stream_seed(req.seed, NOISE_STREAM))?;
                (b.domain().clone(), Some(obj), Some(b.name().to_string()))
            }
            ObjectiveSpec::External { lower, upper } => (DomainBox::new(lower.clone(), upper.clone())?, None, None),
        };
        let run_id = req.run_id.clone().unwrap_or_else(|| session_id.to_string());
        let engine = CobolEngine::new(req.config.clone(), req.method, domain, req.seed)?
            .with_meta(run_id, bench_name, req.accuracy);
        Ok(Self { engine, objective })
    }

    /// Applies an answer, then runs until the next request for the client.
    fn step(&mut self, action: Option<Action>) -> (Phase, Option<PendingView>) {
        let applied = match action {
            None => Ok(()),
            Some(Action::Label(l)) => self.engine.submit_label(l),
            Some(Action::Observation(y)) => self.engine.submit_observation(y),
        };
        if let Err(e) = applied {
            self.engine.set_error(e.to_string());
            return (Phase::Finished, None);
        }
        loop {
            match self.engine.poll() {
                Err(e) => {
                    log::warn!("session run {} aborted: {e}", self.engine.record().run_id);
                    self.engine.set_error(e.to_string());
                    return (Phase::Finished, None);
                }
                Ok(Request::Finished) => return (Phase::Finished, None),
                Ok(Request::Label(r)) => {
                    let view = PendingView {
                        x: r.x,
                        t: r.t,
                        p_lower: Some(r.p_lower),
                        p_upper: Some(r.p_upper),
                    };
                    return (Phase::AwaitingLabel, Some(view));
                }
                Ok(Request::Observation(r)) => match self.objective.as_mut() {
                    Some(obj) => {
                        let res = obj.evaluate(&r.x).and_then(|y| self.engine.submit_observation(y));
                        if let Err(e) = res {
                            self.engine.set_error(e.to_string());
                            return (Phase::Finished, None);
                        }
                    }
                    None => {
                        let view = PendingView {
                            x: r.x,
                            t: r.t,
                            p_lower: None,
                            p_upper: None,
                        };
                        return (Phase::AwaitingObservation, Some(view));
                    }
                },
            }
        }
    }
}

struct Inner {
    request: CreateRequest,
    /// Taken while a step is being computed.
    runner: Option<Runner>,
    phase: Phase,
    pending: Option<PendingView>,
    record: RunRecord,
    seen: HashSet<String>,
    /// Logged compute time per finished step.
    timings: Vec<f64>,
    log: EventLog,
}

struct Slot {
    id: String,
    inner: Mutex<Inner>,
    idle: Condvar,
}

impl Slot {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Inner {
    /// Takes a new engine snapshot, logging timings of newly finished steps
    /// and restoring logged ones.
    fn sync_record(&mut self, engine: &CobolEngine) {
        let mut record = engine.record().clone();
        for step in record.steps.iter_mut().skip(self.timings.len()) {
            let ev = Event::Timing {
                t: step.t,
                overhead_ms: step.overhead_ms,
            };
            if let Err(e) = self.log.append(&ev) {
                log::warn!("could not log step timing: {e}");
            }
            self.timings.push(step.overhead_ms);
        }
        for (step, ms) in record.steps.iter_mut().zip(&self.timings) {
            step.overhead_ms = *ms;
        }
        self.record = record;
    }

    fn next(&self, id: &str) -> NextAction {
        NextAction {
            session_id: id.to_string(),
            phase: self.phase,
            pending: self.pending.clone(),
            summary: (self.phase == Phase::Finished).then(|| self.summary()),
        }
    }

    fn summary(&self) -> Summary {
        let r = &self.record;
        let best_y = r
            .initial
            .iter()
            .map(|p| p.y)
            .chain(r.steps.iter().filter_map(|s| s.y))
            .fold(None, |a: Option<f64>, y| Some(a.map_or(y, |a| a.min(y))));
        Summary {
            queries: r.queries(),
            evaluations: r.initial.len() + r.evaluations(),
            best_y,
            error: r.error.clone(),
        }
    }

    fn metrics(&self) -> SessionMetrics {
        let r = &self.record;
        let mut best = r.initial.iter().map(|p| p.y).fold(None, |a: Option<f64>, y| Some(a.map_or(y, |a| a.min(y))));
        let mut q = 0;
        let mut queries = Vec::with_capacity(r.steps.len());
        let mut best_y = Vec::with_capacity(r.steps.len());
        for s in &r.steps {
            q += s.queried as usize;
            queries.push(q);
            if let Some(y) = s.y {
                best = Some(best.map_or(y, |b| b.min(y)));
            }
            best_y.push(best);
        }
        let simple_regret = match &self.request.objective {
            ObjectiveSpec::Benchmark { name, .. } => Benchmark::by_name(name)
                .ok()
                .and_then(|b| compute_metrics(r, &b).ok())
                .and_then(|m| m.simple_regret),
            ObjectiveSpec::External { .. } => None,
        };
        SessionMetrics {
            queries,
            lambda: r.steps.iter().map(|s| s.lambda).collect(),
            best_y,
            simple_regret,
        }
    }

    fn state(&self, id: &str) -> SessionState {
        SessionState {
            session_id: id.to_string(),
            phase: self.phase,
            pending: self.pending.clone(),
            t: self.record.steps.len(),
            objective: self.request.objective.clone(),
            method: self.request.method,
            seed: self.request.seed,
            config: self.request.config.clone(),
            history: self.record.clone(),
            metrics: self.metrics(),
            summary: self.summary(),
        }
    }
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<Slot>>,
    keys: HashMap<String, String>,
}

/// All sessions under one data directory.
pub struct SessionManager {
    dir: PathBuf,
    registry: Mutex<Registry>,
}

impl std::fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionManager").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn spawn_compute(slot: Arc<Slot>, mut runner: Runner, action: Option<Action>) {
    let name = format!("session-{}", slot.id);
    std::thread::Builder::new()
        .name(name)
        .spawn(move || {
            let (phase, pending) = runner.step(action);
            let mut s = slot.lock();
            s.sync_record(&runner.engine);
            s.phase = phase;
            s.pending = pending;
            s.runner = Some(runner);
            drop(s);
            slot.idle.notify_all();
        })
        .expect("spawn compute thread");
}

impl SessionManager {
    /// Opens `dir`, replaying every session log found there.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut registry = Registry::default();
        for path in list_logs(&dir)? {
            let slot = replay(path)?;
            let s = slot.lock();
            if let Some(k) = &s.request.idempotency_key {
                registry.keys.insert(k.clone(), slot.id.clone());
            }
            drop(s);
            registry.sessions.insert(slot.id.clone(), slot);
        }
        log::info!("loaded {} sessions from {}", registry.sessions.len(), dir.display());
        Ok(Self {
            dir,
            registry: Mutex::new(registry),
        })
    }

    /// Opens the directory named by `COBOL_DATA_DIR`, or `fallback`.
    pub fn from_env(fallback: impl AsRef<Path>) -> Result<Self, SessionError> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) => Self::open(PathBuf::from(d)),
            None => Self::open(fallback.as_ref()),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    fn registry(&self) -> MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, SessionError> {
        self.registry()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.registry().sessions.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Creates a session; the flag is false when an existing session was
    /// returned for a repeated idempotency key.
    pub fn create(&self, request: CreateRequest) -> Result<(NextAction, bool), SessionError> {
        let mut reg = self.registry();
        if let Some(key) = &request.idempotency_key {
            if let Some(id) = reg.keys.get(key) {
                let slot = reg.sessions[id].clone();
                drop(reg);
                let next = slot.lock().next(&slot.id);
                return Ok((next, false));
            }
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let runner = Runner::build(&id, &request)?;
        let log = EventLog::create(
            &self.dir,
            &id,
            &Event::Created {
                session_id: id.clone(),
                request: request.clone(),
            },
        )?;
        let slot = Arc::new(Slot {
            id: id.clone(),
            inner: Mutex::new(Inner {
                request: request.clone(),
                runner: None,
                phase: Phase::Computing,
                pending: None,
                record: runner.engine.record().clone(),
                seen: HashSet::new(),
                timings: Vec::new(),
                log,
            }),
            idle: Condvar::new(),
        });
        if let Some(key) = request.idempotency_key {
            reg.keys.insert(key, id.clone());
        }
        reg.sessions.insert(id.clone(), slot.clone());
        drop(reg);
        let next = slot.lock().next(&id);
        spawn_compute(slot, runner, None);
        Ok((next, true))
    }

    pub fn next(&self, id: &str) -> Result<NextAction, SessionError> {
        let slot = self.slot(id)?;
        let next = slot.lock().next(id);
        Ok(next)
    }

    pub fn state(&self, id: &str) -> Result<SessionState, SessionError> {
        let slot = self.slot(id)?;
        let state = slot.lock().state(id);
        Ok(state)
    }

    pub fn submit_label(&self, id: &str, label: i64, request_id: &str) -> Result<NextAction, SessionError> {
        self.submit(id, request_id, || {
            if !(0..=1).contains(&label) {
                return Err(SessionError::invalid("label", format!("must be 0 or 1, got {label}")));
            }
            Ok(Action::Label(label as u8))
        })
    }

    pub fn submit_observation(&self, id: &str, y: f64, request_id: &str) -> Result<NextAction, SessionError> {
        self.submit(id, request_id, || {
            if !y.is_finite() {
                return Err(SessionError::invalid("y", "must be finite"));
            }
            Ok(Action::Observation(y))
        })
    }

    fn submit(
        &self,
        id: &str,
        request_id: &str,
        action: impl FnOnce() -> Result<Action, SessionError>,
    ) -> Result<NextAction, SessionError> {
        let slot = self.slot(id)?;
        let mut s = slot.lock();
        if s.seen.contains(request_id) {
            return Ok(s.next(id));
        }
        let action = action()?;
        let (expected, event) = match action {
            Action::Label(label) => (
                Phase::AwaitingLabel,
                Event::Label {
                    label,
                    request_id: request_id.to_string(),
                },
            ),
            Action::Observation(y) => (
                Phase::AwaitingObservation,
                Event::Observation {
                    y,
                    request_id: request_id.to_string(),
                },
            ),
        };
        if s.phase != expected {
            return Err(SessionError::Conflict {
                expected: expected.name(),
                actual: s.phase.name(),
            });
        }
        s.log.append(&event)?;
        s.seen.insert(request_id.to_string());
        let runner = s.runner.take().expect("runner is present outside the computing phase");
        s.phase = Phase::Computing;
        s.pending = None;
        let next = s.next(id);
        drop(s);
        spawn_compute(slot, runner, Some(action));
        Ok(next)
    }

    /// Blocks until the session leaves the computing phase or `timeout` passes.
    pub fn wait_idle(&self, id: &str, timeout: Duration) -> Result<NextAction, SessionError> {
        let slot = self.slot(id)?;
        let deadline = Instant::now() + timeout;
        let mut s = slot.lock();
        while s.phase == Phase::Computing {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            s = slot.idle.wait_timeout(s, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        Ok(s.next(id))
    }
}

/// Rebuilds a session by re-running its engine over the logged answers.
fn replay(path: PathBuf) -> Result<Arc<Slot>, SessionError> {
    let log = EventLog::open(path.clone());
    let mut events = log.read()?.into_iter();
    let Some(Event::Created { session_id, request }) = events.next() else {
        return Err(SessionError::Corrupt(format!("{}: missing creation event", path.display())));
    };
    let mut runner = Runner::build(&session_id, &request)?;
    let (mut phase, mut pending) = runner.step(None);
    let mut seen = HashSet::new();
    let mut timings = Vec::new();
    for ev in events {
        let (expected, action, rid) = match ev {
            Event::Timing { t, overhead_ms } => {
                if t != timings.len() + 1 {
                    return Err(SessionError::Corrupt(format!("{}: timing for step {t} out of order", path.display())));
                }
                timings.push(overhead_ms);
                continue;
            }
            Event::Label { label, request_id } => (Phase::AwaitingLabel, Action::Label(label), request_id),
            Event::Observation { y, request_id } => (Phase::AwaitingObservation, Action::Observation(y), request_id),
            Event::Created { .. } => {
                return Err(SessionError::Corrupt(format!("{}: repeated creation event", path.display())));
            }
        };
        if phase != expected {
            return Err(SessionError::Corrupt(format!(
                "{}: {} logged while {}",
                path.display(),
                expected.name(),
                phase.name()
            )));
        }
        seen.insert(rid);
        (phase, pending) = runner.step(Some(action));
    }
    let mut inner = Inner {
        request,
        record: runner.engine.record().clone(),
        runner: None,
        phase,
        pending,
        seen,
        timings,
        log,
    };
    inner.sync_record(&runner.engine);
    inner.runner = Some(runner);
    Ok(Arc::new(Slot {
        id: session_id,
        inner: Mutex::new(inner),
        idle: Condvar::new(),
    }))
}
