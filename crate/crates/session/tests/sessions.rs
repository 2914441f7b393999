use std::io::Write;
use std::time::Duration;

use cobol_core::bench::{run_single, Benchmark, RunSpec};
use cobol_core::config::CobolConfig;
use cobol_core::experts::{ExpertOracle, LabelContext};
use cobol_core::record::Method;
use cobol_session::{CreateRequest, NextAction, ObjectiveSpec, Phase, SessionError, SessionManager};

const WAIT: Duration = Duration::from_secs(120);

fn config(horizon: usize) -> CobolConfig {
    CobolConfig {
        horizon,
        ..CobolConfig::default()
    }
}

fn bench_request(name: &str, cfg: CobolConfig, seed: u64) -> CreateRequest {
    CreateRequest {
        config: cfg,
        method: Method::Cobol,
        objective: ObjectiveSpec::Benchmark {
            name: name.into(),
            noise_sigma: None,
        },
        seed,
        idempotency_key: None,
        run_id: None,
        accuracy: None,
    }
}

fn external_request(cfg: CobolConfig) -> CreateRequest {
    CreateRequest {
        objective: ObjectiveSpec::External {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        },
        ..bench_request("ackley2", cfg, 0)
    }
}

fn ctx(next: &NextAction) -> LabelContext {
    let p = next.pending.as_ref().unwrap();
    LabelContext {
        x: p.x.clone(),
        p_lower: p.p_lower.unwrap(),
        p_upper: p.p_upper.unwrap(),
        t: p.t,
    }
}

#[test]
fn scripted_client_reproduces_the_in_process_run() {
    let spec = RunSpec {
        benchmark: Benchmark::by_name("ackley2").unwrap(),
        method: Method::Cobol,
        accuracy: 1.0,
        seed: 11,
        config: config(8),
        noise_sigma: 1e-4,
    };
    let reference = run_single(&spec).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let mut req = bench_request("ackley2", spec.config.clone(), spec.seed);
    req.run_id = Some(spec.run_id());
    req.accuracy = Some(spec.accuracy);
    let (first, created) = m.create(req).unwrap();
    assert!(created);
    assert_eq!(first.phase, Phase::Computing);
    let id = first.session_id;
    let mut expert = spec.expert(spec.benchmark.expert_bounds()).unwrap();
    let mut n = 0;
    loop {
        let next = m.wait_idle(&id, WAIT).unwrap();
        match next.phase {
            Phase::AwaitingLabel => {
                let c = ctx(&next);
                let l = expert.label(&c.x, &c).unwrap();
                m.submit_label(&id, l as i64, &format!("r{n}")).unwrap();
                n += 1;
            }
            Phase::Finished => break,
            other => panic!("unexpected phase {other:?}"),
        }
    }
    let state = m.state(&id).unwrap();
    assert!(state.history.trace_eq(&reference));
    assert_eq!(state.t, 8);
    assert!(state.summary.error.is_none());
}

#[test]
fn benchmark_sessions_start_with_a_label_request() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let (first, _) = m.create(bench_request("ackley2", config(3), 1)).unwrap();
    let fresh = m.state(&first.session_id).unwrap();
    assert_eq!(fresh.t, 0);
    assert!(fresh.history.steps.is_empty());
    let next = m.wait_idle(&first.session_id, WAIT).unwrap();
    assert_eq!(next.phase, Phase::AwaitingLabel);
    let p = next.pending.unwrap();
    assert_eq!(p.t, 0);
    assert_eq!(p.x.len(), 2);
    assert!(p.p_lower.unwrap() < p.p_upper.unwrap());

    let cold = CobolConfig {
        n_init_labels: 0,
        ..config(3)
    };
    let (s, _) = m.create(bench_request("ackley2", cold, 1)).unwrap();
    let next = m.wait_idle(&s.session_id, WAIT).unwrap();
    assert_eq!(next.phase, Phase::AwaitingLabel);
    assert_eq!(next.pending.unwrap().t, 1);
}

fn advance_to_step_label(m: &SessionManager, id: &str) -> NextAction {
    let mut n = 0;
    loop {
        let next = m.wait_idle(id, WAIT).unwrap();
        assert_eq!(next.phase, Phase::AwaitingLabel);
        if next.pending.as_ref().unwrap().t >= 1 {
            return next;
        }
        m.submit_label(id, 0, &format!("init{n}")).unwrap();
        n += 1;
    }
}

#[test]
fn reject_skips_evaluation_and_accept_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let (s, _) = m.create(bench_request("ackley2", config(10), 2)).unwrap();
    let id = s.session_id;
    let next = advance_to_step_label(&m, &id);
    let t = next.pending.unwrap().t;
    let before = m.state(&id).unwrap();
    assert_eq!(before.summary.evaluations, 3);
    m.submit_label(&id, 1, "reject").unwrap();
    m.wait_idle(&id, WAIT).unwrap();
    let after = m.state(&id).unwrap();
    assert_eq!(after.t, t);
    assert_eq!(after.summary.evaluations, 3);

    loop {
        let next = m.wait_idle(&id, WAIT).unwrap();
        if next.phase != Phase::AwaitingLabel {
            break;
        }
        let st = m.state(&id).unwrap();
        m.submit_label(&id, 0, &format!("accept{}", st.t)).unwrap();
        m.wait_idle(&id, WAIT).unwrap();
        let st2 = m.state(&id).unwrap();
        assert_eq!(st2.summary.evaluations, st.summary.evaluations + 1);
        assert_eq!(st2.t, st.t + 1);
        break;
    }
}

#[test]
fn external_objectives_wait_for_observations() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let mut req = external_request(config(2));
    req.method = Method::VanillaLcb;
    let (s, _) = m.create(req).unwrap();
    let id = s.session_id;
    let next = m.wait_idle(&id, WAIT).unwrap();
    assert_eq!(next.phase, Phase::AwaitingObservation);
    let p = next.pending.clone().unwrap();
    assert!(p.p_lower.is_none() && p.p_upper.is_none());

    let e = m.submit_observation(&id, f64::NAN, "nan").unwrap_err();
    assert!(matches!(e, SessionError::Invalid { ref field, .. } if field == "y"));
    assert_eq!(m.next(&id).unwrap(), next);
    assert!(matches!(m.submit_label(&id, 0, "wrong"), Err(SessionError::Conflict { .. })));

    let mut k = 0;
    loop {
        let next = m.wait_idle(&id, WAIT).unwrap();
        if next.phase == Phase::Finished {
            let summary = next.summary.unwrap();
            assert_eq!(summary.evaluations, 5);
            assert!(next.pending.is_none());
            break;
        }
        let x = next.pending.unwrap().x;
        m.submit_observation(&id, x.iter().map(|v| v * v).sum(), &format!("y{k}")).unwrap();
        k += 1;
    }
    assert_eq!(k, 5);
    let first = m.next(&id).unwrap();
    assert_eq!(m.next(&id).unwrap(), first);
}

#[test]
fn submits_are_idempotent_per_request_id() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let mut req = bench_request("ackley2", config(3), 4);
    req.idempotency_key = Some("k1".into());
    let (a, created_a) = m.create(req.clone()).unwrap();
    let (b, created_b) = m.create(req).unwrap();
    assert!(created_a && !created_b);
    assert_eq!(a.session_id, b.session_id);
    assert_eq!(m.session_ids().len(), 1);

    let id = a.session_id;
    m.wait_idle(&id, WAIT).unwrap();
    m.submit_label(&id, 1, "same").unwrap();
    let settled = m.wait_idle(&id, WAIT).unwrap();
    let again = m.submit_label(&id, 1, "same").unwrap();
    assert_eq!(again, settled);
    assert_eq!(m.state(&id).unwrap().history.initial_labels.len(), 1);
    let log = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"label\":")).count(), 1);
}

#[test]
fn validation_and_lookup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = SessionManager::open(dir.path()).unwrap();
    let bad = CobolConfig {
        eta: 0.5,
        ..config(3)
    };
    let e = m.create(bench_request("ackley2", bad, 0)).unwrap_err();
    assert!(matches!(e, SessionError::Invalid { ref field, .. } if field == "eta"));
    assert!(m.create(bench_request("nope", config(3), 0)).is_err());
    let mut es = bench_request("ackley2", config(3), 0);
    es.method = Method::ExpertSampling;
    assert!(m.create(es).is_err());
    assert!(matches!(m.next("missing"), Err(SessionError::NotFound(_))));
    assert!(m.session_ids().is_empty());

    let (s, _) = m.create(bench_request("ackley2", config(3), 0)).unwrap();
    m.wait_idle(&s.session_id, WAIT).unwrap();
    let e = m.submit_label(&s.session_id, 2, "two").unwrap_err();
    assert!(matches!(e, SessionError::Invalid { ref field, .. } if field == "label"));
}

#[test]
fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    let before;
    {
        let m = SessionManager::open(dir.path()).unwrap();
        let (s, _) = m.create(bench_request("rosenbrock2", config(6), 9)).unwrap();
        id = s.session_id;
        let mut n = 0;
        while n < 14 {
            let next = m.wait_idle(&id, WAIT).unwrap();
            if next.phase != Phase::AwaitingLabel {
                break;
            }
            m.submit_label(&id, (n % 3 == 0) as i64, &format!("r{n}")).unwrap();
            n += 1;
        }
        m.wait_idle(&id, WAIT).unwrap();
        before = m.state(&id).unwrap();
    }
    let path = dir.path().join(format!("{id}.jsonl"));
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(b"{\"event\":\"label\",\"lab").unwrap();
    drop(f);

    let m = SessionManager::open(dir.path()).unwrap();
    let after = m.state(&id).unwrap();
    assert_eq!(serde_json::to_value(&before).unwrap(), serde_json::to_value(&after).unwrap());
}
