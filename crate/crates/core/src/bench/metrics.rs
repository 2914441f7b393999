//! Regret and query-count series derived from a run trace.

use serde::{Deserialize, Serialize};

use super::functions::Benchmark;
use crate::error::Result;
use crate::record::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    /// Simple regret after each step, counting the initial design.
    pub simple_regret: Option<Vec<f64>>,
    /// Cumulative regret over the steps that evaluated the objective.
    pub cumulative_regret: Option<Vec<f64>>,
    /// Cumulative number of expert queries.
    pub queries: Vec<usize>,
    pub total_overhead_ms: f64,
    /// Set when the benchmark has no known optimum and regrets are omitted.
    pub optimum_missing: bool,
}

impl MetricSeries {
    pub fn final_simple_regret(&self) -> Option<f64> {
        self.simple_regret.as_ref().and_then(|s| s.last().copied())
    }

    /// Simple regret after step `t` (1-based).
    pub fn simple_regret_at(&self, t: usize) -> Option<f64> {
        self.simple_regret.as_ref().and_then(|s| s.get(t.checked_sub(1)?).copied())
    }
}

/// True-objective metrics for a recorded run.
pub fn compute_metrics(record: &RunRecord, bench: &Benchmark) -> Result<MetricSeries> {
    let mut queries = Vec::with_capacity(record.steps.len());
    let mut q = 0;
    for s in &record.steps {
        q += s.queried as usize;
        queries.push(q);
    }
    let total_overhead_ms = record.steps.iter().map(|s| s.overhead_ms).sum();
    let Some(opt) = bench.optimum() else {
        return Ok(MetricSeries {
            simple_regret: None,
            cumulative_regret: None,
            queries,
            total_overhead_ms,
            optimum_missing: true,
        });
    };
    let mut best = f64::INFINITY;
    for p in &record.initial {
        best = best.min(bench.eval(&p.x)? - opt);
    }
    let mut sr = Vec::with_capacity(record.steps.len());
    let mut cr = Vec::with_capacity(record.steps.len());
    let mut cum = 0.0;
    for s in &record.steps {
        if s.evaluated {
            let gap = bench.eval(&s.x)? - opt;
            best = best.min(gap);
            cum += gap;
        }
        sr.push(best);
        cr.push(cum);
    }
    Ok(MetricSeries {
        simple_regret: Some(sr),
        cumulative_regret: Some(cr),
        queries,
        total_overhead_ms,
        optimum_missing: false,
    })
}
