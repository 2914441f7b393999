//! Aggregated tables and plots. Every output is a pure function of the
//! records passed in.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::functions::Benchmark;
use super::metrics::compute_metrics;
use crate::error::{CobolError, Result};
use crate::record::RunRecord;

/// Runs sharing benchmark, method and accuracy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub benchmark: String,
    pub method: String,
    /// Accuracy formatted for display; empty for expert-free methods.
    pub accuracy: String,
}

impl GroupKey {
    pub fn of(r: &RunRecord) -> Self {
        Self {
            benchmark: r.benchmark.clone().unwrap_or_else(|| "custom".into()),
            method: r.method.name().to_string(),
            accuracy: r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        }
    }

    pub fn label(&self) -> String {
        if self.accuracy.is_empty() {
            self.method.clone()
        } else {
            format!("{} (a={})", self.method, self.accuracy)
        }
    }
}

/// Mean and one standard error per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Sample mean and standard error (`sd / sqrt(n)`, `0` when `n < 2`).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn band(series: &[Vec<f64>]) -> Band {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let (mut mean, mut se) = (Vec::with_capacity(len), Vec::with_capacity(len));
    for t in 0..len {
        let col: Vec<f64> = series.iter().map(|s| s[t]).collect();
        let (m, e) = mean_se(&col);
        mean.push(m);
        se.push(e);
    }
    Band { mean, se }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub key_label: String,
    pub runs: usize,
    pub failed: usize,
    pub simple_regret: Option<Band>,
    pub cumulative_regret: Option<Band>,
    pub queries: Band,
    pub overhead_ms: (f64, f64),
}

/// Aggregates complete runs by [`GroupKey`]. Failed runs are counted but
/// excluded from the curves.
pub fn summarize(records: &[RunRecord]) -> Result<BTreeMap<GroupKey, GroupSummary>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(GroupKey::of(r)).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (key, runs) in groups {
        let bench = Benchmark::by_name(&key.benchmark).ok();
        let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.error.is_none()).collect();
        let (mut sr, mut cr, mut qg, mut oh) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for r in &ok {
            let q: Vec<f64> = r
                .steps
                .iter()
                .scan(0.0, |acc, s| {
                    *acc += s.queried as u8 as f64;
                    Some(*acc)
                })
                .collect();
            qg.push(q);
            oh.push(r.steps.iter().map(|s| s.overhead_ms).sum::<f64>());
            if let Some(b) = &bench {
                let m = compute_metrics(r, b)?;
                if let (Some(s), Some(c)) = (m.simple_regret, m.cumulative_regret) {
                    sr.push(s);
                    cr.push(c);
                }
            }
        }
        let has_regret = !sr.is_empty();
        out.insert(
            key.clone(),
            GroupSummary {
                key_label: key.label(),
                runs: runs.len(),
                failed: runs.len() - ok.len(),
                simple_regret: has_regret.then(|| band(&sr)),
                cumulative_regret: has_regret.then(|| band(&cr)),
                queries: band(&qg),
                overhead_ms: mean_se(&oh),
            },
        );
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> CobolError {
    CobolError::Io(e.to_string())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `curves.csv` (per step) and `summary.csv` (final values) and one
/// SVG per benchmark and metric. Returns the written paths.
pub fn write_report(records: &[RunRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CobolError::Io(format!("{}: {e}", out_dir.display())))?;
    let groups = summarize(records)?;
    let mut written = Vec::new();

    let curves = out_dir.join("curves.csv");
    let mut w = csv::Writer::from_path(&curves).map_err(csv_err)?;
    w.write_record([
        "benchmark", "method", "accuracy", "t", "SR_mean", "SR_se", "R_mean", "R_se", "Qg_mean", "Qg_se",
    ])
    .map_err(csv_err)?;
    for (k, g) in &groups {
        for t in 0..g.queries.mean.len() {
            let pick = |b: &Option<Band>, f: fn(&Band) -> &Vec<f64>| b.as_ref().and_then(|b| f(b).get(t).copied());
            w.write_record([
                k.benchmark.clone(),
                k.method.clone(),
                k.accuracy.clone(),
                (t + 1).to_string(),
                fmt(pick(&g.simple_regret, |b| &b.mean)),
                fmt(pick(&g.simple_regret, |b| &b.se)),
                fmt(pick(&g.cumulative_regret, |b| &b.mean)),
                fmt(pick(&g.cumulative_regret, |b| &b.se)),
                g.queries.mean[t].to_string(),
                g.queries.se[t].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CobolError::Io(e.to_string()))?;
    written.push(curves);

    let summary = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary).map_err(csv_err)?;
    w.write_record([
        "benchmark", "method", "accuracy", "runs", "failed", "final_SR_mean", "final_SR_se", "final_R_mean",
        "final_R_se", "Qg_mean", "Qg_se", "overhead_ms_mean", "overhead_ms_se",
    ])
    .map_err(csv_err)?;
    for (k, g) in &groups {
        let last = |b: &Option<Band>| b.as_ref().and_then(|b| Some((*b.mean.last()?, *b.se.last()?)));
        let sr = last(&g.simple_regret);
        let cr = last(&g.cumulative_regret);
        let q = last(&Some(g.queries.clone()));
        w.write_record([
            k.benchmark.clone(),
            k.method.clone(),
            k.accuracy.clone(),
            g.runs.to_string(),
            g.failed.to_string(),
            fmt(sr.map(|p| p.0)),
            fmt(sr.map(|p| p.1)),
            fmt(cr.map(|p| p.0)),
            fmt(cr.map(|p| p.1)),
            fmt(q.map(|p| p.0)),
            fmt(q.map(|p| p.1)),
            g.overhead_ms.0.to_string(),
            g.overhead_ms.1.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CobolError::Io(e.to_string()))?;
    written.push(summary);

    let mut by_bench: BTreeMap<&str, Vec<(&GroupKey, &GroupSummary)>> = BTreeMap::new();
    for (k, g) in &groups {
        by_bench.entry(k.benchmark.as_str()).or_default().push((k, g));
    }
    for (bench, gs) in by_bench {
        let metrics: [(&str, fn(&GroupSummary) -> Option<&Band>); 3] = [
            ("sr", |g| g.simple_regret.as_ref()),
            ("regret", |g| g.cumulative_regret.as_ref()),
            ("queries", |g| Some(&g.queries)),
        ];
        for (name, get) in metrics {
            let series: Vec<(String, &Band)> =
                gs.iter().filter_map(|(k, g)| get(g).map(|b| (k.label(), b))).collect();
            if series.iter().all(|(_, b)| b.mean.is_empty()) {
                continue;
            }
            let path = out_dir.join(format!("{bench}_{name}.svg"));
            plot_bands(&path, &format!("{bench}: {name}"), &series)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn plot_bands(path: &Path, title: &str, series: &[(String, &Band)]) -> Result<()> {
    let draw_err = |e: String| CobolError::Io(format!("{}: {e}", path.display()));
    let t_max = series.iter().map(|(_, b)| b.mean.len()).max().unwrap_or(1).max(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, b) in series {
        for (m, s) in b.mean.iter().zip(&b.se) {
            if m.is_finite() {
                lo = lo.min(m - s);
                hi = hi.max(m + s);
            }
        }
    }
    if !(lo < hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(1f64..t_max as f64, lo..hi)
        .map_err(|e| draw_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("t")
        .draw()
        .map_err(|e| draw_err(e.to_string()))?;
    for (i, (label, b)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts = |sign: f64| -> Vec<(f64, f64)> {
            b.mean
                .iter()
                .zip(&b.se)
                .enumerate()
                .map(|(t, (m, s))| ((t + 1) as f64, m + sign * s))
                .collect()
        };
        let mut band = pts(1.0);
        band.extend(pts(-1.0).into_iter().rev());
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
            .map_err(|e| draw_err(e.to_string()))?;
        chart
            .draw_series(LineSeries::new(pts(0.0), color.stroke_width(2)))
            .map_err(|e| draw_err(e.to_string()))?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(e.to_string()))?;
    root.present().map_err(|e| draw_err(e.to_string()))?;
    Ok(())
}
