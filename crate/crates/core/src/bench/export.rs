//! JSON-lines and CSV persistence of run records.
//!
//! A JSON-lines file holds one `run` header line per run followed by one
//! `step` line per optimisation step. Every line carries `schema`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::functions::Benchmark;
use super::metrics::compute_metrics;
use crate::config::CobolConfig;
use crate::error::{CobolError, Result};
use crate::record::{InitialLabel, InitialObservation, Method, RunRecord, StepRecord, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            _ => Err(CobolError::invalid("format", format!("expected jsonl or csv, got {s}"))),
        }
    }
}

pub const CSV_HEADER: [&str; 10] = ["run_id", "t", "arm", "queried", "label", "y", "SR", "R", "Qg", "overhead_ms"];

#[derive(Serialize, Deserialize)]
struct RunHeader {
    run_id: String,
    method: Method,
    benchmark: Option<String>,
    accuracy: Option<f64>,
    seed: u64,
    config: CobolConfig,
    initial: Vec<InitialObservation>,
    initial_labels: Vec<InitialLabel>,
    n_steps: usize,
    error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Run(RunHeader),
    Step {
        run_id: String,
        #[serde(flatten)]
        step: StepRecord,
    },
}

#[derive(Serialize, Deserialize)]
struct Versioned {
    schema: u32,
    #[serde(flatten)]
    line: Line,
}

fn io_err(path: &Path, e: std::io::Error) -> CobolError {
    CobolError::Io(format!("{}: {e}", path.display()))
}

/// Writes records as JSON lines to any writer.
pub fn write_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    for r in records {
        let header = Line::Run(RunHeader {
            run_id: r.run_id.clone(),
            method: r.method,
            benchmark: r.benchmark.clone(),
            accuracy: r.accuracy,
            seed: r.seed,
            config: r.config.clone(),
            initial: r.initial.clone(),
            initial_labels: r.initial_labels.clone(),
            n_steps: r.steps.len(),
            error: r.error.clone(),
        });
        write_line(&mut out, header)?;
        for s in &r.steps {
            write_line(
                &mut out,
                Line::Step {
                    run_id: r.run_id.clone(),
                    step: s.clone(),
                },
            )?;
        }
    }
    out.flush().map_err(|e| CobolError::Io(e.to_string()))
}

fn write_line<W: Write>(out: &mut W, line: Line) -> Result<()> {
    let v = Versioned {
        schema: SCHEMA_VERSION,
        line,
    };
    serde_json::to_writer(&mut *out, &v)?;
    out.write_all(b"\n").map_err(|e| CobolError::Io(e.to_string()))
}

/// Parses JSON lines produced by [`write_jsonl`]. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    let mut runs: Vec<RunRecord> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CobolError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Versioned =
            serde_json::from_str(&line).map_err(|e| CobolError::Format(format!("line {}: {e}", i + 1)))?;
        if v.schema != SCHEMA_VERSION {
            return Err(CobolError::Format(format!("line {}: unsupported schema {}", i + 1, v.schema)));
        }
        match v.line {
            Line::Run(h) => runs.push(RunRecord {
                run_id: h.run_id,
                method: h.method,
                benchmark: h.benchmark,
                accuracy: h.accuracy,
                seed: h.seed,
                config: h.config,
                initial: h.initial,
                initial_labels: h.initial_labels,
                steps: Vec::with_capacity(h.n_steps),
                error: h.error,
            }),
            Line::Step { run_id, step } => {
                let run = runs
                    .iter_mut()
                    .rev()
                    .find(|r| r.run_id == run_id)
                    .ok_or_else(|| CobolError::Format(format!("line {}: step for unknown run {run_id}", i + 1)))?;
                run.steps.push(step);
            }
        }
    }
    Ok(runs)
}

/// Writes one row per (run, step) with the derived metric series.
///
/// Regret columns are empty when the benchmark is unknown or has no
/// recorded optimum.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let bench = r.benchmark.as_deref().and_then(|b| Benchmark::by_name(b).ok());
        let metrics = bench.as_ref().map(|b| compute_metrics(r, b)).transpose()?;
        let mut q = 0usize;
        for (i, s) in r.steps.iter().enumerate() {
            q += s.queried as usize;
            let sr = metrics.as_ref().and_then(|m| m.simple_regret.as_ref()).map(|v| v[i]);
            let cr = metrics.as_ref().and_then(|m| m.cumulative_regret.as_ref()).map(|v| v[i]);
            w.write_record([
                r.run_id.clone(),
                s.t.to_string(),
                s.arm.name().to_string(),
                s.queried.to_string(),
                opt(s.label),
                opt(s.y),
                opt(sr),
                opt(cr),
                q.to_string(),
                s.overhead_ms.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CobolError::Io(e.to_string()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> CobolError {
    CobolError::Io(e.to_string())
}

/// Writes records to `path` in the given format, replacing the file.
pub fn export_records(records: &[RunRecord], format: ExportFormat, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let w = BufWriter::new(f);
    match format {
        ExportFormat::Jsonl => write_jsonl(records, w),
        ExportFormat::Csv => write_csv(records, w),
    }
}

pub fn import_records(path: &Path) -> Result<Vec<RunRecord>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_jsonl(BufReader::new(f))
}

/// File name used for a run inside an output directory.
pub fn run_file_name(run_id: &str) -> String {
    let safe: String = run_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.jsonl")
}

/// Appends a run to its own file in `dir` and syncs it.
pub fn append_run(dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(run_file_name(&record.run_id));
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(f);
    write_jsonl(std::slice::from_ref(record), &mut w)?;
    let f = w.into_inner().map_err(|e| CobolError::Io(e.to_string()))?;
    f.sync_all().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Loads every `*.jsonl` file under `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(import_records(&f)?);
    }
    Ok(out)
}
