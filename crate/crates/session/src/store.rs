//! Append-only per-session event logs.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SessionError;
use crate::session::CreateRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub(crate) enum Event {
    Created { session_id: String, request: CreateRequest },
    Label { label: u8, request_id: String },
    Observation { y: f64, request_id: String },
    /// Measured compute time of a finished step, kept so replay restores it.
    Timing { t: usize, overhead_ms: f64 },
}

#[derive(Debug)]
pub(crate) struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    /// Creates the log; fails if it already exists.
    pub fn create(dir: &Path, session_id: &str, first: &Event) -> Result<Self, SessionError> {
        std::fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, session_id);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path)?;
        write_line(&mut f, first)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(Self { path })
    }

    pub fn open(path: PathBuf) -> Self {
        Self { path }
    }

    /// Appends one event and syncs it to disk.
    pub fn append(&self, event: &Event) -> Result<(), SessionError> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        write_line(&mut f, event)
    }

    /// Reads all complete events. A torn final line (a write that never
    /// returned) is dropped.
    pub fn read(&self) -> Result<Vec<Event>, SessionError> {
        let reader = BufReader::new(File::open(&self.path)?);
        let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
        let mut events = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(e) => events.push(e),
                Err(e) if i + 1 == lines.len() => {
                    log::warn!("{}: dropping torn final line: {e}", self.path.display());
                }
                Err(e) => {
                    return Err(SessionError::Corrupt(format!("{}:{}: {e}", self.path.display(), i + 1)));
                }
            }
        }
        Ok(events)
    }
}

fn write_line(f: &mut File, event: &Event) -> Result<(), SessionError> {
    let mut line = serde_json::to_string(event).map_err(|e| SessionError::Storage(e.to_string()))?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_all()?;
    Ok(())
}

/// Session log files in `dir`, sorted by name.
pub(crate) fn list_logs(dir: &Path) -> Result<Vec<PathBuf>, SessionError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    out.sort();
    Ok(out)
}
