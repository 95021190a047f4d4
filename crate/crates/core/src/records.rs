//! Trial records and their JSON-lines persistence.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use boapta_circuit::SolverParams;
use serde::{Deserialize, Serialize};

use crate::dataset::PENALTY_Y;
use crate::error::CoreError;
use crate::simulator::RunOutcome;

/// Why a run was executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Default,
    Proposal,
    Random,
    /// Re-execution at the incumbent after a budget breach, or a frozen run.
    Incumbent,
    /// Last resort at the default parameters.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub circuit_id: String,
    pub x: SolverParams,
    /// Iterations of a converged run, [`PENALTY_Y`] otherwise.
    pub y: f64,
    /// Iterations actually spent.
    pub iterations: u64,
    /// Epoch of a campaign, or Monte-Carlo sample index.
    pub epoch: usize,
    pub kind: RunKind,
    pub budget: Option<u64>,
    pub converged: bool,
    pub halted: bool,
    pub wall_time: f64,
}

impl TrialRecord {
    pub fn new(circuit_id: &str, x: SolverParams, epoch: usize, kind: RunKind, budget: Option<u64>, out: &RunOutcome) -> Self {
        Self {
            circuit_id: circuit_id.to_string(),
            x,
            y: if out.converged { out.iterations as f64 } else { PENALTY_Y },
            iterations: out.iterations,
            epoch,
            kind,
            budget,
            converged: out.converged,
            halted: out.halted,
            wall_time: out.wall_time,
        }
    }

    /// The record with its wall-time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_time: 0.0, ..self.clone() }
    }
}

/// Running best `y` per circuit after each epoch, starting at epoch 0.
pub fn best_curves(records: &[TrialRecord]) -> BTreeMap<String, Vec<f64>> {
    let last = records.iter().map(|r| r.epoch).max().unwrap_or(0);
    let mut curves: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        let c = curves.entry(r.circuit_id.clone()).or_insert_with(|| vec![f64::INFINITY; last + 1]);
        c[r.epoch] = c[r.epoch].min(r.y);
    }
    for c in curves.values_mut() {
        for e in 1..c.len() {
            c[e] = c[e].min(c[e - 1]);
        }
    }
    curves
}

/// Lowest-`y` record per circuit; ties go to the earliest.
pub fn best_records(records: &[TrialRecord]) -> BTreeMap<String, &TrialRecord> {
    let mut best: BTreeMap<String, &TrialRecord> = BTreeMap::new();
    for r in records {
        match best.get(&r.circuit_id) {
            Some(b) if b.y <= r.y => {}
            _ => {
                best.insert(r.circuit_id.clone(), r);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Header { version: u32, command: String, config: serde_json::Value },
    Trial(TrialRecord),
}

/// Append-only JSON-lines trial log: a header line echoing the configuration,
/// then one line per trial.
pub struct TrialLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrialLog {
    pub fn create<C: Serialize>(path: &Path, command: &str, config: &C) -> Result<Self, CoreError> {
        let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
        let mut log = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        let config = serde_json::to_value(config).map_err(|e| CoreError::Format { what: "config", message: e.to_string() })?;
        log.write(&LogLine::Header { version: 1, command: command.to_string(), config })?;
        Ok(log)
    }

    /// Opens an existing log for appending.
    pub fn append(path: &Path) -> Result<Self, CoreError> {
        let file = OpenOptions::new().append(true).open(path).map_err(|e| CoreError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    fn write(&mut self, line: &LogLine) -> Result<(), CoreError> {
        let text = serde_json::to_string(line).map_err(|e| CoreError::Format { what: "trial log", message: e.to_string() })?;
        writeln!(self.out, "{text}").map_err(|e| CoreError::io(&self.path, e))
    }

    pub fn record(&mut self, r: &TrialRecord) -> Result<(), CoreError> {
        self.write(&LogLine::Trial(r.clone()))
    }

    pub fn flush(&mut self) -> Result<(), CoreError> {
        self.out.flush().map_err(|e| CoreError::io(&self.path, e))
    }
}

/// Header config and trials of a log file.
pub fn read_log(path: &Path) -> Result<(serde_json::Value, Vec<TrialRecord>), CoreError> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut config = serde_json::Value::Null;
    let mut trials = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line)
            .map_err(|e| CoreError::Format { what: "trial log", message: format!("line {}: {e}", n + 1) })?;
        match parsed {
            LogLine::Header { config: c, .. } => config = c,
            LogLine::Trial(t) => trials.push(t),
        }
    }
    Ok((config, trials))
}
