//! Line-delimited JSON search logs.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::generate::Phase;
use crate::resource::ResourceProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Exploration candidate entered the pool.
    Admitted,
    /// Valid exploration candidate that the pool turned away.
    NotAdmitted,
    /// Refinement candidate replaced the base.
    Accepted,
    /// Valid refinement candidate that did not beat the base.
    NotImproved,
    /// Failed before scoring or could not be scored.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    StopThreshold,
    Budget,
    TransportExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub generator: String,
    pub candidate: Option<String>,
    pub verdict: Verdict,
    pub reason: Option<String>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub pool_best: Option<f64>,
    pub pool_worst: Option<f64>,
    pub pool_size: usize,
    pub base_score: Option<f64>,
    /// The phase switched to refinement after this iteration.
    pub transitioned: bool,
    pub attempts: usize,
    pub duration_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub best: String,
    pub mu: f64,
    pub profile: ResourceProfile,
    pub iterations: usize,
    /// `0` means the initial architecture already met the threshold.
    pub transition_iteration: Option<usize>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration(IterationRecord),
    Summary(SearchSummary),
}

/// Append-only destination for log records.
pub trait RecordSink {
    fn emit(&mut self, record: &LogRecord) -> io::Result<()>;
}

impl RecordSink for Vec<LogRecord> {
    fn emit(&mut self, record: &LogRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl RecordSink for NullSink {
    fn emit(&mut self, _: &LogRecord) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON object per line, flushed after each record.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> RecordSink for JsonlSink<W> {
    fn emit(&mut self, record: &LogRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn read_log<R: BufRead>(input: R) -> io::Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(records)
}
