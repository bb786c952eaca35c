//! Interaction logs: one tab-separated record per impression, with a
//! header line. Floats use the shortest representation that parses back to
//! the same value, so logs round-trip exactly.
//!
//! Columns: `step user item impressions ws like share vvs watch_seconds
//! video_length completed_count expected_reward regret`, where
//! `impressions` is the item's count before this serve and `regret` is the
//! impression's share of the step regret (`oracle / M - expected_reward`).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use epinet_core::env::{Interaction, StepOutcome};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub user: usize,
    pub item: u64,
    pub impressions: u64,
    pub ws: f64,
    pub like: f64,
    pub share: f64,
    pub vvs: f64,
    pub watch_seconds: f64,
    pub video_length: f64,
    pub completed_count: u32,
    pub expected_reward: f64,
    pub regret: f64,
}

impl LogRecord {
    pub fn completed(&self) -> bool {
        self.completed_count >= 1
    }
}

fn record(it: &Interaction, expected: f64, regret: f64) -> LogRecord {
    LogRecord {
        step: it.step,
        user: it.user_id,
        item: it.item_id.0,
        impressions: it.impression_count,
        ws: it.labels[0],
        like: it.labels[1],
        share: it.labels[2],
        vvs: it.labels[3],
        watch_seconds: it.watch_seconds,
        video_length: it.video_length,
        completed_count: it.completed_count,
        expected_reward: expected,
        regret,
    }
}

/// One record per served item of a step.
pub fn records(out: &StepOutcome) -> Vec<LogRecord> {
    let per_slot = out.oracle_value / out.interactions.len().max(1) as f64;
    out.interactions
        .iter()
        .zip(&out.expected_rewards)
        .map(|(it, &e)| record(it, e, per_slot - e))
        .collect()
}

pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self::new(BufWriter::new(f)))
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: csv::WriterBuilder::new().delimiter(b'\t').from_writer(w),
        }
    }

    pub fn write(&mut self, r: &LogRecord) -> csv::Result<()> {
        self.inner.serialize(r)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

pub fn read_log<R: Read>(r: R) -> csv::Result<Vec<LogRecord>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(r)
        .deserialize()
        .collect()
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogRecord>> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_log(f).map_err(|e| HarnessError::format(path, e.to_string()))
}
