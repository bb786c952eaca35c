//! Per-bucket engagement metrics.
//!
//! An impression whose item had `c` earlier impressions falls in the bucket
//! `[b_i, b_{i+1})` containing `c`; counts at or past the last cut point go
//! to an open bucket written with an empty `bucket_hi`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::logs::LogRecord;

pub const METRICS_HEADER: &str =
    "arm,seed,bucket_lo,bucket_hi,impressions,likes,completions,ws_sum,vvs_sum,cumulative_regret";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub arm: String,
    pub seed: u64,
    pub bucket_lo: u64,
    pub bucket_hi: Option<u64>,
    pub impressions: u64,
    pub likes: u64,
    pub completions: u64,
    pub ws_sum: f64,
    pub vvs_sum: f64,
    pub cumulative_regret: f64,
}

/// Strictly increasing cut points starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSpec {
    cuts: Vec<u64>,
}

impl BucketSpec {
    pub fn new(cuts: Vec<u64>) -> Result<Self> {
        if cuts.first() != Some(&0) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config(vec![format!(
                "bucket cut points must start at 0 and strictly increase, got {cuts:?}"
            )]));
        }
        Ok(Self { cuts })
    }

    /// Number of buckets, including the open one.
    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self, i: usize) -> (u64, Option<u64>) {
        (self.cuts[i], self.cuts.get(i + 1).copied())
    }

    pub fn index(&self, count: u64) -> usize {
        self.cuts.partition_point(|&c| c <= count) - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    impressions: u64,
    likes: u64,
    completions: u64,
    ws_sum: f64,
    vvs_sum: f64,
    regret: f64,
}

/// Streaming per-bucket sums for one (arm, seed).
#[derive(Debug, Clone)]
pub struct BucketAggregator {
    spec: BucketSpec,
    tallies: Vec<Tally>,
}

impl BucketAggregator {
    pub fn new(spec: BucketSpec) -> Self {
        let tallies = vec![Tally::default(); spec.len()];
        Self { spec, tallies }
    }

    pub fn add(&mut self, r: &LogRecord) {
        let t = &mut self.tallies[self.spec.index(r.impressions)];
        t.impressions += 1;
        t.likes += u64::from(r.like > 0.5);
        t.completions += u64::from(r.completed());
        t.ws_sum += r.ws;
        t.vvs_sum += r.vvs;
        t.regret += r.regret;
    }

    pub fn total_impressions(&self) -> u64 {
        self.tallies.iter().map(|t| t.impressions).sum()
    }

    pub fn rows(&self, arm: &str, seed: u64) -> Vec<MetricRow> {
        self.tallies
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (lo, hi) = self.spec.bounds(i);
                MetricRow {
                    arm: arm.to_string(),
                    seed,
                    bucket_lo: lo,
                    bucket_hi: hi,
                    impressions: t.impressions,
                    likes: t.likes,
                    completions: t.completions,
                    ws_sum: t.ws_sum,
                    vvs_sum: t.vvs_sum,
                    cumulative_regret: t.regret,
                }
            })
            .collect()
    }
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricRow]) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(METRICS_HEADER.split(','))?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> csv::Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected metrics header `{}`", header.join(",")),
        )));
    }
    rdr.deserialize().collect()
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricRow>> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_metrics(f).map_err(|e| HarnessError::format(path, e.to_string()))
}
