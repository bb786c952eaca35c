//! Treatment-versus-control comparison per impression bucket.
//!
//! For each (arm, seed, bucket) a rate is a ratio of sums, e.g. likes over
//! impressions. Each seed contributes the paired percent change
//! `100 * (treatment / control - 1)`; the table reports the mean over seeds
//! with a 95% interval (seed bootstrap or t). Seeds where either rate is
//! undefined are skipped, so an empty bucket stays empty instead of zero.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use epinet_core::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::metrics::MetricRow;
use crate::stats::{bootstrap_interval, mean, t_interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LikeRate,
    CompletionRate,
    WatchScoreRate,
    VvsRate,
    /// Fraction of the arm's impressions landing in the bucket.
    ImpressionShare,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::LikeRate,
        Metric::CompletionRate,
        Metric::WatchScoreRate,
        Metric::VvsRate,
        Metric::ImpressionShare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::LikeRate => "like_rate",
            Metric::CompletionRate => "completion_rate",
            Metric::WatchScoreRate => "watch_score_rate",
            Metric::VvsRate => "vvs_rate",
            Metric::ImpressionShare => "impression_share",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::LikeRate => "Likes per impression",
            Metric::CompletionRate => "Completions per impression",
            Metric::WatchScoreRate => "Watch score per impression",
            Metric::VvsRate => "Video view seconds score per impression",
            Metric::ImpressionShare => "Share of impressions",
        }
    }

    fn rate(&self, row: &MetricRow, arm_total: u64) -> Option<f64> {
        let (num, den) = match self {
            Metric::LikeRate => (row.likes as f64, row.impressions),
            Metric::CompletionRate => (row.completions as f64, row.impressions),
            Metric::WatchScoreRate => (row.ws_sum, row.impressions),
            Metric::VvsRate => (row.vvs_sum, row.impressions),
            Metric::ImpressionShare => (row.impressions as f64, arm_total),
        };
        (den > 0).then(|| num / den as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CiMethod {
    Bootstrap { resamples: usize },
    TInterval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub method: CiMethod,
    pub level: f64,
    /// Seed of the bootstrap resampling stream.
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            method: CiMethod::Bootstrap { resamples: 10_000 },
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub bucket_lo: u64,
    pub bucket_hi: Option<u64>,
    /// Seed-averaged rates over the paired seeds.
    pub control_rate: Option<f64>,
    pub treatment_rate: Option<f64>,
    pub pct_change: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub seeds: usize,
    pub significant: bool,
}

impl ComparisonRow {
    pub fn bucket_label(&self) -> String {
        match self.bucket_hi {
            Some(hi) => format!("[{},{})", self.bucket_lo, hi),
            None => format!("[{},inf)", self.bucket_lo),
        }
    }
}

type Key = (String, u64, u64);

/// Percent-change table over every metric and bucket, metric-major.
pub fn compare(rows: &[MetricRow], opts: &CompareOptions) -> Result<Vec<ComparisonRow>> {
    let arms: BTreeSet<&str> = rows.iter().map(|r| r.arm.as_str()).collect();
    for needed in ["treatment", "control"] {
        if !arms.contains(needed) {
            return Err(HarnessError::Analysis(format!("no `{needed}` rows in metrics")));
        }
    }
    let mut totals: BTreeMap<(String, u64), u64> = BTreeMap::new();
    let mut cells: BTreeMap<Key, &MetricRow> = BTreeMap::new();
    let mut buckets: BTreeMap<u64, Option<u64>> = BTreeMap::new();
    let mut seeds: BTreeSet<u64> = BTreeSet::new();
    for r in rows {
        *totals.entry((r.arm.clone(), r.seed)).or_default() += r.impressions;
        if cells.insert((r.arm.clone(), r.seed, r.bucket_lo), r).is_some() {
            return Err(HarnessError::Analysis(format!(
                "duplicate row for {} seed {} bucket {}",
                r.arm, r.seed, r.bucket_lo
            )));
        }
        buckets.insert(r.bucket_lo, r.bucket_hi);
        seeds.insert(r.seed);
    }
    if seeds.len() < 2 {
        return Err(HarnessError::Analysis(format!(
            "comparison needs at least 2 seeds, metrics hold {}",
            seeds.len()
        )));
    }
    let mut rng = Rng::stream(opts.seed, "compare.bootstrap");
    let mut out = Vec::new();
    for metric in Metric::ALL {
        for (&lo, &hi) in &buckets {
            let rate = |arm: &str, seed: u64| {
                let row = cells.get(&(arm.to_string(), seed, lo))?;
                metric.rate(row, totals[&(arm.to_string(), seed)])
            };
            let mut t_rates = Vec::new();
            let mut c_rates = Vec::new();
            let mut changes = Vec::new();
            for &s in &seeds {
                if let (Some(t), Some(c)) = (rate("treatment", s), rate("control", s)) {
                    t_rates.push(t);
                    c_rates.push(c);
                    if c > 0.0 {
                        changes.push(100.0 * (t / c - 1.0));
                    } else if t == 0.0 {
                        changes.push(0.0);
                    }
                }
            }
            let ci = match opts.method {
                CiMethod::TInterval => t_interval(&changes, opts.level),
                CiMethod::Bootstrap { resamples } => bootstrap_interval(&changes, opts.level, resamples, &mut rng),
            };
            let avg = |xs: &[f64]| (!xs.is_empty()).then(|| mean(xs));
            out.push(ComparisonRow {
                metric,
                bucket_lo: lo,
                bucket_hi: hi,
                control_rate: avg(&c_rates),
                treatment_rate: avg(&t_rates),
                pct_change: avg(&changes),
                ci_lo: ci.map(|c| c.0),
                ci_hi: ci.map(|c| c.1),
                seeds: changes.len(),
                significant: ci.is_some_and(|(a, b)| a > 0.0 || b < 0.0),
            });
        }
    }
    Ok(out)
}

pub fn write_comparison<W: Write>(w: W, rows: &[ComparisonRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_comparison<R: Read>(r: R) -> csv::Result<Vec<ComparisonRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn read_comparison_file(path: &Path) -> Result<Vec<ComparisonRow>> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_comparison(f).map_err(|e| HarnessError::format(path, e.to_string()))
}

/// Plain-text table for terminals.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:+.2}"));
    let mut s = format!(
        "{:<18} {:<14} {:>9} {:>9} {:>9} {:>6}  sig\n",
        "metric", "bucket", "change%", "ci_lo", "ci_hi", "seeds"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<18} {:<14} {:>9} {:>9} {:>9} {:>6}  {}\n",
            r.metric.name(),
            r.bucket_label(),
            fmt(r.pct_change),
            fmt(r.ci_lo),
            fmt(r.ci_hi),
            r.seeds,
            if r.significant { "*" } else { "" }
        ));
    }
    s
}
