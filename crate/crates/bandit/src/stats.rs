//! Seed-level summary statistics.

use epinet_core::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

fn student(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom")
}

/// Two-sided t confidence interval for the mean; `None` below two values.
pub fn t_interval(xs: &[f64], level: f64) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let q = student(n - 1.0).inverse_cdf(0.5 + level / 2.0);
    let half = q * sample_sd(xs) / n.sqrt();
    let m = mean(xs);
    Some((m - half, m + half))
}

/// Percentile bootstrap interval for the mean over `resamples` draws.
pub fn bootstrap_interval(xs: &[f64], level: f64, resamples: usize, rng: &mut Rng) -> Option<(f64, f64)> {
    if xs.len() < 2 || resamples == 0 {
        return None;
    }
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |p: f64| {
        let idx = (p * (resamples - 1) as f64).round() as usize;
        means[idx.min(resamples - 1)]
    };
    Some((at(alpha), at(1.0 - alpha)))
}

/// One-sided paired t-test of `mean(diffs) > 0`: (t statistic, p-value).
pub fn paired_t_greater(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len() as f64;
    let sd = sample_sd(diffs);
    let t = mean(diffs) / (sd / n.sqrt());
    if !t.is_finite() {
        let p = if mean(diffs) > 0.0 { 0.0 } else { 1.0 };
        return (t, p);
    }
    (t, 1.0 - student(n - 1.0).cdf(t))
}
