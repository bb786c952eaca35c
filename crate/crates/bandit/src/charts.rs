//! Self-contained SVG bar charts of percent change with error bars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::compare::{ComparisonRow, Metric};
use crate::error::{HarnessError, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

/// Vertical range covering zero, every estimate and every interval endpoint,
/// widened to whole multiples of a 1-2-5 tick step.
pub fn axis_range(rows: &[&ComparisonRow]) -> (f64, f64, f64) {
    let values = rows
        .iter()
        .flat_map(|r| [r.pct_change, r.ci_lo, r.ci_hi])
        .flatten()
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Chart of one metric across buckets; buckets without an estimate are
/// left blank and marked `n/a`.
pub fn render(metric: Metric, rows: &[ComparisonRow]) -> String {
    let rows: Vec<&ComparisonRow> = rows.iter().filter(|r| r.metric == metric).collect();
    let (lo, hi, step) = axis_range(&rows);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{} (treatment vs control, % change)</text>"#,
        WIDTH / 2.0,
        esc(metric.title())
    );
    let ticks = ((hi - lo) / step).round() as i64;
    for i in 0..=ticks {
        let v = lo + i as f64 * step;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#e0e0e0"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            fmt_tick(v, step)
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/>"##,
        y(0.0),
        WIDTH - RIGHT,
        y(0.0)
    );
    let n = rows.len().max(1) as f64;
    let slot = plot_w / n;
    for (i, r) in rows.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            esc(&r.bucket_label())
        );
        match r.pct_change {
            None => {
                let _ = writeln!(
                    s,
                    r##"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" fill="#999">n/a</text>"##,
                    y(0.0) - 4.0
                );
            }
            Some(v) => {
                let w = slot * 0.6;
                let (top, bot) = (y(v.max(0.0)), y(v.min(0.0)));
                let fill = if r.significant { "#3b6fb6" } else { "#9bb3d6" };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"/>"#,
                    cx - w / 2.0,
                    (bot - top).max(0.5)
                );
                if let (Some(a), Some(b)) = (r.ci_lo, r.ci_hi) {
                    let cap = slot * 0.15;
                    let _ = writeln!(
                        s,
                        r##"<path d="M{cx:.2} {:.2}V{:.2}M{:.2} {:.2}H{:.2}M{:.2} {:.2}H{:.2}" stroke="#111" fill="none"/>"##,
                        y(a),
                        y(b),
                        cx - cap,
                        y(a),
                        cx + cap,
                        cx - cap,
                        y(b),
                        cx + cap
                    );
                }
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">impressions before serve</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0
    );
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.decimals$}")
}

/// One chart per metric in `dir`; returns the written paths.
pub fn write_all(dir: &Path, rows: &[ComparisonRow]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths = Vec::new();
    for m in Metric::ALL {
        let p = dir.join(format!("{}.svg", m.name()));
        std::fs::write(&p, render(m, rows)).map_err(|e| HarnessError::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
