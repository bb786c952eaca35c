//! Experiment harness around `epinet-core`: configuration files, seeded
//! A/B runs, interaction logs, bucketed metrics, comparisons with
//! confidence intervals, SVG charts and parameter checkpoints.

pub mod charts;
pub mod checkpoint;
pub mod compare;
pub mod config_file;
pub mod error;
pub mod logs;
pub mod metrics;
pub mod runner;
pub mod stats;

pub use error::{HarnessError, Result};

use epinet_core::gradcheck::{standard_suite, GradcheckOptions, GradcheckReport};

/// Run the finite-difference suites; a failing component is a numerical error.
pub fn gradcheck(seed: u64, corrupt: Option<String>) -> Result<(Vec<GradcheckReport>, String)> {
    let opts = GradcheckOptions {
        corrupt,
        ..GradcheckOptions::default()
    };
    let reports = standard_suite(seed, &opts)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&format!(
            "{:<14} max relative error {:.3e}  {}\n",
            r.component,
            r.max_error(),
            if r.passed() { "ok" } else { "FAIL" }
        ));
        for t in &r.tensors {
            text.push_str(&format!("    {:<40} {:>6} entries  {:.3e}\n", t.name, t.entries, t.max_error));
        }
        for f in &r.frozen {
            text.push_str(&format!("    {f:<40} frozen\n"));
        }
    }
    Ok((reports, text))
}
