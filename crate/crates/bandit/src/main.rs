use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use epinet_bandit::compare::{compare, render_table, write_comparison, CiMethod, CompareOptions};
use epinet_bandit::config_file::{describe_defaults, load, ConfigSource};
use epinet_bandit::metrics::read_metrics_file;
use epinet_bandit::{charts, compare::read_comparison_file, runner, HarnessError, Result};

#[derive(Parser)]
#[command(name = "epinet-bandit", version, about = "Epinet Thompson sampling A/B simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Configuration file of dotted `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Override one key, e.g. `--set env.num_items=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ci {
    Bootstrap,
    T,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of the treatment and control arms.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (default: run.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percent change per bucket with confidence intervals.
    Compare {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "bootstrap")]
        ci: Ci,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Render SVG charts from a run's comparison table.
    Chart { run_dir: PathBuf },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fault injection: corrupt the analytic gradient of this tensor.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Fit the like and share biases to the configured marginal rates.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 100_000)]
        serves: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print every configuration key with its default.
    Defaults,
}

fn config_of(args: &ConfigArgs) -> Result<epinet_core::config::ExperimentConfig> {
    let file_text = args
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e)))
        .transpose()?;
    load(&ConfigSource {
        paper_preset: matches!(args.preset, Some(Preset::Paper)),
        file_text,
        overrides: args.overrides.clone(),
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let config = config_of(&config)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&config.run.output_dir));
            let report = runner::run_experiment(&config, &dir)?;
            for o in &report.outcomes {
                let s = &o.summary;
                println!(
                    "{:<9} seed {:>3}  {:<14} expected reward {:>10.1}  regret {:>9.1}  late regret/step {:.3}",
                    s.arm, s.seed, s.policy, s.expected_reward, s.cumulative_regret, s.late_regret
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::Compare {
            run_dir,
            ci,
            resamples,
            level,
        } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(HarnessError::Config(vec![format!("--level must lie in (0, 1), got {level}")]));
            }
            let rows = read_metrics_file(&run_dir.join("metrics.csv"))?;
            let opts = CompareOptions {
                method: match ci {
                    Ci::Bootstrap => CiMethod::Bootstrap { resamples },
                    Ci::T => CiMethod::TInterval,
                },
                level,
                seed: 0,
            };
            let table = compare(&rows, &opts)?;
            let path = run_dir.join("comparison.csv");
            let f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            write_comparison(f, &table).map_err(|e| HarnessError::format(&path, e.to_string()))?;
            print!("{}", render_table(&table));
        }
        Command::Chart { run_dir } => {
            let table = read_comparison_file(&run_dir.join("comparison.csv"))
                .map_err(|e| HarnessError::Analysis(format!("{e} (run `compare` first)")))?;
            for p in charts::write_all(&run_dir.join("charts"), &table)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Gradcheck { seed, corrupt } => {
            let (reports, text) = epinet_bandit::gradcheck(seed, corrupt)?;
            print!("{text}");
            if let Some(bad) = reports.iter().find(|r| !r.passed()) {
                return Err(HarnessError::Numerical(format!(
                    "{} exceeds relative error {:e} ({:.3e})",
                    bad.component,
                    bad.rel_tol,
                    bad.max_error()
                )));
            }
        }
        Command::Calibrate { config, serves, seed } => {
            let config = config_of(&config)?;
            let env = config.env;
            let r = epinet_core::env::calibrate(env.clone(), seed, env.like_rate_target, env.share_rate_target, serves)?;
            println!("env.truth.like_bias = {:.4}", r.like_bias);
            println!("env.truth.share_bias = {:.4}", r.share_bias);
            println!(
                "achieved over {} random serves: ws {:.4}  like {:.4}  share {:.4}  vvs {:.4}",
                r.serves, r.achieved[0], r.achieved[1], r.achieved[2], r.achieved[3]
            );
        }
        Command::Defaults => print!("{}", describe_defaults()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
