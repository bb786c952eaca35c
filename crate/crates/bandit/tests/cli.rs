use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epinet-bandit"))
        .args(args)
        .env_remove("EPINET_BANDIT_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn small_run(out: &Path, seeds: &str) -> Output {
    cli(&[
        "run",
        "--set",
        "run.horizon=30",
        "--set",
        &format!("run.seeds={seeds}"),
        "--set",
        "env.num_items=40",
        "--set",
        "env.slate_size=3",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn run_compare_chart_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = small_run(&out, "[0,1,2]");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cli(&["compare", out.to_str().unwrap(), "--ci", "t"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("like_rate"));
    assert!(out.join("comparison.csv").exists());
    let o = cli(&["chart", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(out.join("charts").join("impression_share.svg").exists());
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "run.horizon = 5\nrun.seeds = [4, 5]\nenv.num_items = 30\nrun.write_logs = false\n").unwrap();
    let out = dir.path().join("r");
    let o = cli(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(text.contains("run.horizon = 5\n") && text.contains("run.seeds = [4, 5]\n"));
}

#[test]
fn bad_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "run",
        "--set",
        "env.bogus=1",
        "--set",
        "env.slate_size=oops",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("env.bogus") && err.contains("env.slate_size"), "{err}");
    let o = cli(&["run", "--config", "/nonexistent/c.toml", "--out", "/tmp/x"]);
    assert_ne!(code(&o), 0);
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let o = cli(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let listing = String::from_utf8_lossy(&o.stdout).to_string();
    let tensor = listing
        .lines()
        .filter(|l| l.starts_with("    ") && !l.contains("frozen"))
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .next()
        .unwrap();
    let o = cli(&["gradcheck", "--corrupt", &tensor]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn comparison_without_an_arm_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    assert_eq!(code(&small_run(&out, "[0,1]")), 0);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let kept: Vec<&str> = metrics.lines().filter(|l| !l.starts_with("control,")).collect();
    std::fs::write(out.join("metrics.csv"), kept.join("\n") + "\n").unwrap();
    let o = cli(&["compare", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn defaults_and_calibrate_print() {
    let o = cli(&["defaults"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("env.num_items = 500"));
    let o = cli(&["calibrate", "--serves", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
