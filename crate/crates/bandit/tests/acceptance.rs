//! End-to-end acceptance checks. One line per criterion is printed; the test
//! fails if any criterion fails.

use std::time::{Duration, Instant};

use epinet_bandit::metrics::{read_metrics, write_metrics, MetricRow};
use epinet_bandit::runner::{run_all, run_experiment, ArmOutcome};
use epinet_bandit::stats::{bootstrap_interval, mean, paired_t_greater};
use epinet_core::agents::{Agent, AgentModel};
use epinet_core::config::{ExperimentConfig, Policy};
use epinet_core::enn::{EpinetHead, EpinetShape, EpistemicIndex, EpistemicNet};
use epinet_core::env::{calibrate, vvs, watch_score, EnvConfig, Environment, ItemSpec, LIKE};
use epinet_core::gradcheck::{standard_suite, GradcheckOptions};
use epinet_core::model::{build_overarch_input, overarch_dim, EpinetModel};
use epinet_core::nn::{bce_with_logit, sigmoid, DenseNet, Optimizer};
use epinet_core::{NamedParams, Rng, Tensor2};
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1. Gradient fidelity

fn gradient_fidelity() -> Verdict {
    let t = Instant::now();
    let reports = standard_suite(0, &GradcheckOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let worst = reports.iter().map(|r| r.max_error()).fold(0.0, f64::max);
    let components: Vec<&str> = reports.iter().map(|r| r.component.as_str()).collect();
    let pass = reports.iter().all(|r| r.passed()) && elapsed < Duration::from_secs(30);
    verdict(
        pass,
        format!(
            "{components:?} worst relative error {worst:.2e} (< 1e-4), {:.1}s (< 30s)",
            secs(elapsed)
        ),
    )
}

// 2. Label formulas against a hand-written case table

fn ws_case(len: f64, watched: f64, completed: u32) -> f64 {
    let rule_hit = if len < 10.0 {
        completed >= 2
    } else if len < 20.0 {
        completed >= 1
    } else {
        watched >= 20.0
    };
    if rule_hit {
        1.0
    } else {
        0.0
    }
}

fn vvs_case(watched: f64) -> f64 {
    let bands = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];
    match bands.iter().position(|&upper| watched < upper) {
        Some(k) => k as f64 / 9.0,
        None => 1.0,
    }
}

fn label_exactness() -> Verdict {
    let lengths = [5.0, 9.99, 10.0, 15.0, 19.99, 20.0, 60.0, 90.0, 120.0];
    let (mut cases, mut mismatches) = (0usize, 0usize);
    for &len in &lengths {
        for step in 0..=480 {
            let w = 0.5 * step as f64;
            for c in 0..=2 {
                cases += 2;
                mismatches += usize::from(watch_score(len, w, c) != ws_case(len, w, c));
                mismatches += usize::from(vvs(w) != vvs_case(w));
            }
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches over {cases} grid cases"))
}

// 3. Overarch width law

fn shape_law() -> Verdict {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 256,
        ..ProptestConfig::default()
    });
    let law = runner.run(&(1usize..=16, 1usize..=6, 0u64..1000), |(d, k, seed)| {
        let mut rng = Rng::new(seed);
        let user: Vec<f64> = (0..d * k).map(|_| rng.normal()).collect();
        let item: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let x = build_overarch_input(&user, &item, k).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if x.len() != d * (2 * k + 1) || overarch_dim(d, k) != x.len() {
            return Err(TestCaseError::fail(format!("d={d} K={k}: width {}", x.len())));
        }
        Ok(())
    });
    let preset = ExperimentConfig::paper_preset();
    let shape = preset.model_shape();
    let model = EpinetModel::new(
        &shape,
        0,
        &mut Rng::stream(0, "init.towers"),
        &mut Rng::stream(0, "init.prior"),
    )
    .unwrap();
    let user = Tensor2::zeros(1, shape.user_features);
    let items = Tensor2::zeros(3, shape.item_features);
    let width = model.overarch_inputs(&user, &items).unwrap().cols();
    let pass = law.is_ok() && shape.overarch_dim() == 1152 && width == 1152;
    verdict(
        pass,
        format!(
            "256 random (d, K) cases: {}; paper preset d={} K={} gives {width} (expect 1152)",
            if law.is_ok() { "law holds" } else { "law violated" },
            shape.embed_dim,
            shape.num_tasks
        ),
    )
}

// 4. ENN equivalences

fn enn_equivalences() -> Verdict {
    let mut rng = Rng::new(4);
    let base = DenseNet::new(&[6, 16, 1], &mut rng).unwrap();
    let x = Tensor2::from_fn(20, 6, |_, _| rng.normal());
    let point = EpistemicNet::point_estimate(base.clone()).unwrap();
    let ens = EpistemicNet::deep_ensemble(vec![base.clone()]).unwrap();
    let drop = EpistemicNet::mc_dropout(base.clone()).unwrap();

    let p = point.predict(&x, &EpistemicIndex::Gaussian(vec![0.7])).unwrap();
    let ensemble_same = p == ens.predict(&x, &EpistemicIndex::Particle(1)).unwrap()
        && point.marginal_prediction(&x, 100, &mut Rng::new(1)).unwrap()
            == ens.marginal_prediction(&x, 100, &mut Rng::new(1)).unwrap();
    let direct = base.predict(&x).unwrap();
    let dropout_same = drop.predict(&x, &EpistemicIndex::Mask(vec![1.0; 6])).unwrap() == p
        && direct.data() == p.as_slice();
    let zero_variance = point
        .marginal_prediction(&x, 100, &mut Rng::new(2))
        .unwrap()
        .iter()
        .all(|&(_, v)| v == 0.0);

    // train a Thompson-sampling agent for 10^4 updates and compare prior hashes
    let (config, specs) = dominant_pool(0);
    let mut env = Environment::with_items(config.env.clone(), 0, &specs).unwrap();
    let mut agent = Agent::new(config.agent_spec(Policy::EpinetTs), 0).unwrap();
    let prior_hash = |a: &Agent| match a.model() {
        AgentModel::Epinet(m) => m.head().prior().param_fingerprint(),
        _ => unreachable!(),
    };
    let head_hash = |a: &Agent| match a.model() {
        AgentModel::Epinet(m) => m.head().base().param_fingerprint(),
        _ => unreachable!(),
    };
    let (before, base_before) = (prior_hash(&agent), head_hash(&agent));
    for _ in 0..10_000 {
        let a = agent.act(&env.current_user(), env.pool()).unwrap();
        let out = env.step(&a).unwrap();
        agent.observe_and_update(&out.interactions).unwrap();
    }
    let prior_frozen = prior_hash(&agent) == before && head_hash(&agent) != base_before;

    verdict(
        ensemble_same && dropout_same && zero_variance && prior_frozen,
        format!(
            "ensemble(N=1) = point: {ensemble_same}; all-ones dropout = base: {dropout_same}; \
             point variance 0 over 100 indices: {zero_variance}; prior hash fixed over 10^4 updates \
             ({before:016x}): {prior_frozen}"
        ),
    )
}

// 5. Posterior concentration

fn epinet_head(seed: u64, dim: usize) -> EpinetHead {
    let shape = EpinetShape {
        input_dim: dim,
        base_hidden: vec![64, 32],
        epinet_hidden: vec![64, 32],
        index_dim: 5,
    };
    EpinetHead::new(&shape, 1.0, &mut Rng::stream(seed, "init"), &mut Rng::stream(seed, "prior")).unwrap()
}

fn variance_ratio(seed: u64) -> f64 {
    let dim = 16;
    let n = 64;
    let mut rng = Rng::stream(seed, "data");
    let x = Tensor2::from_fn(n, dim, |_, _| rng.normal());
    let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..n)
        .map(|r| {
            let s: f64 = x.row(r).iter().zip(&w).map(|(a, b)| a * b).sum();
            f64::from(u8::from(rng.bernoulli(sigmoid(s))))
        })
        .collect();
    let mut net = EpistemicNet::epinet(epinet_head(seed, dim));
    let mean_var = |net: &EpistemicNet| {
        let mv = net.marginal_prediction(&x, 1000, &mut Rng::stream(seed, "eval")).unwrap();
        mean(&mv.iter().map(|&(_, v)| v).collect::<Vec<_>>())
    };
    let before = mean_var(&net);
    let opt = Optimizer::adam(1e-3);
    let reference = net.reference();
    let mut zrng = Rng::stream(seed, "index");
    for _ in 0..2000 {
        let z = reference.sample(&mut zrng);
        let logits = net.forward(&x, &z).unwrap();
        let g: Vec<f64> = logits
            .iter()
            .zip(&y)
            .map(|(&l, &t)| bce_with_logit(t, l).1 / n as f64)
            .collect();
        net.backward(&z, &g).unwrap();
        for s in net.trainable_stores_mut() {
            s.apply(&opt).unwrap();
        }
    }
    mean_var(&net) / before
}

fn posterior_concentration() -> Verdict {
    let t = Instant::now();
    let ratios: Vec<f64> = (0..10).map(variance_ratio).collect();
    let elapsed = t.elapsed();
    let avg = mean(&ratios);
    verdict(
        avg <= 0.5 && elapsed < Duration::from_secs(60),
        format!(
            "mean variance after/before over 10 seeds = {avg:.3} (<= 0.5), {:.1}s (< 60s)",
            secs(elapsed)
        ),
    )
}

// 6 and 7. Default desk experiment

fn desk_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.run.write_logs = false;
    c
}

fn exploration_benefit(outcomes: &[ArmOutcome], elapsed: Duration) -> Verdict {
    let c = desk_config();
    let pick = |arm: &str| -> Vec<&ArmOutcome> { outcomes.iter().filter(|o| o.summary.arm == arm).collect() };
    let (t, k) = (pick("treatment"), pick("control"));
    let diffs: Vec<f64> = t
        .iter()
        .zip(&k)
        .map(|(a, b)| {
            assert_eq!(a.summary.seed, b.summary.seed);
            a.summary.expected_reward - b.summary.expected_reward
        })
        .collect();
    let (stat, p) = paired_t_greater(&diffs);
    let late_t = mean(&t.iter().map(|o| o.summary.late_regret).collect::<Vec<_>>());
    let late_c = mean(&k.iter().map(|o| o.summary.late_regret).collect::<Vec<_>>());
    let pass = p < 0.05 && late_t < late_c && elapsed < Duration::from_secs(600);
    verdict(
        pass,
        format!(
            "N={} M={} T={} {} seeds: reward gain {:+.1}/seed, t = {stat:.2}, one-sided p = {p:.4} (< 0.05); \
             late regret/step {late_t:.3} vs {late_c:.3}; {:.0}s (< 600s)",
            c.env.num_items,
            c.env.slate_size,
            c.run.horizon,
            diffs.len(),
            mean(&diffs),
            secs(elapsed)
        ),
    )
}

fn cold_start_share(outcomes: &[ArmOutcome]) -> Verdict {
    let share = |o: &ArmOutcome| {
        let low: u64 = o.metrics.iter().filter(|r| r.bucket_lo == 0).map(|r| r.impressions).sum();
        low as f64 / o.summary.impressions as f64
    };
    let diffs: Vec<f64> = outcomes
        .chunks(2)
        .map(|pair| {
            assert_eq!(pair[0].summary.arm, "treatment");
            share(&pair[0]) - share(&pair[1])
        })
        .collect();
    let avg = mean(&diffs);
    let (lo, hi) = bootstrap_interval(&diffs, 0.95, 10_000, &mut Rng::stream(0, "acceptance.bootstrap")).unwrap();
    verdict(
        avg > 0.0 && lo > 0.0,
        format!("[0,100) share difference {avg:+.4}, 95% bootstrap CI [{lo:+.4}, {hi:+.4}] excludes 0"),
    )
}

// 8. Naive exploration on a stationary pool

fn dominant_pool(seed: u64) -> (ExperimentConfig, Vec<ItemSpec>) {
    let mut c = ExperimentConfig::default();
    c.env = EnvConfig {
        num_items: 10,
        slate_size: 1,
        impression_cap: 0,
        refresh_per_step: 0,
        min_cold_fraction: 0.0,
        ..EnvConfig::default()
    };
    let best = seed as usize % 10;
    let specs = (0..10)
        .map(|i| ItemSpec {
            quality: if i == best { 2.0 } else { -2.0 },
            video_length: 30.0,
            latent: None,
        })
        .collect();
    (c, specs)
}

fn stationary_regret(policy: Policy, seed: u64, steps: usize) -> f64 {
    let (c, specs) = dominant_pool(seed);
    let mut env = Environment::with_items(c.env.clone(), seed, &specs).unwrap();
    let mut agent = Agent::new(c.agent_spec(policy), seed).unwrap();
    let mut regret = 0.0;
    for _ in 0..steps {
        let a = agent.act(&env.current_user(), env.pool()).unwrap();
        let out = env.step(&a).unwrap();
        regret += out.regret();
        agent.observe_and_update(&out.interactions).unwrap();
    }
    regret
}

fn naive_exploration() -> Verdict {
    let seeds = 0..20u64;
    let eps: Vec<f64> = seeds.clone().map(|s| stationary_regret(Policy::EpsilonGreedy, s, 5000)).collect();
    let ts: Vec<f64> = seeds.map(|s| stationary_regret(Policy::EpinetTs, s, 5000)).collect();
    let (e, t) = (mean(&eps), mean(&ts));
    let worst = ts.iter().copied().fold(0.0, f64::max);
    verdict(
        e > t,
        format!(
            "10 items, one dominant, M=1, T=5000, 20 seeds: epsilon_greedy(0.1) regret {e:.1} vs epinet_ts {t:.1} \
             (worst seed {worst:.1})"
        ),
    )
}

// 9. Calibration

fn calibration() -> Verdict {
    let cfg = EnvConfig::default();
    let r = calibrate(cfg.clone(), 0, cfg.like_rate_target, cfg.share_rate_target, 100_000).unwrap();
    let like = r.achieved[LIKE];
    verdict(
        (0.007..=0.013).contains(&like),
        format!(
            "like bias {:.3}: like rate {:.4} over {} random serves (0.01 +/- 0.003)",
            r.like_bias, like, r.serves
        ),
    )
}

// 10. Determinism and formats

fn determinism() -> Verdict {
    let mut c = ExperimentConfig::default();
    c.env.num_items = 100;
    c.run.horizon = 300;
    c.run.seeds = vec![0, 7, 19];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let report = run_experiment(&c, a.path()).unwrap();
    run_experiment(&c, b.path()).unwrap();
    let same = |f: &str| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    let identical = same("metrics.csv") && same("manifest.json");

    let bytes = std::fs::read(a.path().join("metrics.csv")).unwrap();
    let parsed = read_metrics(bytes.as_slice()).unwrap();
    let expected: Vec<MetricRow> = report.outcomes.iter().flat_map(|o| o.metrics.clone()).collect();
    let mut rewritten = Vec::new();
    write_metrics(&mut rewritten, &parsed).unwrap();
    let lossless = parsed == expected && rewritten == bytes;
    verdict(
        identical && lossless,
        format!(
            "two runs byte-identical (metrics.csv, manifest.json): {identical}; \
             {} metric rows round-trip exactly: {lossless}",
            parsed.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("{} criterion {n:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "label formulas", label_exactness());
    report(3, "shape law", shape_law());
    report(4, "ENN equivalences", enn_equivalences());
    report(5, "posterior concentration", posterior_concentration());

    let t = Instant::now();
    let outcomes = run_all(&desk_config(), None).unwrap();
    let elapsed = t.elapsed();
    report(6, "exploration benefit", exploration_benefit(&outcomes, elapsed));
    report(7, "cold-start reallocation", cold_start_share(&outcomes));
    drop(outcomes);

    report(8, "naive exploration contrast", naive_exploration());
    report(9, "calibration", calibration());
    report(10, "determinism and formats", determinism());

    let failed: Vec<u32> = results.iter().filter(|(_, _, v)| !v.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", results.len());
}
