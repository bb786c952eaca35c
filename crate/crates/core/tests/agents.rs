use epinet_core::agents::{top_m, Agent, AgentKind, AgentModel, AgentSnapshot, AgentSpec, SNAPSHOT_VERSION};
use epinet_core::config::{ExperimentConfig, Policy};
use epinet_core::env::{Environment, ItemSpec, TruthParams};
use epinet_core::model::EpinetModel;
use epinet_core::nn::Optimizer;
use epinet_core::{Error, NamedParams, Rng, Tensor2};
use std::collections::BTreeSet;

fn config(num_items: usize, slate: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.env.num_items = num_items;
    c.env.slate_size = slate;
    c.env.num_users = 50;
    c
}

fn run(agent: &mut Agent, env: &mut Environment, steps: usize) -> Vec<Vec<u64>> {
    (0..steps)
        .map(|_| {
            let a = agent.act(&env.current_user(), env.pool()).unwrap();
            let out = env.step(&a).unwrap();
            agent.observe_and_update(&out.interactions).unwrap();
            a.item_ids.iter().map(|i| i.0).collect()
        })
        .collect()
}

#[test]
fn full_epsilon_is_uniform() {
    let c = config(10, 1);
    let env = Environment::new(c.env.clone(), 1).unwrap();
    let mut spec = c.agent_spec(Policy::EpsilonGreedy);
    spec.kind = AgentKind::EpsilonGreedy(1.0);
    let mut agent = Agent::new(spec, 1).unwrap();
    let user = env.current_user();
    let ids = env.pool().ids();
    let mut counts = [0usize; 10];
    let n = 100_000;
    for _ in 0..n {
        let a = agent.act(&user, env.pool()).unwrap();
        counts[ids.iter().position(|&i| i == a.item_ids[0]).unwrap()] += 1;
    }
    let expected = n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 9 degrees of freedom
    assert!(chi2 < 27.88, "chi2 = {chi2}");
    for &c in &counts {
        assert!((c as f64 - expected).abs() / expected < 0.02, "{counts:?}");
    }
}

#[test]
fn whole_pool_slate_is_returned_by_every_kind() {
    for policy in [Policy::EpinetTs, Policy::GreedyPoint, Policy::EpsilonGreedy, Policy::EnsembleTs] {
        let c = config(8, 8);
        let env = Environment::new(c.env.clone(), 2).unwrap();
        let mut agent = Agent::new(c.agent_spec(policy), 2).unwrap();
        let a = agent.act(&env.current_user(), env.pool()).unwrap();
        let got: BTreeSet<_> = a.item_ids.iter().copied().collect();
        let want: BTreeSet<_> = env.pool().ids().into_iter().collect();
        assert_eq!(got, want, "{}", policy.name());
        assert_eq!(a.item_ids.len(), 8);
    }
}

#[test]
fn pool_smaller_than_slate_is_an_environment_error() {
    let c = config(8, 4);
    let env = Environment::new(c.env.clone(), 2).unwrap();
    let mut spec = c.agent_spec(Policy::GreedyPoint);
    spec.slate_size = 9;
    let mut agent = Agent::new(spec, 2).unwrap();
    assert!(matches!(agent.act(&env.current_user(), env.pool()), Err(Error::Environment(_))));
}

#[test]
fn untrained_thompson_sampling_varies_its_choice() {
    let mut distinct = 0;
    for seed in 0..3 {
        let c = config(50, 1);
        let env = Environment::new(c.env.clone(), seed).unwrap();
        let mut agent = Agent::new(c.agent_spec(Policy::EpinetTs), seed).unwrap();
        let user = env.current_user();
        let tops: BTreeSet<_> = (0..100)
            .map(|_| agent.act(&user, env.pool()).unwrap().item_ids[0])
            .collect();
        distinct += tops.len();
    }
    assert!(distinct as f64 / 3.0 >= 2.0);
}

#[test]
fn greedy_is_a_pure_function_of_user_and_pool() {
    let c = config(30, 5);
    let env = Environment::new(c.env.clone(), 3).unwrap();
    let mut agent = Agent::new(c.agent_spec(Policy::GreedyPoint), 3).unwrap();
    let user = env.current_user();
    let first = agent.act(&user, env.pool()).unwrap();
    for _ in 0..10 {
        assert_eq!(agent.act(&user, env.pool()).unwrap(), first);
    }
}

#[test]
fn greedy_choice_is_the_top_scores() {
    let c = config(30, 5);
    let env = Environment::new(c.env.clone(), 4).unwrap();
    let mut agent = Agent::new(c.agent_spec(Policy::GreedyPoint), 4).unwrap();
    let user = env.current_user();
    let a = agent.act(&user, env.pool()).unwrap();
    let AgentModel::Point(m) = agent.model() else { panic!() };
    let scores = m
        .score_items(&Tensor2::row_vector(user.features.clone()), &env.pool().feature_matrix())
        .unwrap();
    let ids = env.pool().ids();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap());
    let want: Vec<_> = order[..5].iter().map(|&i| ids[i]).collect();
    assert_eq!(a.item_ids, want);
}

#[test]
fn zero_prior_and_zero_learnable_head_is_greedy_on_base() {
    let c = config(40, 4);
    let env = Environment::new(c.env.clone(), 5).unwrap();
    let mut spec = c.agent_spec(Policy::EpinetTs);
    spec.shape.prior_scale = 0.0;
    let mut model = EpinetModel::new(&spec.shape, 0, &mut Rng::new(1), &mut Rng::new(2)).unwrap();
    let mut learnable = Vec::new();
    model.visit_params(&mut |n, t| {
        if n.starts_with("head.learnable.") {
            learnable.push((n.to_string(), t.shape()));
        }
    });
    for (n, (r, c)) in learnable {
        model.assign_param(&n, &Tensor2::zeros(r, c)).unwrap();
    }
    let user = env.current_user();
    let user_t = Tensor2::row_vector(user.features.clone());
    let x = model.overarch_inputs(&user_t, &env.pool().feature_matrix()).unwrap();
    let base = model.head().base().predict(&x).unwrap();
    let ids = env.pool().ids();
    let want: Vec<_> = top_m(base.data(), &ids, 4).into_iter().map(|i| ids[i]).collect();
    let mut agent = Agent::from_model(spec, AgentModel::Epinet(model), 5).unwrap();
    for _ in 0..20 {
        assert_eq!(agent.act(&user, env.pool()).unwrap().item_ids, want);
    }
}

fn params_of(agent: &Agent) -> Vec<(String, Tensor2)> {
    agent.snapshot().params
}

#[test]
fn never_training_keeps_parameters() {
    for policy in [Policy::EpinetTs, Policy::GreedyPoint, Policy::EnsembleTs] {
        let mut c = config(30, 3);
        c.agent.train_every = 0;
        let mut env = Environment::new(c.env.clone(), 6).unwrap();
        let mut agent = Agent::new(c.agent_spec(policy), 6).unwrap();
        let before = params_of(&agent);
        run(&mut agent, &mut env, 50);
        assert_eq!(params_of(&agent), before);
        assert_eq!(agent.buffer().len(), 150);
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    for optimizer in [Optimizer::sgd(0.0), Optimizer::adam(0.0)] {
        for policy in [Policy::EpinetTs, Policy::GreedyPoint] {
            let c = config(30, 3);
            let mut env = Environment::new(c.env.clone(), 7).unwrap();
            let mut spec = c.agent_spec(policy);
            spec.optimizer = optimizer;
            let mut agent = Agent::new(spec, 7).unwrap();
            let before = params_of(&agent);
            run(&mut agent, &mut env, 1);
            assert_eq!(params_of(&agent), before);
        }
    }
}

#[test]
fn training_moves_parameters_but_not_the_environment() {
    let c = config(30, 3);
    let mut env = Environment::new(c.env.clone(), 8).unwrap();
    let mut agent = Agent::new(c.agent_spec(Policy::EpinetTs), 8).unwrap();
    let before = params_of(&agent);
    let a = agent.act(&env.current_user(), env.pool()).unwrap();
    let out = env.step(&a).unwrap();
    let snapshot = env.clone();
    agent.observe_and_update(&out.interactions).unwrap();
    assert_ne!(params_of(&agent), before);
    assert_eq!(env.pool(), snapshot.pool());
    assert_eq!(env.current_user(), snapshot.current_user());
    assert_eq!(agent.step_count(), 1);
}

#[test]
fn buffer_is_bounded() {
    let mut c = config(30, 3);
    c.agent.buffer_capacity = 10;
    let mut env = Environment::new(c.env.clone(), 9).unwrap();
    let mut agent = Agent::new(c.agent_spec(Policy::GreedyPoint), 9).unwrap();
    run(&mut agent, &mut env, 20);
    assert_eq!(agent.buffer().len(), 10);
}

#[test]
fn snapshot_round_trip_acts_identically() {
    for policy in [Policy::EpinetTs, Policy::GreedyPoint, Policy::EnsembleTs] {
        let c = config(30, 3);
        let mut env = Environment::new(c.env.clone(), 10).unwrap();
        let spec = c.agent_spec(policy);
        let mut agent = Agent::new(spec.clone(), 10).unwrap();
        run(&mut agent, &mut env, 20);
        let snap = agent.snapshot();
        let mut restored = Agent::restore(spec, &snap, 99).unwrap();
        agent.reseed(99);
        assert_eq!(restored.step_count(), agent.step_count());
        for _ in 0..5 {
            let user = env.current_user();
            assert_eq!(agent.act(&user, env.pool()).unwrap(), restored.act(&user, env.pool()).unwrap());
        }
    }
}

#[test]
fn snapshot_fits_a_pool_of_another_size() {
    let c = config(30, 3);
    let spec = c.agent_spec(Policy::EpinetTs);
    let agent = Agent::new(spec.clone(), 11).unwrap();
    let mut restored = Agent::restore(spec, &agent.snapshot(), 11).unwrap();
    let bigger = Environment::new(config(75, 3).env, 11).unwrap();
    let a = restored.act(&bigger.current_user(), bigger.pool()).unwrap();
    bigger.validate_action(&a).unwrap();
}

#[test]
fn bad_snapshots_are_rejected() {
    let c = config(30, 3);
    let spec = c.agent_spec(Policy::GreedyPoint);
    let good = Agent::new(spec.clone(), 12).unwrap().snapshot();

    let mut wrong_version = good.clone();
    wrong_version.version = SNAPSHOT_VERSION + 1;
    assert!(matches!(Agent::restore(spec.clone(), &wrong_version, 0), Err(Error::State(_))));

    let mut missing: AgentSnapshot = good.clone();
    missing.params.pop();
    assert!(Agent::restore(spec.clone(), &missing, 0).is_err());

    let mut reshaped = good.clone();
    reshaped.params[0].1 = Tensor2::zeros(1, 1);
    assert!(Agent::restore(spec.clone(), &reshaped, 0).is_err());

    let mut duplicated = good.clone();
    duplicated.params.push(good.params[0].clone());
    assert!(Agent::restore(spec.clone(), &duplicated, 0).is_err());

    let mut other_kind = spec.clone();
    other_kind.kind = AgentKind::EpinetTs;
    assert!(Agent::restore(other_kind, &good, 0).is_err());
}

#[test]
fn thompson_sampling_finds_the_best_item() {
    let likely = (0.9f64 / 0.1).ln();
    let mut hits = 0usize;
    let seeds = 10;
    for seed in 0..seeds {
        let mut c = config(20, 1);
        c.env.impression_cap = 0;
        c.env.refresh_per_step = 0;
        c.env.min_cold_fraction = 0.0;
        c.env.reward_weights = [0.0, 1.0, 0.0, 0.0];
        // items differ only in their like probability
        c.env.truth = TruthParams {
            affinity_scale: 0.0,
            like_slope: 1.0,
            like_bias: 0.0,
            watch_slope: 0.0,
            share_slope: 0.0,
            ..TruthParams::default()
        };
        c.model.epinet_task = 1;
        let best = (seed as usize * 7) % 20;
        let specs: Vec<ItemSpec> = (0..20)
            .map(|i| ItemSpec {
                quality: if i == best { likely } else { -likely },
                video_length: 30.0,
                latent: None,
            })
            .collect();
        let mut env = Environment::with_items(c.env.clone(), seed, &specs).unwrap();
        let best_id = env.pool().ids()[best].0;
        let mut agent = Agent::new(c.agent_spec(Policy::EpinetTs), seed).unwrap();
        let picks = run(&mut agent, &mut env, 500);
        hits += picks[400..].iter().filter(|p| p[0] == best_id).count();
    }
    let rate = hits as f64 / (100 * seeds) as f64;
    assert!(rate >= 0.8, "best item chosen {rate} of the last 100 steps");
}

#[test]
fn invalid_specs_are_rejected() {
    let c = config(30, 3);
    let mut spec: AgentSpec = c.agent_spec(Policy::EpsilonGreedy);
    spec.kind = AgentKind::EpsilonGreedy(1.5);
    assert!(Agent::new(spec.clone(), 0).is_err());
    spec.kind = AgentKind::EnsembleTs(0);
    assert!(Agent::new(spec.clone(), 0).is_err());
    let mut spec = c.agent_spec(Policy::GreedyPoint);
    spec.batch_size = 0;
    assert!(Agent::new(spec, 0).is_err());
}
