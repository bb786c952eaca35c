use epinet_core::enn::{EpinetHead, EpinetShape, EpistemicIndex, EpistemicNet, ReferenceDistribution};
use epinet_core::nn::{bce_with_logit, sigmoid, DenseNet, Optimizer};
use epinet_core::{NamedParams, Rng, Tensor2};

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.normal())
}

fn head_shape(input_dim: usize) -> EpinetShape {
    EpinetShape {
        input_dim,
        base_hidden: vec![64, 32],
        epinet_hidden: vec![64, 32],
        index_dim: 5,
    }
}

fn fresh_head(seed: u64, input_dim: usize) -> EpinetHead {
    let mut init = Rng::stream(seed, "init");
    let mut prior = Rng::stream(seed, "prior");
    EpinetHead::new(&head_shape(input_dim), 1.0, &mut init, &mut prior).unwrap()
}

#[test]
fn point_estimate_ignores_the_index() {
    let mut rng = Rng::new(1);
    let net = EpistemicNet::point_estimate(DenseNet::new(&[4, 8, 1], &mut rng).unwrap()).unwrap();
    let x = gaussian(&mut rng, 6, 4);
    let a = net.predict(&x, &EpistemicIndex::Gaussian(vec![0.3])).unwrap();
    let b = net.predict(&x, &EpistemicIndex::Gaussian(vec![-2.0])).unwrap();
    assert_eq!(a, b);
    let mv = net.marginal_prediction(&x, 100, &mut rng).unwrap();
    assert!(mv.iter().all(|&(_, v)| v == 0.0));
}

#[test]
fn single_particle_ensemble_equals_point_estimate() {
    let mut rng = Rng::new(2);
    let base = DenseNet::new(&[4, 8, 1], &mut rng).unwrap();
    let point = EpistemicNet::point_estimate(base.clone()).unwrap();
    let ens = EpistemicNet::deep_ensemble(vec![base]).unwrap();
    let x = gaussian(&mut rng, 10, 4);
    let p = point.predict(&x, &EpistemicIndex::Gaussian(vec![0.0])).unwrap();
    let e = ens.predict(&x, &EpistemicIndex::Particle(1)).unwrap();
    assert_eq!(p, e);
    let mut r1 = Rng::new(9);
    let mut r2 = Rng::new(9);
    assert_eq!(
        point.marginal_prediction(&x, 50, &mut r1).unwrap(),
        ens.marginal_prediction(&x, 50, &mut r2).unwrap()
    );
}

#[test]
fn all_ones_mask_equals_base_net() {
    let mut rng = Rng::new(3);
    let base = DenseNet::new(&[5, 8, 1], &mut rng).unwrap();
    let point = EpistemicNet::point_estimate(base.clone()).unwrap();
    let drop = EpistemicNet::mc_dropout(base).unwrap();
    let x = gaussian(&mut rng, 7, 5);
    let a = drop.predict(&x, &EpistemicIndex::Mask(vec![1.0; 5])).unwrap();
    let b = point.predict(&x, &EpistemicIndex::Gaussian(vec![0.0])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn symmetric_two_particle_ensemble_has_half_mean() {
    let mut nets = Vec::new();
    for bias in [1.0, -1.0] {
        let mut n = DenseNet::zeros(&[3, 1]).unwrap();
        n.assign_param("layer0.bias", &Tensor2::from_vec(1, 1, vec![bias]).unwrap())
            .unwrap();
        nets.push(n);
    }
    let ens = EpistemicNet::deep_ensemble(nets).unwrap();
    let x = Tensor2::zeros(1, 3);
    let (mean, _) = ens.marginal_prediction(&x, 200_000, &mut Rng::new(4)).unwrap()[0];
    let want = (sigmoid(1.0) + sigmoid(-1.0)) / 2.0;
    assert!((want - 0.5).abs() < 1e-15);
    assert!((mean - 0.5).abs() < 2e-3, "mean {mean}");
}

#[test]
fn fresh_epinet_has_epistemic_variance() {
    let head = fresh_head(5, 12);
    let net = EpistemicNet::epinet(head);
    let x = gaussian(&mut Rng::new(6), 1, 12);
    let (_, var) = net.marginal_prediction(&x, 1000, &mut Rng::new(7)).unwrap()[0];
    assert!(var > 0.0);
}

#[test]
fn zero_index_gives_the_base_output() {
    let head = fresh_head(8, 6);
    let x = gaussian(&mut Rng::new(1), 4, 6);
    let (base, learn, prior) = head.components(&x, &Tensor2::zeros(1, 5)).unwrap();
    assert!(learn.iter().all(|&v| v == 0.0));
    assert!(prior.iter().all(|&v| v == 0.0));
    let f = head.predict(&x, &Tensor2::zeros(1, 5)).unwrap();
    assert_eq!(f, base);
}

#[test]
fn wrong_index_kind_is_rejected() {
    let mut rng = Rng::new(3);
    let ens = EpistemicNet::deep_ensemble(vec![DenseNet::new(&[2, 1], &mut rng).unwrap()]).unwrap();
    let x = gaussian(&mut rng, 1, 2);
    assert!(ens.predict(&x, &EpistemicIndex::Particle(2)).is_err());
    assert!(ens.predict(&x, &EpistemicIndex::Gaussian(vec![0.0])).is_err());
    let draw = ReferenceDistribution::Discrete { size: 3 }.sample(&mut rng);
    assert!(matches!(draw, EpistemicIndex::Particle(p) if (1..=3).contains(&p)));
}

/// Train an epinet on fixed labelled inputs; returns (training ratio,
/// held-out ratio) of mean predictive variance after / before.
fn variance_reduction(seed: u64, steps: usize) -> (f64, f64) {
    let dim = 16;
    let mut rng = Rng::stream(seed, "data");
    let x = gaussian(&mut rng, 64, dim);
    let held = gaussian(&mut rng, 64, dim);
    let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..64)
        .map(|r| {
            let s: f64 = x.row(r).iter().zip(&w).map(|(a, b)| a * b).sum();
            f64::from(u8::from(rng.bernoulli(sigmoid(s))))
        })
        .collect();
    let mut net = EpistemicNet::epinet(fresh_head(seed, dim));
    let mean_var = |net: &EpistemicNet, inputs: &Tensor2| {
        let mv = net.marginal_prediction(inputs, 1000, &mut Rng::stream(seed, "eval")).unwrap();
        mv.iter().map(|&(_, v)| v).sum::<f64>() / mv.len() as f64
    };
    let (train0, held0) = (mean_var(&net, &x), mean_var(&net, &held));
    let prior_hash = match &net {
        EpistemicNet::Epinet(h) => h.prior().param_fingerprint(),
        _ => unreachable!(),
    };
    let opt = Optimizer::adam(1e-3);
    let mut zrng = Rng::stream(seed, "index");
    let reference = net.reference();
    for _ in 0..steps {
        let z = reference.sample(&mut zrng);
        let logits = net.forward(&x, &z).unwrap();
        let g: Vec<f64> = logits
            .iter()
            .zip(&y)
            .map(|(&l, &t)| bce_with_logit(t, l).1 / 64.0)
            .collect();
        net.backward(&z, &g).unwrap();
        for s in net.trainable_stores_mut() {
            s.apply(&opt).unwrap();
        }
    }
    if let EpistemicNet::Epinet(h) = &net {
        assert_eq!(h.prior().param_fingerprint(), prior_hash);
    }
    (mean_var(&net, &x) / train0, mean_var(&net, &held) / held0)
}

#[test]
fn training_concentrates_the_posterior_on_seen_inputs() {
    let seeds = 3;
    let (mut tr, mut ho) = (0.0, 0.0);
    for seed in 0..seeds {
        let (a, b) = variance_reduction(seed, 2000);
        tr += a / seeds as f64;
        ho += b / seeds as f64;
    }
    assert!(tr <= 0.5, "training variance ratio {tr}");
    assert!(ho > tr, "held-out ratio {ho} vs training {tr}");
}
