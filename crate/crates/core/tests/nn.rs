use epinet_core::gradcheck::{check, DenseNetLoss, GradcheckOptions};
use epinet_core::nn::{bce_with_logit, glorot_init, DenseNet, Optimizer};
use epinet_core::{NamedParams, Rng, Tensor2};
use proptest::prelude::*;

fn random_input(rng: &mut Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.normal())
}

/// Straightforward triple-loop forward pass used as an oracle.
fn naive_forward(net: &DenseNet, x: &Tensor2) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    for l in 0..net.num_layers() {
        let w = net.weight(l);
        let b = net.bias(l);
        rows = rows
            .iter()
            .map(|h| {
                (0..w.cols())
                    .map(|j| {
                        let mut s = b.get(0, j);
                        for (i, hi) in h.iter().enumerate() {
                            s += hi * w.get(i, j);
                        }
                        if l + 1 < net.num_layers() {
                            s.max(0.0)
                        } else {
                            s
                        }
                    })
                    .collect()
            })
            .collect();
    }
    rows
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = Rng::new(11);
    let net = DenseNet::new(&[7, 13, 3], &mut rng).unwrap();
    let x = random_input(&mut rng, 9, 7);
    let got = net.predict(&x).unwrap();
    let want = naive_forward(&net, &x);
    for r in 0..9 {
        for c in 0..3 {
            assert!((got.get(r, c) - want[r][c]).abs() < 1e-12);
        }
    }
}

#[test]
fn glorot_variance_matches_uniform_formula() {
    let mut rng = Rng::new(5);
    let mut n = 0usize;
    let (mut sum, mut sq) = (0.0, 0.0);
    while n < 1_000_000 {
        let w = glorot_init(&mut rng, 384, 256);
        for &v in w.data() {
            sum += v;
            sq += v * v;
        }
        n += w.data().len();
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    // U(-a, a) with a² = 6 / 640 has variance (2a)² / 12
    let a = (6.0f64 / 640.0).sqrt();
    let want = (2.0 * a) * (2.0 * a) / 12.0;
    assert!((var - want).abs() / want < 0.05, "variance {var}");
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = Rng::new(2);
    let mut net = DenseNet::new(&[4, 6, 2], &mut rng).unwrap();
    let x = random_input(&mut rng, 5, 4);
    net.forward(&x).unwrap();
    let gin = net.backward(&Tensor2::zeros(5, 2)).unwrap();
    assert!(gin.data().iter().all(|&v| v == 0.0));
    for (_, _, g) in net.params().iter() {
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn backward_is_linear_in_upstream() {
    let mut rng = Rng::new(3);
    let base = DenseNet::new(&[4, 6, 5, 2], &mut rng).unwrap();
    let x = random_input(&mut rng, 5, 4);
    let g = random_input(&mut rng, 5, 2);
    let mut g2 = g.clone();
    g2.scale(2.0);

    let mut a = base.clone();
    a.forward(&x).unwrap();
    let ia = a.backward(&g).unwrap();
    let mut b = base.clone();
    b.forward(&x).unwrap();
    let ib = b.backward(&g2).unwrap();
    for (u, v) in ia.data().iter().zip(ib.data()) {
        assert!((2.0 * u - v).abs() < 1e-12);
    }
    for ((_, _, ga), (_, _, gb)) in a.params().iter().zip(b.params().iter()) {
        for (u, v) in ga.data().iter().zip(gb.data()) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut rng = Rng::new(4);
    let mut net = DenseNet::new(&[3, 4, 1], &mut rng).unwrap();
    let before = net.param_fingerprint();
    let x = random_input(&mut rng, 6, 3);
    net.forward(&x).unwrap();
    net.backward(&Tensor2::from_fn(6, 1, |_, _| 1.0)).unwrap();
    net.params_mut().sgd_step(0.0).unwrap();
    assert_eq!(net.param_fingerprint(), before);
}

#[test]
fn step_consumes_the_gradient_buffer() {
    let mut rng = Rng::new(6);
    let mut net = DenseNet::new(&[3, 4, 1], &mut rng).unwrap();
    let x = random_input(&mut rng, 6, 3);
    net.forward(&x).unwrap();
    net.backward(&Tensor2::from_fn(6, 1, |_, _| 1.0)).unwrap();
    net.params_mut().sgd_step(0.1).unwrap();
    let after_one = net.param_fingerprint();
    for (_, _, g) in net.params().iter() {
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
    net.params_mut().sgd_step(0.1).unwrap();
    assert_eq!(net.param_fingerprint(), after_one);
}

#[test]
fn bce_far_positive_logit_matches_high_precision_value() {
    let (loss, grad) = bce_with_logit(1.0, 50.0);
    // -log σ(50) = log(1 + e^-50) ≈ e^-50, dσ = σ(50) - 1 = -e^-50 / (1 + e^-50)
    let e = (-50.0f64).exp();
    assert!(loss < 1e-20);
    assert!((loss - e).abs() <= 1e-12 * e);
    assert!((grad + e / (1.0 + e)).abs() <= 1e-12 * e);
    assert!((grad + 1.9287e-22).abs() < 1e-25);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut rng = Rng::new(21);
        let mut net = DenseNet::new(&[5, 8, 1], &mut rng).unwrap();
        let x = random_input(&mut rng, 16, 5);
        let opt = Optimizer::adam(0.01);
        for _ in 0..50 {
            let out = net.forward(&x).unwrap();
            let g = Tensor2::from_fn(16, 1, |r, _| bce_with_logit((r % 2) as f64, out.get(r, 0)).1 / 16.0);
            net.backward(&g).unwrap();
            net.params_mut().apply(&opt).unwrap();
        }
        net.param_fingerprint()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bce_is_finite_on_wide_range(label in 0.0f64..=1.0, logit in -1e3f64..=1e3) {
        let (l, g) = bce_with_logit(label, logit);
        prop_assert!(l.is_finite() && l >= 0.0);
        prop_assert!(g.is_finite());
        let s = 1.0 / (1.0 + (-logit).exp());
        prop_assert!((g - (s - label)).abs() < 1e-12);
    }

    #[test]
    fn random_nets_pass_finite_differences(
        seed in 0u64..1000,
        dims in prop::collection::vec(1usize..6, 2..5),
        batch in 1usize..5,
    ) {
        let mut rng = Rng::new(seed);
        let mut net = DenseNet::new(&dims, &mut rng).unwrap();
        // nonzero biases keep pre-activations off the ReLU kink
        for l in 0..net.num_layers() {
            let b = Tensor2::from_fn(1, dims[l + 1], |_, _| 0.5 * rng.normal());
            net.assign_param(&format!("layer{l}.bias"), &b).unwrap();
        }
        let input = random_input(&mut rng, batch, dims[0]);
        let weights = random_input(&mut rng, batch, *dims.last().unwrap());
        let mut target = DenseNetLoss { net, input, weights };
        let report = check("dense", &mut target, &GradcheckOptions::default()).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }
}
