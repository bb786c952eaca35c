#![allow(dead_code)]

use epinet_core::model::{Batch, ModelShape};
use epinet_core::{NamedParams, Rng, Tensor2};

pub fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.normal())
}

/// Replace every bias with small random values so no ReLU sits on its kink.
pub fn randomize_biases(target: &mut dyn NamedParams, rng: &mut Rng) {
    let mut biases = Vec::new();
    target.visit_params(&mut |name, t| {
        if name.ends_with(".bias") {
            biases.push((name.to_string(), t.shape()));
        }
    });
    for (name, (r, c)) in biases {
        let b = Tensor2::from_fn(r, c, |_, _| 0.3 * rng.normal());
        target.assign_param(&name, &b).unwrap();
    }
}

pub fn small_shape(embed_dim: usize, num_tasks: usize) -> ModelShape {
    ModelShape {
        user_features: 6,
        item_features: 5,
        embed_dim,
        num_tasks,
        tower_hidden: vec![8, 8],
        base_hidden: vec![8, 4],
        epinet_hidden: vec![8, 4],
        index_dim: 3,
        prior_scale: 1.0,
    }
}

pub fn random_batch(rng: &mut Rng, shape: &ModelShape, rows: usize) -> Batch {
    Batch {
        users: gaussian(rng, rows, shape.user_features),
        items: gaussian(rng, rows, shape.item_features),
        labels: Tensor2::from_fn(rows, shape.num_tasks, |_, _| rng.uniform()),
    }
}
