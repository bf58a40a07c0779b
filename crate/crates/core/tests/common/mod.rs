#![allow(dead_code)]

use nutripipe::model::gbt::MODEL_FORMAT_VERSION;
use nutripipe::model::{GbtConfig, Node, TrainedModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random tree over `features`, thresholds at 0.5 or drawn from (0,1).
pub fn random_tree(rng: &mut ChaCha8Rng, features: &[usize], depth: usize) -> Node {
    if depth == 0 || rng.gen_bool(0.2) {
        return Node::leaf(rng.gen_range(-1.0..1.0));
    }
    let f = features[rng.gen_range(0..features.len())];
    let t = if rng.gen_bool(0.5) { 0.5 } else { rng.gen_range(0.05..0.95) };
    Node::split(f, t, random_tree(rng, features, depth - 1), random_tree(rng, features, depth - 1))
}

/// Random ensemble on `d` features that never splits on the listed dummies.
pub fn random_model(rng: &mut ChaCha8Rng, d: usize, dummies: &[usize], n_trees: usize, depth: usize) -> TrainedModel {
    let used: Vec<usize> = (0..d).filter(|f| !dummies.contains(f)).collect();
    TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        config: GbtConfig::new(n_trees, depth, 0.5),
        base_margin: rng.gen_range(-0.5..0.5),
        trees: (0..n_trees).map(|_| random_tree(rng, &used, depth)).collect(),
    }
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if rng.gen_bool(0.5) { f64::from(rng.gen_range(0..2)) } else { rng.gen_range(0.0..1.0) })
                .collect()
        })
        .collect()
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Shapley values by the subset formula with integer factorial weights,
/// evaluating every coalition's value from scratch.
pub fn coalition_oracle(model: &TrainedModel, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let value = |mask: u32| -> f64 {
        let mut s = 0.0;
        for b in background {
            let z: Vec<f64> = (0..d).map(|j| if mask & (1 << j) != 0 { x[j] } else { b[j] }).collect();
            let leaves: f64 = model.trees.iter().map(|t| t.eval(&z)).sum();
            s += model.base_margin + model.config.learning_rate * leaves;
        }
        s / background.len() as f64
    };
    let total = factorial(d) as f64;
    (0..d)
        .map(|i| {
            let mut phi = 0.0;
            for mask in 0u32..(1 << d) {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                let w = (factorial(s) * factorial(d - s - 1)) as f64 / total;
                phi += w * (value(mask | (1 << i)) - value(mask));
            }
            phi
        })
        .collect()
}
