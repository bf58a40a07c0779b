mod common;

use common::{coalition_oracle, random_model, random_rows};
use nutripipe::explain::{global_importance, shapley_exact, shapley_sampled, Explanation};
use nutripipe::model::{GbtConfig, MarginModel, Node, TrainedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

#[test]
fn depth_two_tree_matches_oracle() {
    // depth-2 tree over 3 binary features, 4 background rows
    let tree = Node::split(0, 0.5, Node::split(1, 0.5, Node::leaf(-0.4), Node::leaf(0.3)), Node::split(2, 0.5, Node::leaf(0.1), Node::leaf(0.9)));
    let m = TrainedModel {
        format_version: 1,
        feature_names: names(3),
        config: GbtConfig::new(1, 2, 1.0),
        base_margin: 0.05,
        trees: vec![tree],
    };
    let bg = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0]];
    for x in [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]] {
        let e = shapley_exact(&m, &names(3), "x", &x, &bg).unwrap();
        let oracle = coalition_oracle(&m, &x, &bg);
        for (a, b) in e.phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(e.local_accuracy_gap() < 1e-12);
    }
}

#[test]
fn symmetric_duplicated_features() {
    // features 0 and 1 are identical columns with mirrored splits
    let t1 = Node::split(0, 0.5, Node::leaf(-0.2), Node::leaf(0.6));
    let t2 = Node::split(1, 0.5, Node::leaf(-0.2), Node::leaf(0.6));
    let t3 = Node::split(2, 0.3, Node::leaf(0.1), Node::leaf(-0.3));
    let m = TrainedModel {
        format_version: 1,
        feature_names: names(3),
        config: GbtConfig::new(3, 1, 0.7),
        base_margin: 0.0,
        trees: vec![t1, t2, t3],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bg: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let a = f64::from(rng.gen_range(0..2));
            vec![a, a, rng.gen_range(0.0..1.0)]
        })
        .collect();
    let e = shapley_exact(&m, &names(3), "x", &[1.0, 1.0, 0.9], &bg).unwrap();
    assert!((e.phi[0] - e.phi[1]).abs() < 1e-9);
}

#[test]
fn dummy_and_local_accuracy_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let d = rng.gen_range(2..=8);
        let dummy = rng.gen_range(0..d);
        let m = random_model(&mut rng, d, &[dummy], 5, 3);
        let bg = random_rows(&mut rng, 12, d);
        let x = &random_rows(&mut rng, 1, d)[0];
        let e = shapley_exact(&m, &names(d), "x", x, &bg).unwrap();
        assert_eq!(e.phi[dummy], 0.0);
        assert!(e.local_accuracy_gap() <= 1e-6);
        let oracle = coalition_oracle(&m, x, &bg);
        for (a, b) in e.phi.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

fn mean_se(e: &Explanation) -> f64 {
    let se = e.std_err.as_ref().unwrap();
    se.iter().sum::<f64>() / se.len() as f64
}

#[test]
fn sampled_agrees_with_exact_and_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 6;
    let m = random_model(&mut rng, d, &[], 8, 3);
    let bg = random_rows(&mut rng, 20, d);
    let xs = random_rows(&mut rng, 10, d);
    let mut within = 0;
    let mut total = 0;
    let (mut se_small, mut se_large) = (0.0, 0.0);
    for (i, x) in xs.iter().enumerate() {
        let exact = shapley_exact(&m, &names(d), "x", x, &bg).unwrap();
        let s = shapley_sampled(&m, &names(d), "x", x, &bg, 2000, i as u64).unwrap();
        for (j, se) in s.std_err.as_ref().unwrap().iter().enumerate() {
            total += 1;
            if (s.phi[j] - exact.phi[j]).abs() <= 4.0 * se + 1e-12 {
                within += 1;
            }
        }
        // cycling the background evenly keeps the sampled sum exact
        assert!(s.local_accuracy_gap() < 1e-9);
        se_small += mean_se(&shapley_sampled(&m, &names(d), "x", x, &bg, 200, 100 + i as u64).unwrap());
        se_large += mean_se(&shapley_sampled(&m, &names(d), "x", x, &bg, 400, 100 + i as u64).unwrap());
    }
    assert!(within as f64 >= 0.99 * total as f64, "{within}/{total}");
    assert!(se_large / 10.0 <= se_small / 10.0);
}

#[test]
fn global_importance_matches_hand_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 5;
    let es: Vec<Explanation> = (0..100)
        .map(|i| {
            let phi: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Explanation {
                instance_id: format!("{i:03}"),
                feature_names: names(d),
                feature_values: vec![0.0; d],
                base_value: 0.0,
                prediction_margin: phi.iter().sum(),
                phi,
                std_err: None,
            }
        })
        .collect();
    let g = global_importance(&es).unwrap();
    for (name, v) in &g.features {
        let j: usize = name[1..].parse().unwrap();
        let mut s = 0.0;
        for e in &es {
            s += e.phi[j].abs();
        }
        assert!((v - s / 100.0).abs() <= 1e-12);
    }
    assert!(g.features.windows(2).all(|w| w[0].1 >= w[1].1));
}

#[test]
fn explanations_use_margin_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = random_model(&mut rng, 4, &[], 3, 2);
    let x = vec![0.2, 0.7, 1.0, 0.0];
    let e = shapley_exact(&m, &names(4), "x", &x, &random_rows(&mut rng, 5, 4)).unwrap();
    assert_eq!(e.prediction_margin, m.margin(&x));
}
