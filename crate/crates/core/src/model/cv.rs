//! Stratified splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

fn class_indices(labels: &[u8], rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y == 1)].push(i);
    }
    for c in &mut by_class {
        c.shuffle(rng);
    }
    by_class
}

/// `k` folds with per-class counts within one of proportional.
///
/// Each class is shuffled and dealt round-robin; the second class continues
/// where the first stopped so fold sizes also differ by at most one.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Fold>, ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidConfig(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = class_indices(labels, &mut rng);
    for (class, idx) in by_class.iter().enumerate() {
        if idx.len() < k {
            return Err(ModelError::ClassTooSmall {
                class: class as u8,
                count: idx.len(),
                k,
            });
        }
    }
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0;
    for idx in &by_class {
        for &i in idx {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            Fold { train, valid }
        })
        .collect())
}

/// Stratified train/test split; each class sends `round(test_fraction · n_c)` rows to test.
pub fn train_test_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<Fold, ModelError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ModelError::InvalidConfig(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = class_indices(labels, &mut rng);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (class, idx) in by_class.iter().enumerate() {
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == idx.len() {
            return Err(ModelError::ClassTooSmall {
                class: class as u8,
                count: idx.len(),
                k: 2,
            });
        }
        valid.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok(Fold { train, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(labels: &[u8], idx: &[usize]) -> (usize, usize) {
        let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
        (idx.len() - pos, pos)
    }

    #[test]
    fn balanced_hundred() {
        let y: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        for f in stratified_kfold(&y, 5, 1).unwrap() {
            assert_eq!(counts(&y, &f.valid), (10, 10));
        }
    }

    #[test]
    fn too_small() {
        let mut y = vec![0u8; 10];
        y[3] = 1;
        assert_eq!(
            stratified_kfold(&y, 5, 1),
            Err(ModelError::ClassTooSmall { class: 1, count: 1, k: 5 })
        );
    }

    #[test]
    fn uneven_counts_near_proportional() {
        let y: Vec<u8> = (0..97).map(|i| u8::from(i < 37)).collect();
        for f in stratified_kfold(&y, 5, 7).unwrap() {
            let (neg, pos) = counts(&y, &f.valid);
            assert!((neg as f64 - 60.0 / 5.0).abs() <= 1.0, "{neg}");
            assert!((pos as f64 - 37.0 / 5.0).abs() <= 1.0, "{pos}");
        }
    }

    #[test]
    fn split_sizes() {
        let y: Vec<u8> = (0..1000).map(|i| u8::from(i % 10 == 0)).collect();
        let f = train_test_split(&y, 0.2, 3).unwrap();
        assert_eq!(counts(&y, &f.valid), (180, 20));
        assert_eq!(f.train.len(), 800);
    }

    proptest! {
        #[test]
        fn folds_partition(n_neg in 5usize..80, n_pos in 5usize..80, seed in any::<u64>()) {
            let y: Vec<u8> = (0..n_neg + n_pos).map(|i| u8::from(i % (n_neg + n_pos) < n_pos)).collect();
            let folds = stratified_kfold(&y, 5, seed).unwrap();
            let mut seen = vec![0u32; y.len()];
            for f in &folds {
                for &i in &f.valid { seen[i] += 1; }
                prop_assert_eq!(f.train.len() + f.valid.len(), y.len());
                let (neg, pos) = counts(&y, &f.valid);
                prop_assert!((neg as f64 - n_neg as f64 / 5.0).abs() < 1.0);
                prop_assert!((pos as f64 - n_pos as f64 / 5.0).abs() < 1.0);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }
    }
}
