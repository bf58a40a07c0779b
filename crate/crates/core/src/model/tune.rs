//! Hyperparameter search: a random phase over the grid followed by a local
//! grid search around the random-phase winner.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{stratified_kfold, Fold};
use super::gbt::{train_gbt, GbtConfig, MarginModel};
use super::metrics::roc_auc;
use super::{Dataset, ModelError};

/// Number of evenly spaced estimator counts tried between bracketing grid values.
pub const REFINE_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl ParamGrid {
    /// Desk-scale grid: estimator counts capped at 1,000.
    pub fn standard() -> Self {
        ParamGrid {
            n_estimators: vec![10, 50, 100, 500, 1000],
            max_depth: vec![1, 2, 3, 4, 10, 15],
            learning_rate: vec![0.01, 0.1, 0.2, 0.3, 0.4],
        }
    }

    /// Standard grid plus 50,000 estimators.
    pub fn full() -> Self {
        let mut g = ParamGrid::standard();
        g.n_estimators.push(50_000);
        g
    }

    pub fn single(cfg: &GbtConfig) -> Self {
        ParamGrid {
            n_estimators: vec![cfg.n_estimators],
            max_depth: vec![cfg.max_depth],
            learning_rate: vec![cfg.learning_rate],
        }
    }

    pub fn size(&self) -> usize {
        self.n_estimators.len() * self.max_depth.len() * self.learning_rate.len()
    }

    /// Sort and deduplicate each axis, then check every value.
    pub fn normalized(&self) -> Result<ParamGrid, ModelError> {
        let mut g = self.clone();
        g.n_estimators.sort_unstable();
        g.n_estimators.dedup();
        g.max_depth.sort_unstable();
        g.max_depth.dedup();
        g.learning_rate.sort_by(f64::total_cmp);
        g.learning_rate.dedup();
        if g.size() == 0 {
            return Err(ModelError::EmptyGrid);
        }
        for &n in &g.n_estimators {
            GbtConfig::new(n, g.max_depth[0], g.learning_rate[0]).validate()?;
        }
        for &d in &g.max_depth {
            GbtConfig::new(1, d, g.learning_rate[0]).validate()?;
        }
        for &lr in &g.learning_rate {
            GbtConfig::new(1, 1, lr).validate()?;
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub n_random: usize,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            n_random: 20,
            k_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Random,
    Neighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub mean_auc: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: GbtConfig,
    pub best_score: f64,
    /// Every evaluated configuration in evaluation order.
    pub trials: Vec<Trial>,
}

/// Mean validation AUC over the given folds.
pub fn cv_score(data: &Dataset, cfg: &GbtConfig, folds: &[Fold]) -> Result<f64, ModelError> {
    let aucs = folds
        .par_iter()
        .map(|f| {
            let model = train_gbt(&data.subset(&f.train), cfg)?;
            let valid = data.subset(&f.valid);
            let scores: Vec<f64> = valid.rows.iter().map(|r| model.margin(r)).collect();
            roc_auc(&scores, &valid.labels)
        })
        .collect::<Result<Vec<f64>, ModelError>>()?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

type Key = (usize, usize, u64);

fn key(n: usize, d: usize, lr: f64) -> Key {
    (n, d, lr.to_bits())
}

// Higher score first; ties prefer fewer estimators, then smaller depth, then smaller lr.
fn rank(a: &Trial, b: &Trial) -> Ordering {
    b.mean_auc
        .total_cmp(&a.mean_auc)
        .then(a.n_estimators.cmp(&b.n_estimators))
        .then(a.max_depth.cmp(&b.max_depth))
        .then(a.learning_rate.total_cmp(&b.learning_rate))
}

/// Evenly spaced integers from `lo` to `hi` inclusive.
pub fn refine_estimators(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if points < 2 || lo == hi {
        return vec![lo];
    }
    let mut v: Vec<usize> = (0..points)
        .map(|j| lo + ((hi - lo) as f64 * j as f64 / (points - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

pub fn tune_hyperparameters(data: &Dataset, grid: &ParamGrid, tcfg: &TuneConfig) -> Result<TuneResult, ModelError> {
    let grid = grid.normalized()?;
    let folds = stratified_kfold(&data.labels, tcfg.k_folds, tcfg.seed)?;
    let mut scored: BTreeMap<Key, f64> = BTreeMap::new();
    let mut trials: Vec<Trial> = Vec::new();

    let mut evaluate = |configs: Vec<(usize, usize, f64)>, phase: Phase, trials: &mut Vec<Trial>| -> Result<(), ModelError> {
        let mut fresh: Vec<(usize, usize, f64)> = Vec::new();
        for c in configs {
            if !scored.contains_key(&key(c.0, c.1, c.2)) && !fresh.contains(&c) {
                fresh.push(c);
            }
        }
        let scores = fresh
            .par_iter()
            .map(|&(n, d, lr)| cv_score(data, &GbtConfig::new(n, d, lr).with_seed(tcfg.seed), &folds))
            .collect::<Result<Vec<f64>, ModelError>>()?;
        for ((n, d, lr), s) in fresh.into_iter().zip(scores) {
            scored.insert(key(n, d, lr), s);
            trials.push(Trial {
                n_estimators: n,
                max_depth: d,
                learning_rate: lr,
                mean_auc: s,
                phase,
            });
        }
        Ok(())
    };

    // phase 1: distinct grid points drawn uniformly
    let (ne, nd, nl) = (grid.n_estimators.len(), grid.max_depth.len(), grid.learning_rate.len());
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let picks = sample(&mut rng, grid.size(), tcfg.n_random.clamp(1, grid.size()));
    let at = |flat: usize| {
        let (ie, rest) = (flat / (nd * nl), flat % (nd * nl));
        (ie, rest / nl, rest % nl)
    };
    let random: Vec<(usize, usize, f64)> = picks
        .iter()
        .map(|flat| {
            let (ie, id, il) = at(flat);
            (grid.n_estimators[ie], grid.max_depth[id], grid.learning_rate[il])
        })
        .collect();
    evaluate(random, Phase::Random, &mut trials)?;
    let winner = trials.iter().min_by(|a, b| rank(a, b)).cloned().expect("at least one trial");

    // phase 2: ±1 step on each axis, plus estimator refinement between the bracketing values
    let pos = |v: &[usize], x: usize| v.iter().position(|&y| y == x).expect("grid value");
    let ie = pos(&grid.n_estimators, winner.n_estimators);
    let id = pos(&grid.max_depth, winner.max_depth);
    let il = grid
        .learning_rate
        .iter()
        .position(|&y| y == winner.learning_rate)
        .expect("grid value");
    let around = |i: usize, len: usize| i.saturating_sub(1)..=(i + 1).min(len - 1);
    let mut local = Vec::new();
    for a in around(ie, ne) {
        for b in around(id, nd) {
            for c in around(il, nl) {
                local.push((grid.n_estimators[a], grid.max_depth[b], grid.learning_rate[c]));
            }
        }
    }
    let lo = grid.n_estimators[ie.saturating_sub(1)];
    let hi = grid.n_estimators[(ie + 1).min(ne - 1)];
    for n in refine_estimators(lo, hi, REFINE_POINTS) {
        local.push((n, winner.max_depth, winner.learning_rate));
    }
    evaluate(local, Phase::Neighborhood, &mut trials)?;

    let best = trials.iter().min_by(|a, b| rank(a, b)).expect("at least one trial");
    Ok(TuneResult {
        best: GbtConfig::new(best.n_estimators, best.max_depth, best.learning_rate).with_seed(tcfg.seed),
        best_score: best.mean_auc,
        trials,
    })
}
