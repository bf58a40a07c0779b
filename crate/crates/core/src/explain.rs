//! Shapley-value explanations in margin space.
//!
//! The value of a coalition S is the mean, over background rows b, of the
//! model margin on the hybrid row taking features in S from the explained
//! instance and the rest from b.

use std::cmp::Ordering;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{probability, MarginModel};

/// Largest feature count explained by full coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 15;
pub const DEFAULT_PERMUTATIONS: usize = 2000;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("{d} features exceed the exact-mode limit of {max}")]
    TooManyFeatures { d: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("expected {expected} features, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("explanations cover different feature sets")]
    HeterogeneousMask,
    #[error("no explanations")]
    NoExplanations,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMode {
    Exact,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    pub feature_names: Vec<String>,
    pub feature_values: Vec<f64>,
    /// Expected margin over the background set.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Monte-Carlo standard errors (sampled mode only).
    pub std_err: Option<Vec<f64>>,
    pub prediction_margin: f64,
}

impl Explanation {
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.prediction_margin).abs()
    }
}

fn check_inputs(model: &dyn MarginModel, names: &[String], x: &[f64], background: &[Vec<f64>]) -> Result<usize, ExplainError> {
    let d = model.n_features();
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    for got in [names.len(), x.len()].into_iter().chain(background.iter().map(Vec::len)) {
        if got != d {
            return Err(ExplainError::DimMismatch { expected: d, got });
        }
    }
    Ok(d)
}

fn background_mean(model: &dyn MarginModel, background: &[Vec<f64>]) -> f64 {
    background.iter().map(|b| model.margin(b)).sum::<f64>() / background.len() as f64
}

/// |S|!(d−|S|−1)!/d! for |S| = 0..d−1.
fn shapley_weights(d: usize) -> Vec<f64> {
    // 1 / (d · C(d−1, s))
    let mut binom = 1.0f64;
    let mut w = Vec::with_capacity(d);
    for s in 0..d {
        w.push(1.0 / (d as f64 * binom));
        binom = binom * (d - 1 - s) as f64 / (s + 1) as f64;
    }
    w
}

/// Exact interventional Shapley values by enumerating all 2^d coalitions.
pub fn shapley_exact(
    model: &dyn MarginModel,
    feature_names: &[String],
    instance_id: &str,
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<Explanation, ExplainError> {
    let d = check_inputs(model, feature_names, x, background)?;
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures { d, max: MAX_EXACT_FEATURES });
    }
    let n_masks = 1usize << d;
    let mut value = vec![0.0; n_masks];
    let mut z = vec![0.0; d];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            for j in 0..d {
                z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
            }
            total += model.margin(&z);
        }
        *v = total / background.len() as f64;
    }
    let w = shapley_weights(d);
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                acc += w[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
            }
        }
        *p = acc;
    }
    Ok(Explanation {
        instance_id: instance_id.to_string(),
        feature_names: feature_names.to_vec(),
        feature_values: x.to_vec(),
        base_value: value[0],
        phi,
        std_err: None,
        prediction_margin: model.margin(x),
    })
}

/// Permutation-sampling estimate with per-feature standard errors.
///
/// Permutation `p` starts from background row `p mod |background|` and adds
/// the instance's features in a random order; each feature is credited with
/// the margin change when it joins.
pub fn shapley_sampled(
    model: &dyn MarginModel,
    feature_names: &[String],
    instance_id: &str,
    x: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let d = check_inputs(model, feature_names, x, background)?;
    let n = n_permutations.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut z = vec![0.0; d];
    for p in 0..n {
        order.shuffle(&mut rng);
        z.copy_from_slice(&background[p % background.len()]);
        let mut prev = model.margin(&z);
        for &j in &order {
            z[j] = x[j];
            let cur = model.margin(&z);
            let c = cur - prev;
            sum[j] += c;
            sum_sq[j] += c * c;
            prev = cur;
        }
    }
    let nf = n as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_err = sum_sq
        .iter()
        .zip(&phi)
        .map(|(&sq, &m)| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sq - nf * m * m) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    Ok(Explanation {
        instance_id: instance_id.to_string(),
        feature_names: feature_names.to_vec(),
        feature_values: x.to_vec(),
        base_value: background_mean(model, background),
        phi,
        std_err: Some(std_err),
        prediction_margin: model.margin(x),
    })
}

/// Explain many instances in parallel; instance `i` in sampled mode uses stream `i` of `seed`.
pub fn explain_all(
    model: &dyn MarginModel,
    feature_names: &[String],
    instances: &[(String, Vec<f64>)],
    background: &[Vec<f64>],
    mode: ExplainMode,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<Explanation>, ExplainError> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, (id, x))| match mode {
            ExplainMode::Exact => shapley_exact(model, feature_names, id, x, background),
            ExplainMode::Sample => {
                let s = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                shapley_sampled(model, feature_names, id, x, background, n_permutations, s)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    /// (feature, mean |phi|), descending; ties by name.
    pub features: Vec<(String, f64)>,
}

impl GlobalImportance {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.features.iter().position(|(f, _)| f == feature).map(|p| p + 1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ExplainError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rank", "feature", "mean_abs_phi"])?;
        for (i, (f, v)) in self.features.iter().enumerate() {
            wr.write_record([(i + 1).to_string(), f.clone(), format!("{v:.9}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn by_importance(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub fn global_importance(explanations: &[Explanation]) -> Result<GlobalImportance, ExplainError> {
    let first = explanations.first().ok_or(ExplainError::NoExplanations)?;
    if explanations.iter().any(|e| e.feature_names != first.feature_names) {
        return Err(ExplainError::HeterogeneousMask);
    }
    let n = explanations.len() as f64;
    let mut features: Vec<(String, f64)> = first
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let s: f64 = explanations.iter().map(|e| e.phi[j].abs()).sum();
            (name.clone(), s / n)
        })
        .collect();
    features.sort_by(by_importance);
    Ok(GlobalImportance { features })
}

/// Long-format rows `feature,instance,phi,value`, by global importance then instance id.
pub fn export_beeswarm<W: Write>(explanations: &[Explanation], w: W) -> Result<(), ExplainError> {
    let importance = global_importance(explanations)?;
    let names = &explanations[0].feature_names;
    let mut order: Vec<&Explanation> = explanations.iter().collect();
    order.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature", "instance", "phi", "value"])?;
    for (feature, _) in &importance.features {
        let j = names.iter().position(|n| n == feature).expect("feature present");
        for e in &order {
            wr.write_record([feature.clone(), e.instance_id.clone(), e.phi[j].to_string(), e.feature_values[j].to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallRow {
    pub feature: String,
    pub value: Option<f64>,
    pub phi: f64,
    pub cumulative: f64,
}

/// Base row followed by nonzero contributions in descending |phi| (ties by name).
pub fn waterfall_rows(e: &Explanation) -> Vec<WaterfallRow> {
    let mut contrib: Vec<(usize, f64)> = e.phi.iter().copied().enumerate().filter(|(_, p)| *p != 0.0).collect();
    contrib.sort_by(|a, b| {
        b.1.abs()
            .total_cmp(&a.1.abs())
            .then_with(|| e.feature_names[a.0].cmp(&e.feature_names[b.0]))
    });
    let mut rows = vec![WaterfallRow {
        feature: "base_value".into(),
        value: None,
        phi: 0.0,
        cumulative: e.base_value,
    }];
    let mut acc = e.base_value;
    for (j, p) in contrib {
        acc += p;
        rows.push(WaterfallRow {
            feature: e.feature_names[j].clone(),
            value: Some(e.feature_values[j]),
            phi: p,
            cumulative: acc,
        });
    }
    rows
}

/// `step,feature,value,phi,cumulative,probability`.
pub fn export_waterfall<W: Write>(e: &Explanation, w: W) -> Result<(), ExplainError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "feature", "value", "phi", "cumulative", "probability"])?;
    for (i, r) in waterfall_rows(e).iter().enumerate() {
        wr.write_record([
            i.to_string(),
            r.feature.clone(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.phi.to_string(),
            r.cumulative.to_string(),
            format!("{:.6}", probability(r.cumulative)),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeeswarmRow {
    pub feature: String,
    pub instance: String,
    pub phi: f64,
    pub value: f64,
}

pub fn read_beeswarm<R: std::io::Read>(r: R) -> Result<Vec<BeeswarmRow>, ExplainError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |k: usize| {
            rec[k].parse::<f64>().map_err(|e| {
                ExplainError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{e}: {:?}", &rec[k])))
            })
        };
        out.push(BeeswarmRow {
            feature: rec[0].to_string(),
            instance: rec[1].to_string(),
            phi: num(2)?,
            value: num(3)?,
        });
    }
    Ok(out)
}
