//! ROC-AUC and its percentile bootstrap interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::textfeat::stats::midranks;

pub const DEFAULT_N_BOOTSTRAP: usize = 1000;
/// Redraws allowed for single-class resamples, as a multiple of the resample count.
pub const RESAMPLE_CAP_FACTOR: usize = 10;

/// Probability that a random positive outranks a random negative (ties ½).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClassInput);
    }
    let ranks = midranks(scores);
    let rank_pos: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let rank_neg: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y != 1).map(|(r, _)| r).sum();
    // Both U values are exact half-integers summing to n_pos·n_neg
    let u_pos = rank_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let u_neg = rank_neg - (n_neg * (n_neg + 1)) as f64 / 2.0;
    let total = (n_pos as f64) * (n_neg as f64);
    // Dividing only the smaller U keeps AUC(y) + AUC(1−y) == 1 exactly
    Ok(if u_pos <= u_neg { u_pos / total } else { 1.0 - u_neg / total })
}

/// Percentile bootstrap interval for ROC-AUC.
///
/// Resample `i` draws from its own ChaCha stream so results do not depend on
/// thread count. Single-class resamples are redrawn; more than
/// `RESAMPLE_CAP_FACTOR · n_bootstrap` redraws in total is an error.
pub fn bootstrap_ci(scores: &[f64], labels: &[u8], n_bootstrap: usize, level: f64, seed: u64) -> Result<(f64, f64), ModelError> {
    let point = roc_auc(scores, labels)?;
    if n_bootstrap == 0 || !(level > 0.0 && level < 1.0) {
        return Err(ModelError::InvalidConfig(format!(
            "bootstrap needs n ≥ 1 and level in (0,1), got n={n_bootstrap}, level={level}"
        )));
    }
    let n = scores.len();
    let cap = RESAMPLE_CAP_FACTOR * n_bootstrap;
    let draws: Vec<(f64, usize)> = (0..n_bootstrap)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut s = vec![0.0; n];
            let mut y = vec![0u8; n];
            let mut redraws = 0;
            loop {
                for k in 0..n {
                    let j = rng.gen_range(0..n);
                    s[k] = scores[j];
                    y[k] = labels[j];
                }
                match roc_auc(&s, &y) {
                    Ok(a) => return (a, redraws),
                    Err(_) if redraws < cap => redraws += 1,
                    Err(_) => return (f64::NAN, redraws),
                }
            }
        })
        .collect();
    let redraws: usize = draws.iter().map(|d| d.1).sum();
    if redraws > cap || draws.iter().any(|d| d.0.is_nan()) {
        return Err(ModelError::ResampleExhaustion { cap });
    }
    let mut aucs: Vec<f64> = draws.into_iter().map(|d| d.0).collect();
    aucs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let low = percentile(&aucs, tail);
    let high = percentile(&aucs, 1.0 - tail);
    // keep the interval around the point estimate
    Ok((low.min(point), high.max(point)))
}

// Linear interpolation between closest ranks of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_set: String,
    pub roc_auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub n_test: usize,
}

impl EvalReport {
    pub fn evaluate(feature_set: &str, scores: &[f64], labels: &[u8], n_bootstrap: usize, seed: u64) -> Result<Self, ModelError> {
        let roc_auc = roc_auc(scores, labels)?;
        let (ci_low, ci_high) = bootstrap_ci(scores, labels, n_bootstrap, 0.95, seed)?;
        Ok(EvalReport {
            feature_set: feature_set.to_string(),
            roc_auc,
            ci_low,
            ci_high,
            n_bootstrap,
            n_test: scores.len(),
        })
    }

    pub fn overlaps(&self, other: &EvalReport) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// `feature_set,auc,ci_low,ci_high` with fixed 6-decimal formatting.
pub fn write_results_csv<W: std::io::Write>(reports: &[EvalReport], w: W) -> Result<(), ModelError> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| ModelError::Io(e.to_string());
    wr.write_record(["feature_set", "auc", "ci_low", "ci_high"]).map_err(io)?;
    for r in reports {
        wr.write_record([
            r.feature_set.clone(),
            format!("{:.6}", r.roc_auc),
            format!("{:.6}", r.ci_low),
            format!("{:.6}", r.ci_high),
        ])
        .map_err(io)?;
    }
    wr.flush().map_err(|e| ModelError::Io(e.to_string()))
}
