//! The feature-set experiment matrix for one task.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{train_test_split, Fold};
use super::features::FeatureSet;
use super::gbt::{train_gbt, GbtConfig, MarginModel, TrainedModel};
use super::metrics::EvalReport;
use super::{Dataset, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Engagement,
    Resonance,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Engagement => "engagement",
            Task::Resonance => "resonance",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "engagement" => Ok(Task::Engagement),
            "resonance" => Ok(Task::Resonance),
            _ => Err(ModelError::InvalidConfig(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub test_fraction: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            test_fraction: 0.2,
            n_bootstrap: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub feature_set: FeatureSet,
    pub report: EvalReport,
    pub model: TrainedModel,
}

/// Shared stratified split for a task.
pub fn split_for(labels: &[u8], cfg: &ExperimentConfig) -> Result<Fold, ModelError> {
    train_test_split(labels, cfg.test_fraction, cfg.seed)
}

/// Train and evaluate one model per feature set on a shared split.
///
/// `full_rows` are 39-column rows. Every set uses the same split, model
/// configuration and bootstrap seed; outcomes come back in `sets` order.
pub fn run_experiment_matrix(
    full_rows: &[Vec<f64>],
    labels: &[u8],
    sets: &[FeatureSet],
    split: &Fold,
    gbt: &GbtConfig,
    cfg: &ExperimentConfig,
) -> Result<Vec<ExperimentOutcome>, ModelError> {
    sets.par_iter()
        .map(|&fs| {
            let data = Dataset::from_full_rows(fs, full_rows, labels)?;
            let train = data.subset(&split.train);
            let test = data.subset(&split.valid);
            let model = train_gbt(&train, gbt)?;
            let scores: Vec<f64> = test.rows.iter().map(|r| model.margin(r)).collect();
            let report = EvalReport::evaluate(&fs.label(), &scores, &test.labels, cfg.n_bootstrap, cfg.seed)?;
            Ok(ExperimentOutcome {
                feature_set: fs,
                report,
                model,
            })
        })
        .collect()
}
