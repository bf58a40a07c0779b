//! Gradient-boosted tree classifiers and their evaluation protocol.

pub mod cv;
pub mod experiment;
pub mod features;
pub mod gbt;
pub mod metrics;
pub mod tune;

use thiserror::Error;

pub use cv::{stratified_kfold, train_test_split, Fold};
pub use experiment::{run_experiment_matrix, split_for, ExperimentConfig, ExperimentOutcome, Task};
pub use features::{build_row, full_feature_names, Block, Dataset, FeatureSet, N_FEATURES};
pub use gbt::{logloss, probability, train_gbt, train_gbt_logged, GbtConfig, MarginModel, Node, TrainedModel};
pub use metrics::{bootstrap_ci, roc_auc, write_results_csv, EvalReport};
pub use tune::{cv_score, tune_hyperparameters, ParamGrid, TuneConfig, TuneResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input contains a single class")]
    SingleClassInput,
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {got}")]
    FeatureMaskMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("labels must be 0 or 1")]
    NonBinaryLabel,
    #[error("feature values must be finite")]
    NonFinite,
    #[error("class {class} has {count} samples, fewer than {k}")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("bootstrap redraw cap of {cap} exceeded")]
    ResampleExhaustion { cap: usize },
    #[error("bad feature set {0:?}")]
    BadFeatureSet(String),
    #[error("tuning grid is empty")]
    EmptyGrid,
    #[error("model json: {0}")]
    Json(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("i/o: {0}")]
    Io(String),
}
