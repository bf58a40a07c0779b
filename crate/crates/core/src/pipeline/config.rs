//! Pipeline configuration, stored as TOML. Every field has a default, so an
//! empty document plus input paths is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::{DEFAULT_COVID_END, DEFAULT_COVID_START};
use crate::explain::{ExplainMode, DEFAULT_BACKGROUND_SIZE, DEFAULT_PERMUTATIONS};
use crate::matcher::{DEFAULT_HIGH_KCAL, DEFAULT_LOW_KCAL};
use crate::model::{FeatureSet, ParamGrid, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed derives from it and the stage name.
    pub seed: u64,
    pub paths: Paths,
    pub embedding: EmbeddingSection,
    pub calibration: CalibrationSection,
    pub outliers: OutlierSection,
    pub covid: CovidSection,
    pub corpus: CorpusSection,
    pub mining: MiningSection,
    pub model: ModelSection,
    pub explain: ExplainSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            embedding: EmbeddingSection::default(),
            calibration: CalibrationSection::default(),
            outliers: OutlierSection::default(),
            covid: CovidSection::default(),
            corpus: CorpusSection::default(),
            mining: MiningSection::default(),
            model: ModelSection::default(),
            explain: ExplainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub food_db: PathBuf,
    pub posts: PathBuf,
    /// EMBV1 vectors; when absent the hashed fallback embedder is used.
    pub vectors: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            food_db: PathBuf::from("food_db.csv"),
            posts: PathBuf::from("posts.jsonl"),
            vectors: None,
            output: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub fallback_dim: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            fallback_dim: crate::embeddings::DEFAULT_FALLBACK_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub sample_size: usize,
    pub quantile: f64,
    pub rounding: f64,
    /// Use this threshold instead of calibrating.
    pub threshold: Option<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            sample_size: 5000,
            quantile: 0.999,
            rounding: 0.01,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSection {
    pub low: f64,
    pub high: f64,
}

impl Default for OutlierSection {
    fn default() -> Self {
        OutlierSection {
            low: DEFAULT_LOW_KCAL,
            high: DEFAULT_HIGH_KCAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovidSection {
    pub start: i64,
    pub end: i64,
}

impl Default for CovidSection {
    fn default() -> Self {
        CovidSection {
            start: DEFAULT_COVID_START,
            end: DEFAULT_COVID_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub experienced_fraction: f64,
    pub resonant_quantile: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            experienced_fraction: 0.05,
            resonant_quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSection {
    pub cutoff: f64,
    pub alpha: f64,
    pub top_k: usize,
}

impl Default for MiningSection {
    fn default() -> Self {
        MiningSection {
            cutoff: 0.01,
            alpha: 0.05,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub tasks: Vec<Task>,
    pub feature_sets: Vec<FeatureSet>,
    pub test_fraction: f64,
    pub n_bootstrap: usize,
    pub tuning: TuningSection,
    /// Used when tuning is disabled.
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            tasks: vec![Task::Engagement, Task::Resonance],
            feature_sets: FeatureSet::matrix().to_vec(),
            test_fraction: 0.2,
            n_bootstrap: 1000,
            tuning: TuningSection::default(),
            n_estimators: 26,
            max_depth: 4,
            learning_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub enabled: bool,
    pub n_random: usize,
    pub k_folds: usize,
    /// Adds the 50,000-estimator point to the standard grid.
    pub full_grid: bool,
    /// Replaces the standard grid when set.
    pub grid: Option<ParamGrid>,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection {
            enabled: true,
            n_random: 20,
            k_folds: 5,
            full_grid: false,
            grid: None,
        }
    }
}

impl TuningSection {
    pub fn effective_grid(&self) -> ParamGrid {
        match (&self.grid, self.full_grid) {
            (Some(g), _) => g.clone(),
            (None, true) => ParamGrid::full(),
            (None, false) => ParamGrid::standard(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    /// Feature sets whose models are explained.
    pub feature_sets: Vec<FeatureSet>,
    pub mode: ExplainMode,
    /// Test instances explained per model.
    pub instances: usize,
    pub background_size: usize,
    pub permutations: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            feature_sets: vec![FeatureSet::new(true, false, false, true), FeatureSet::full()],
            mode: ExplainMode::Sample,
            instances: 200,
            background_size: DEFAULT_BACKGROUND_SIZE,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let c = &self.calibration;
        if !(c.quantile > 0.0 && c.quantile < 1.0) || c.sample_size == 0 || !(c.rounding > 0.0) {
            return bad(format!("invalid calibration section {c:?}"));
        }
        if let Some(t) = c.threshold {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("threshold {t} outside (0,1)"));
            }
        }
        if !(self.outliers.low < self.outliers.high) {
            return bad(format!("outlier bounds {:?} out of order", self.outliers));
        }
        if self.covid.start > self.covid.end {
            return bad(format!("covid bounds {:?} out of order", self.covid));
        }
        if self.embedding.fallback_dim < crate::embeddings::MIN_FALLBACK_DIM {
            return bad(format!("fallback_dim must be at least {}", crate::embeddings::MIN_FALLBACK_DIM));
        }
        let co = &self.corpus;
        if !(co.experienced_fraction > 0.0 && co.experienced_fraction <= 1.0) || !(co.resonant_quantile > 0.0 && co.resonant_quantile < 1.0) {
            return bad(format!("invalid corpus section {co:?}"));
        }
        let m = &self.model;
        if m.tasks.is_empty() || m.feature_sets.is_empty() {
            return bad("model.tasks and model.feature_sets must be non-empty".into());
        }
        if !(m.test_fraction > 0.0 && m.test_fraction < 1.0) || m.n_bootstrap == 0 {
            return bad(format!("invalid test_fraction {} or n_bootstrap {}", m.test_fraction, m.n_bootstrap));
        }
        crate::model::GbtConfig::new(m.n_estimators, m.max_depth, m.learning_rate)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if m.tuning.enabled {
            m.tuning.effective_grid().normalized().map_err(|e| PipelineError::Config(e.to_string()))?;
            if m.tuning.k_folds < 2 {
                return bad("tuning.k_folds must be at least 2".into());
            }
        }
        if self.explain.background_size == 0 || self.explain.permutations == 0 {
            return bad("explain.background_size and explain.permutations must be positive".into());
        }
        Ok(())
    }

    /// Seed for a named stage: the first eight bytes of SHA-256(seed ‖ name).
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }
}

pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
