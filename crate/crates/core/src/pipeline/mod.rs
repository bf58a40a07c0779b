//! End-to-end orchestration.
//!
//! Each stage reads its inputs from the run directory, writes its artifacts
//! back into it and appends a record to `manifest.json`. A stage whose key
//! (a hash of its parameters, seed and input hashes) matches the previous
//! run and whose outputs are intact is skipped.

pub mod artifacts;
pub mod config;
pub mod report;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use config::{stage_seed, PipelineConfig};
pub use report::write_report;

use self::artifacts::*;
use crate::corpus::{build_labels, derive_controls, experienced_user_set, ingest_posts, preprocess, CovidBounds, LabelSet, PostRecord};
use crate::embeddings::{load_vector_store, EmbeddingProvider, FallbackEmbedder};
use crate::explain::{explain_all, export_beeswarm, export_waterfall, global_importance, ExplainMode, GlobalImportance, MAX_EXACT_FEATURES};
use crate::food_db::{load_food_db, FoodDatabase};
use crate::matcher::{calibrate_threshold, estimate_corpus, filter_outliers, CalibrationConfig, FoodIndex, OutlierBounds};
use crate::model::features::{Block, N_FEATURES};
use crate::model::{
    build_row, run_experiment_matrix, split_for, tune_hyperparameters, write_results_csv, Dataset, EvalReport, ExperimentConfig, FeatureSet,
    Fold, GbtConfig, Task, TrainedModel, TuneConfig, TuneResult,
};
use crate::textfeat::{discriminator_flags, match_descriptors, mine_discriminators, DescriptorLexicon, DiscriminatorSet, MiningConfig, Stopwords};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("incomplete run: {0}")]
    IncompleteRun(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            _ => 4,
        }
    }

    fn in_stage(self, stage: &str) -> PipelineError {
        match self {
            PipelineError::Stage { .. } | PipelineError::Config(_) => self,
            PipelineError::Data(m) => PipelineError::Data(format!("{stage}: {m}")),
            other => PipelineError::Stage {
                stage: stage.to_string(),
                message: other.to_string(),
            },
        }
    }
}

fn stage_err(stage: &str) -> impl Fn(String) -> PipelineError + '_ {
    move |message| PipelineError::Stage {
        stage: stage.to_string(),
        message,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the run directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

/// Run-specific values kept out of every comparison between runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub generated_at_unix: u64,
    pub cache_hits: Vec<String>,
    pub executed: Vec<String>,
    pub stage_millis: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub excluded: Excluded,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest, PipelineError> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn count(&self, stage: &str, key: &str) -> Option<u64> {
        self.stage(stage).and_then(|s| s.counts.get(key).copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub executed: Vec<String>,
    pub cache_hits: Vec<String>,
}

struct StageOutput {
    files: Vec<String>,
    counts: BTreeMap<String, u64>,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
    previous: BTreeMap<String, StageRecord>,
    manifest: Manifest,
}

impl<'a> Run<'a> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn output_hash(&self, stage: &str, file: &str) -> String {
        self.manifest
            .stage(stage)
            .and_then(|s| s.outputs.get(file))
            .cloned()
            .unwrap_or_default()
    }

    fn all_outputs(&self, stage: &str) -> BTreeMap<String, String> {
        self.manifest
            .stage(stage)
            .map(|s| s.outputs.iter().map(|(k, v)| (format!("{stage}:{k}"), v.clone())).collect())
            .unwrap_or_default()
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        write_json(&self.path(MANIFEST_FILE), &self.manifest)
    }

    fn stage(
        &mut self,
        name: &str,
        inputs: BTreeMap<String, String>,
        params: serde_json::Value,
        seed: Option<u64>,
        body: impl FnOnce(&Self) -> Result<StageOutput, PipelineError>,
    ) -> Result<(), PipelineError> {
        let key_doc = json!({ "stage": name, "inputs": inputs, "params": params, "seed": seed });
        let key = sha256_bytes(key_doc.to_string().as_bytes());
        if let Some(prev) = self.previous.get(name) {
            if prev.key == key && self.outputs_intact(prev) {
                info!("stage {name}: unchanged, skipped");
                self.manifest.stages.push(prev.clone());
                self.manifest.excluded.cache_hits.push(name.to_string());
                return self.save_manifest();
            }
        }
        info!("stage {name}: running");
        let t0 = Instant::now();
        let out = body(self).map_err(|e| e.in_stage(name))?;
        let mut outputs = BTreeMap::new();
        for f in out.files {
            let h = sha256_file(&self.path(&f)).map_err(|e| e.in_stage(name))?;
            outputs.insert(f, h);
        }
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            key,
            seed,
            inputs,
            outputs,
            counts: out.counts,
        });
        self.manifest.excluded.executed.push(name.to_string());
        self.manifest
            .excluded
            .stage_millis
            .insert(name.to_string(), t0.elapsed().as_millis() as u64);
        self.save_manifest()
    }

    fn outputs_intact(&self, rec: &StageRecord) -> bool {
        rec.outputs
            .iter()
            .all(|(f, h)| sha256_file(&self.path(f)).map(|got| got == *h).unwrap_or(false))
    }
}

fn counts<const N: usize>(pairs: [(&str, u64); N]) -> BTreeMap<String, u64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn provider_for(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    match &cfg.paths.vectors {
        Some(p) => Ok(Box::new(load_vector_store(p).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?)),
        None => Ok(Box::new(
            FallbackEmbedder::new(cfg.embedding.fallback_dim).map_err(|e| PipelineError::Config(e.to_string()))?,
        )),
    }
}

fn input_hash(path: &Path) -> Result<String, PipelineError> {
    sha256_file(path).map_err(|e| PipelineError::Data(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub threshold: f64,
    /// "calibrated" or "configured".
    pub source: String,
    pub quantile: f64,
    pub median_quantile: Option<f64>,
    pub sample_size_used: usize,
    pub missing_titles: Vec<String>,
    pub per_post_quantiles: Vec<f64>,
}

/// Base columns (every block except E) in row order.
pub fn base_feature_names() -> Vec<String> {
    let e = Block::E.columns();
    crate::model::full_feature_names()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !e.contains(i))
        .map(|(_, n)| n)
        .collect()
}

/// Insert discriminator flags into a base row to obtain a full row.
pub fn full_row(base: &[f64], flags: (bool, bool)) -> Vec<f64> {
    let e = Block::E.columns();
    let mut row = Vec::with_capacity(N_FEATURES);
    row.extend_from_slice(&base[..e.start]);
    row.push(f64::from(u8::from(flags.0)));
    row.push(f64::from(u8::from(flags.1)));
    row.extend_from_slice(&base[e.start..]);
    row
}

/// Rows of one task, in features-file order.
pub struct TaskTable {
    pub post_ids: Vec<String>,
    pub titles: Vec<String>,
    pub base: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

pub fn task_table(task: Task, features: &[FeatureRecord], posts: &[PostRecord]) -> Result<TaskTable, PipelineError> {
    let by_id = index_by_id(posts);
    let mut t = TaskTable {
        post_ids: vec![],
        titles: vec![],
        base: vec![],
        labels: vec![],
    };
    for f in features {
        let label = match task {
            Task::Engagement => Some(f.engagement),
            Task::Resonance => f.resonance,
        };
        let Some(y) = label else { continue };
        let post = by_id
            .get(f.post_id.as_str())
            .ok_or_else(|| PipelineError::Data(format!("features reference unknown post {}", f.post_id)))?;
        t.post_ids.push(f.post_id.clone());
        t.titles.push(post.title_clean.clone());
        t.base.push(f.base.clone());
        t.labels.push(u8::from(y));
    }
    Ok(t)
}

impl TaskTable {
    pub fn full_rows(&self, set: &DiscriminatorSet, stopwords: &Stopwords) -> Vec<Vec<f64>> {
        self.base
            .iter()
            .zip(&self.titles)
            .map(|(b, t)| full_row(b, discriminator_flags(t, set, stopwords)))
            .collect()
    }

    pub fn fold_from(&self, split: &SplitRecord) -> Result<Fold, PipelineError> {
        let pos: BTreeMap<&str, usize> = self.post_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let look = |ids: &[String]| {
            ids.iter()
                .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| PipelineError::Data(format!("split references unknown post {id}"))))
                .collect::<Result<Vec<usize>, _>>()
        };
        Ok(Fold {
            train: look(&split.train)?,
            valid: look(&split.test)?,
        })
    }
}

pub fn model_file(task: Task, fs: FeatureSet) -> String {
    format!("{task}/models/{}.json", fs.label().replace('+', "_"))
}

fn mining_config(cfg: &PipelineConfig) -> MiningConfig {
    MiningConfig {
        cutoff: cfg.mining.cutoff,
        alpha: cfg.mining.alpha,
        top_k: cfg.mining.top_k,
    }
}

/// Pipeline stages in execution order. Per-task stages run once per configured task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageKind {
    FoodDb,
    Posts,
    Calibrate,
    Estimate,
    Features,
    Mine,
    Tune,
    Train,
    Explain,
    Report,
}

/// Execute every stage in order, reusing unchanged results from a previous run in the same directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    run_until(cfg, StageKind::Report)
}

/// Execute stages up to and including `last`. Records of later stages from a
/// previous run stay in the manifest so a subsequent full run can reuse them.
pub fn run_until(cfg: &PipelineConfig, last: StageKind) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let dir = cfg.paths.output.clone();
    std::fs::create_dir_all(&dir)?;
    let previous: BTreeMap<String, StageRecord> = match Manifest::load(&dir) {
        Ok(m) if m.format_version == MANIFEST_VERSION => m.stages.into_iter().map(|s| (s.name.clone(), s)).collect(),
        _ => BTreeMap::new(),
    };
    let cfg_text = cfg.to_toml();
    let mut run = Run {
        cfg,
        dir: dir.clone(),
        previous,
        manifest: Manifest {
            format_version: MANIFEST_VERSION,
            config_sha256: sha256_bytes(cfg_text.as_bytes()),
            stages: vec![],
            excluded: Excluded {
                generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                ..Default::default()
            },
        },
    };
    write_atomic(&dir.join("config.toml"), cfg_text.as_bytes())?;

    let go = |k: StageKind| k <= last;
    if go(StageKind::FoodDb) {
        stage_food_db(&mut run)?;
    }
    if go(StageKind::Posts) {
        stage_posts(&mut run)?;
    }
    if go(StageKind::Calibrate) {
        stage_calibrate(&mut run)?;
    }
    if go(StageKind::Estimate) {
        stage_estimate(&mut run)?;
    }
    if go(StageKind::Features) {
        stage_features(&mut run)?;
    }
    for &task in &cfg.model.tasks {
        if go(StageKind::Mine) {
            stage_mine(&mut run, task)?;
        }
        if go(StageKind::Tune) {
            stage_tune(&mut run, task)?;
        }
        if go(StageKind::Train) {
            stage_train(&mut run, task)?;
        }
        if go(StageKind::Explain) {
            stage_explain(&mut run, task)?;
        }
    }
    if go(StageKind::Report) {
        stage_report(&mut run)?;
    } else {
        let done: BTreeSet<String> = run.manifest.stages.iter().map(|s| s.name.clone()).collect();
        let rest: Vec<StageRecord> = run.previous.values().filter(|s| !done.contains(&s.name)).cloned().collect();
        run.manifest.stages.extend(rest);
        run.save_manifest()?;
    }
    Ok(RunSummary {
        dir,
        executed: run.manifest.excluded.executed.clone(),
        cache_hits: run.manifest.excluded.cache_hits.clone(),
    })
}

fn stage_food_db(run: &mut Run) -> Result<(), PipelineError> {
    let src = run.cfg.paths.food_db.clone();
    let inputs = BTreeMap::from([("food_db".to_string(), input_hash(&src)?)]);
    run.stage("food_db", inputs, json!({}), None, |r| {
        let (db, report) = load_food_db(&src).map_err(|e| PipelineError::Data(format!("{}: {e}", src.display())))?;
        if db.is_empty() {
            return Err(PipelineError::Data("food database has no valid rows".into()));
        }
        for rej in report.rejected.iter().take(5) {
            warn!("food db row rejected: {rej:?}");
        }
        db.save(&r.path("food_db.csv")).map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        Ok(StageOutput {
            files: vec!["food_db.csv".into()],
            counts: counts([
                ("food_items", db.count() as u64),
                ("rejected_rows", report.rejected_count() as u64),
                ("flagged_macro_sum", report.macro_sum_flagged as u64),
            ]),
        })
    })
}

fn stage_posts(run: &mut Run) -> Result<(), PipelineError> {
    let src = run.cfg.paths.posts.clone();
    let inputs = BTreeMap::from([("posts".to_string(), input_hash(&src)?)]);
    run.stage("posts", inputs, json!({}), None, |r| {
        let (posts, ingest) = ingest_posts(&src).map_err(|e| PipelineError::Data(format!("{}: {e}", src.display())))?;
        if posts.is_empty() {
            return Err(PipelineError::Data("no valid posts".into()));
        }
        let parsed = posts.len() as u64;
        let (kept, filter) = preprocess(posts);
        write_posts_jsonl(&r.path("posts.jsonl"), &kept)?;
        Ok(StageOutput {
            files: vec!["posts.jsonl".into()],
            counts: counts([
                ("collected", ingest.lines as u64),
                ("malformed", ingest.error_count() as u64),
                ("parsed", parsed),
                ("removed_empty_or_deleted", filter.removed_empty_or_deleted as u64),
                ("removed_duplicates", filter.removed_duplicates as u64),
                ("preprocessed", filter.output as u64),
            ]),
        })
    })
}

fn vectors_input(cfg: &PipelineConfig, inputs: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
    if let Some(v) = &cfg.paths.vectors {
        inputs.insert("vectors".into(), input_hash(v)?);
    }
    Ok(())
}

fn load_db(r: &Run) -> Result<FoodDatabase, PipelineError> {
    load_food_db(&r.path("food_db.csv"))
        .map(|(db, _)| db)
        .map_err(|e| PipelineError::Stage {
            stage: "read".into(),
            message: e.to_string(),
        })
}

fn stage_calibrate(run: &mut Run) -> Result<(), PipelineError> {
    let mut inputs = BTreeMap::from([
        ("food_db.csv".to_string(), run.output_hash("food_db", "food_db.csv")),
        ("posts.jsonl".to_string(), run.output_hash("posts", "posts.jsonl")),
    ]);
    vectors_input(run.cfg, &mut inputs)?;
    let seed = run.cfg.stage_seed("calibrate");
    let params = json!({ "calibration": run.cfg.calibration, "embedding": run.cfg.embedding });
    run.stage("calibrate", inputs, params, Some(seed), |r| {
        let c = &r.cfg.calibration;
        let artifact = if let Some(t) = c.threshold {
            CalibrationArtifact {
                threshold: t,
                source: "configured".into(),
                quantile: c.quantile,
                median_quantile: None,
                sample_size_used: 0,
                missing_titles: vec![],
                per_post_quantiles: vec![],
            }
        } else {
            let db = load_db(r)?;
            let posts = read_posts_jsonl(&r.path("posts.jsonl"))?;
            let provider = provider_for(r.cfg)?;
            let index = FoodIndex::build(&db, provider.as_ref()).map_err(|e| PipelineError::Data(e.to_string()))?;
            let titles: Vec<String> = posts.iter().map(|p| p.title_clean.clone()).collect();
            let cal = calibrate_threshold(
                &titles,
                &index,
                provider.as_ref(),
                &CalibrationConfig {
                    sample_size: c.sample_size,
                    per_post_quantile: c.quantile,
                    rounding_precision: c.rounding,
                    rng_seed: seed,
                },
            )
            .map_err(|e| PipelineError::Data(e.to_string()))?;
            CalibrationArtifact {
                threshold: cal.threshold,
                source: "calibrated".into(),
                quantile: c.quantile,
                median_quantile: Some(cal.median_quantile),
                sample_size_used: cal.sample_size_used,
                missing_titles: cal.missing_titles,
                per_post_quantiles: cal.per_post_quantiles,
            }
        };
        write_json(&r.path("calibration.json"), &artifact)?;
        Ok(StageOutput {
            files: vec!["calibration.json".into()],
            counts: counts([
                ("sample_size_used", artifact.sample_size_used as u64),
                ("missing_titles", artifact.missing_titles.len() as u64),
            ]),
        })
    })
}

fn stage_estimate(run: &mut Run) -> Result<(), PipelineError> {
    let mut inputs = BTreeMap::from([
        ("food_db.csv".to_string(), run.output_hash("food_db", "food_db.csv")),
        ("posts.jsonl".to_string(), run.output_hash("posts", "posts.jsonl")),
        ("calibration.json".to_string(), run.output_hash("calibrate", "calibration.json")),
    ]);
    vectors_input(run.cfg, &mut inputs)?;
    let params = json!({ "outliers": run.cfg.outliers, "embedding": run.cfg.embedding });
    run.stage("estimate", inputs, params, None, |r| {
        let db = load_db(r)?;
        let posts = read_posts_jsonl(&r.path("posts.jsonl"))?;
        let cal: CalibrationArtifact = read_json(&r.path("calibration.json"))?;
        let provider = provider_for(r.cfg)?;
        let index = FoodIndex::build(&db, provider.as_ref()).map_err(|e| PipelineError::Data(e.to_string()))?;
        let est = estimate_corpus(&posts, &index, provider.as_ref(), cal.threshold);
        for (id, e) in est.errors.iter().take(5) {
            warn!("post {id}: {e}");
        }
        let rows: Vec<EstimateRow> = est
            .estimates
            .iter()
            .map(|(id, e)| {
                let (top_id, top_sim) = e.top_match().cloned().unwrap_or_default();
                EstimateRow {
                    post_id: id.clone(),
                    kcal: e.kcal,
                    protein_g: e.protein_g,
                    carb_g: e.carb_g,
                    fat_g: e.fat_g,
                    matched_count: e.matched_count,
                    top_match_id: top_id,
                    top_similarity: top_sim,
                }
            })
            .collect();
        let matched = rows.len() as u64;
        let bounds = OutlierBounds {
            low: r.cfg.outliers.low,
            high: r.cfg.outliers.high,
        };
        let (kept, outliers) = filter_outliers(rows, |e| e.kcal, bounds).map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut buf = Vec::new();
        write_estimates(&kept, &mut buf).map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        write_atomic(&r.path("estimates.csv"), &buf)?;
        Ok(StageOutput {
            files: vec!["estimates.csv".into()],
            counts: counts([
                ("unique_titles", est.unique_titles as u64),
                ("unique_matched_titles", est.unique_matched_titles as u64),
                ("matched", matched),
                ("no_match", est.no_match.len() as u64),
                ("errors", est.errors.len() as u64),
                ("outliers_below", outliers.below as u64),
                ("outliers_above", outliers.above as u64),
                ("retained", kept.len() as u64),
            ]),
        })
    })
}

fn stage_features(run: &mut Run) -> Result<(), PipelineError> {
    let inputs = BTreeMap::from([
        ("posts.jsonl".to_string(), run.output_hash("posts", "posts.jsonl")),
        ("estimates.csv".to_string(), run.output_hash("estimate", "estimates.csv")),
    ]);
    let seed = run.cfg.stage_seed("labels");
    let needs_resonance = run.cfg.model.tasks.contains(&Task::Resonance);
    let params = json!({ "covid": run.cfg.covid, "corpus": run.cfg.corpus, "resonance": needs_resonance });
    run.stage("features", inputs, params, Some(seed), |r| {
        let posts = read_posts_jsonl(&r.path("posts.jsonl"))?;
        let estimates: BTreeMap<String, EstimateRow> = read_estimates(&r.path("estimates.csv"))?
            .into_iter()
            .map(|e| (e.post_id.clone(), e))
            .collect();
        let experienced = experienced_user_set(&posts, r.cfg.corpus.experienced_fraction).map_err(|e| PipelineError::Data(e.to_string()))?;
        let modeling: Vec<&PostRecord> = posts.iter().filter(|p| estimates.contains_key(&p.id)).collect();
        if modeling.is_empty() {
            return Err(PipelineError::Data("no posts survived estimation".into()));
        }
        let owned: Vec<PostRecord> = modeling.iter().map(|p| (*p).clone()).collect();
        let labels = match build_labels(&owned, r.cfg.corpus.resonant_quantile, seed) {
            Ok(l) => l,
            Err(e) if needs_resonance => return Err(PipelineError::Data(e.to_string())),
            Err(_) => crate::corpus::Labels {
                labels: owned
                    .iter()
                    .map(|p| LabelSet {
                        engagement: p.num_comments >= 1,
                        resonance: None,
                    })
                    .collect(),
                resonance_threshold: 0,
                resonant_count: 0,
                non_resonant_count: 0,
            },
        };
        let covid = CovidBounds::new(r.cfg.covid.start, r.cfg.covid.end).map_err(|e| PipelineError::Config(e.to_string()))?;
        let lexicon = DescriptorLexicon::default();
        let e_cols = Block::E.columns();
        let records: Vec<FeatureRecord> = owned
            .iter()
            .zip(&labels.labels)
            .map(|(p, l)| {
                let controls = derive_controls(p, &experienced.authors, covid);
                let flags = match_descriptors(&p.title_clean, &lexicon);
                let row = build_row(estimates[&p.id].densities(), &flags, (false, false), &controls);
                let base = row
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| !e_cols.contains(i))
                    .map(|(_, v)| v)
                    .collect();
                FeatureRecord {
                    post_id: p.id.clone(),
                    engagement: l.engagement,
                    resonance: if needs_resonance { l.resonance } else { None },
                    base,
                }
            })
            .collect();
        write_features(&r.path("features.csv"), &base_feature_names(), &records)?;
        let engaged = records.iter().filter(|f| f.engagement).count() as u64;
        Ok(StageOutput {
            files: vec!["features.csv".into()],
            counts: counts([
                ("modeling_posts", records.len() as u64),
                ("engaged", engaged),
                ("not_engaged", records.len() as u64 - engaged),
                ("resonant", labels.resonant_count as u64),
                ("non_resonant_sampled", labels.non_resonant_count as u64),
                ("resonance_threshold", labels.resonance_threshold),
                ("experienced_authors", experienced.authors.len() as u64),
                ("experienced_min_posts", experienced.min_posts),
            ]),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningArtifact {
    /// "tuned" or "configured".
    pub source: String,
    pub config: GbtConfig,
    pub search: Option<TuneResult>,
}

/// Reads the task table and reconstructs full rows from the mined discriminators.
struct TaskInputs {
    table: TaskTable,
    split: Fold,
    rows: Vec<Vec<f64>>,
}

fn load_task_inputs(r: &Run, task: Task) -> Result<TaskInputs, PipelineError> {
    let posts = read_posts_jsonl(&r.path("posts.jsonl"))?;
    let (_, features) = read_features(&r.path("features.csv"))?;
    let table = task_table(task, &features, &posts)?;
    let disc: DiscriminatorSet = read_json(&r.path(&format!("{task}/discriminators.json")))?;
    let split_rec: SplitRecord = read_json(&r.path(&format!("{task}/split.json")))?;
    let split = table.fold_from(&split_rec)?;
    let rows = table.full_rows(&disc, &Stopwords::english());
    Ok(TaskInputs { table, split, rows })
}

fn stage_mine(run: &mut Run, task: Task) -> Result<(), PipelineError> {
    let name = format!("mine_{task}");
    let inputs = BTreeMap::from([
        ("features.csv".to_string(), run.output_hash("features", "features.csv")),
        ("posts.jsonl".to_string(), run.output_hash("posts", "posts.jsonl")),
    ]);
    let seed = run.cfg.stage_seed(&name);
    let params = json!({ "mining": run.cfg.mining, "test_fraction": run.cfg.model.test_fraction });
    run.stage(&name.clone(), inputs, params, Some(seed), |r| {
        let posts = read_posts_jsonl(&r.path("posts.jsonl"))?;
        let (_, features) = read_features(&r.path("features.csv"))?;
        let table = task_table(task, &features, &posts)?;
        let split = split_for(
            &table.labels,
            &ExperimentConfig {
                test_fraction: r.cfg.model.test_fraction,
                n_bootstrap: 0,
                seed,
            },
        )
        .map_err(|e| PipelineError::Data(format!("{task}: {e}")))?;
        let (pos, neg): (Vec<usize>, Vec<usize>) = split.train.iter().partition(|&&i| table.labels[i] == 1);
        let titles = |idx: &[usize]| idx.iter().map(|&i| table.titles[i].clone()).collect::<Vec<_>>();
        let discriminators = mine_discriminators(&titles(&pos), &titles(&neg), &mining_config(r.cfg), &Stopwords::english());
        write_json(&r.path(&format!("{task}/discriminators.json")), &discriminators)?;
        let split_rec = SplitRecord {
            train: split.train.iter().map(|&i| table.post_ids[i].clone()).collect(),
            test: split.valid.iter().map(|&i| table.post_ids[i].clone()).collect(),
        };
        write_json(&r.path(&format!("{task}/split.json")), &split_rec)?;
        let positives = table.labels.iter().filter(|&&y| y == 1).count() as u64;
        Ok(StageOutput {
            files: vec![format!("{task}/discriminators.json"), format!("{task}/split.json")],
            counts: counts([
                ("task_posts", table.labels.len() as u64),
                ("positives", positives),
                ("train", split.train.len() as u64),
                ("test", split.valid.len() as u64),
                ("positive_discriminators", discriminators.positive.len() as u64),
                ("negative_discriminators", discriminators.negative.len() as u64),
            ]),
        })
    })
}

fn stage_tune(run: &mut Run, task: Task) -> Result<(), PipelineError> {
    let name = format!("tune_{task}");
    let mut inputs = run.all_outputs(&format!("mine_{task}"));
    inputs.insert("features.csv".into(), run.output_hash("features", "features.csv"));
    inputs.insert("posts.jsonl".into(), run.output_hash("posts", "posts.jsonl"));
    let seed = run.cfg.stage_seed(&name);
    let m = &run.cfg.model;
    let params = json!({
        "tuning": m.tuning,
        "grid": m.tuning.effective_grid(),
        "fixed": [m.n_estimators, m.max_depth, m.learning_rate],
    });
    run.stage(&name.clone(), inputs, params, Some(seed), |r| {
        let err = stage_err(&name);
        let m = &r.cfg.model;
        let artifact = if m.tuning.enabled {
            let ti = load_task_inputs(r, task)?;
            let train = Dataset::from_full_rows(
                FeatureSet::full(),
                &ti.split.train.iter().map(|&i| ti.rows[i].clone()).collect::<Vec<_>>(),
                &ti.split.train.iter().map(|&i| ti.table.labels[i]).collect::<Vec<_>>(),
            )
            .map_err(|e| err(e.to_string()))?;
            let tcfg = TuneConfig {
                n_random: m.tuning.n_random,
                k_folds: m.tuning.k_folds,
                seed,
            };
            let tuned = tune_hyperparameters(&train, &m.tuning.effective_grid(), &tcfg).map_err(|e| match e {
                crate::model::ModelError::ClassTooSmall { .. } => PipelineError::Data(format!("{task}: {e}")),
                e => err(e.to_string()),
            })?;
            TuningArtifact {
                source: "tuned".into(),
                config: tuned.best.clone(),
                search: Some(tuned),
            }
        } else {
            TuningArtifact {
                source: "configured".into(),
                config: GbtConfig::new(m.n_estimators, m.max_depth, m.learning_rate),
                search: None,
            }
        };
        write_json(&r.path(&format!("{task}/tuning.json")), &artifact)?;
        Ok(StageOutput {
            files: vec![format!("{task}/tuning.json")],
            counts: counts([
                ("n_estimators", artifact.config.n_estimators as u64),
                ("max_depth", artifact.config.max_depth as u64),
                ("trials", artifact.search.as_ref().map_or(0, |s| s.trials.len() as u64)),
            ]),
        })
    })
}

fn stage_train(run: &mut Run, task: Task) -> Result<(), PipelineError> {
    let name = format!("train_{task}");
    let mut inputs = run.all_outputs(&format!("mine_{task}"));
    inputs.extend(run.all_outputs(&format!("tune_{task}")));
    inputs.insert("features.csv".into(), run.output_hash("features", "features.csv"));
    inputs.insert("posts.jsonl".into(), run.output_hash("posts", "posts.jsonl"));
    let seed = run.cfg.stage_seed(&name);
    let params = json!({ "feature_sets": run.cfg.model.feature_sets, "n_bootstrap": run.cfg.model.n_bootstrap });
    run.stage(&name.clone(), inputs, params, Some(seed), |r| {
        let err = stage_err(&name);
        let m = &r.cfg.model;
        let ti = load_task_inputs(r, task)?;
        let tuning: TuningArtifact = read_json(&r.path(&format!("{task}/tuning.json")))?;
        let gbt = tuning.config.with_seed(seed);
        let exp_cfg = ExperimentConfig {
            test_fraction: m.test_fraction,
            n_bootstrap: m.n_bootstrap,
            seed: stage_seed(seed, "bootstrap"),
        };
        let outcomes =
            run_experiment_matrix(&ti.rows, &ti.table.labels, &m.feature_sets, &ti.split, &gbt, &exp_cfg).map_err(|e| err(e.to_string()))?;
        let reports: Vec<EvalReport> = outcomes.iter().map(|o| o.report.clone()).collect();
        write_json(&r.path(&format!("{task}/evaluation.json")), &reports)?;
        let mut csv_buf = Vec::new();
        write_results_csv(&reports, &mut csv_buf).map_err(|e| err(e.to_string()))?;
        write_atomic(&r.path(&format!("{task}/results.csv")), &csv_buf)?;
        let mut files = vec![format!("{task}/evaluation.json"), format!("{task}/results.csv")];
        for o in &outcomes {
            let f = model_file(task, o.feature_set);
            write_atomic(&r.path(&f), o.model.to_json().as_bytes())?;
            files.push(f);
        }
        Ok(StageOutput {
            files,
            counts: counts([("models", outcomes.len() as u64), ("test", ti.split.valid.len() as u64)]),
        })
    })
}

/// Explained feature sets that were also trained.
pub fn explained_sets(cfg: &PipelineConfig) -> Vec<FeatureSet> {
    let trained: BTreeSet<FeatureSet> = cfg.model.feature_sets.iter().copied().collect();
    let mut out: Vec<FeatureSet> = Vec::new();
    for fs in &cfg.explain.feature_sets {
        if trained.contains(fs) && !out.contains(fs) {
            out.push(*fs);
        }
    }
    out
}

pub fn importance_file(task: Task, fs: FeatureSet, ext: &str) -> String {
    format!("{task}/importance_{}.{ext}", fs.label().replace('+', "_"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceArtifact {
    pub feature_set: String,
    pub mode: ExplainMode,
    pub instances: usize,
    pub background: usize,
    pub importance: GlobalImportance,
}

fn sample_sorted(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

fn stage_explain(run: &mut Run, task: Task) -> Result<(), PipelineError> {
    let name = format!("explain_{task}");
    let sets = explained_sets(run.cfg);
    let mut inputs = run.all_outputs(&format!("mine_{task}"));
    // models only: re-evaluation alone does not invalidate explanations
    inputs.extend(run.all_outputs(&format!("train_{task}")).into_iter().filter(|(k, _)| k.contains("/models/")));
    inputs.insert("features.csv".into(), run.output_hash("features", "features.csv"));
    inputs.insert("posts.jsonl".into(), run.output_hash("posts", "posts.jsonl"));
    let seed = run.cfg.stage_seed(&name);
    let params = json!({ "explain": run.cfg.explain, "sets": sets });
    run.stage(&name.clone(), inputs, params, Some(seed), |r| {
        let err = stage_err(&name);
        let e = &r.cfg.explain;
        let TaskInputs { table, split: fold, rows } = load_task_inputs(r, task)?;
        let bg_idx = sample_sorted(fold.train.len(), e.background_size, stage_seed(seed, "background"));
        let inst_idx = sample_sorted(fold.valid.len(), e.instances, stage_seed(seed, "instances"));
        let mut files = Vec::new();
        let mut n_explained = 0;
        for fs in &sets {
            let model = TrainedModel::from_json(&std::fs::read_to_string(r.path(&model_file(task, *fs)))?).map_err(|e| err(e.to_string()))?;
            let names = fs.feature_names();
            let background: Vec<Vec<f64>> = bg_idx.iter().map(|&k| fs.project(&rows[fold.train[k]])).collect();
            let instances: Vec<(String, Vec<f64>)> = inst_idx
                .iter()
                .map(|&k| {
                    let i = fold.valid[k];
                    (table.post_ids[i].clone(), fs.project(&rows[i]))
                })
                .collect();
            let mode = match e.mode {
                ExplainMode::Exact if fs.width() > MAX_EXACT_FEATURES => {
                    warn!("{task} {fs}: {} features exceed exact mode, sampling instead", fs.width());
                    ExplainMode::Sample
                }
                m => m,
            };
            let explanations =
                explain_all(&model, &names, &instances, &background, mode, e.permutations, stage_seed(seed, &fs.label())).map_err(|e| err(e.to_string()))?;
            if explanations.is_empty() {
                continue;
            }
            n_explained += explanations.len();
            let importance = global_importance(&explanations).map_err(|e| err(e.to_string()))?;
            let mut buf = Vec::new();
            importance.write_csv(&mut buf).map_err(|e| err(e.to_string()))?;
            write_atomic(&r.path(&importance_file(task, *fs, "csv")), &buf)?;
            write_json(
                &r.path(&importance_file(task, *fs, "json")),
                &ImportanceArtifact {
                    feature_set: fs.label(),
                    mode,
                    instances: explanations.len(),
                    background: background.len(),
                    importance,
                },
            )?;
            let tag = fs.label().replace('+', "_");
            let mut buf = Vec::new();
            export_beeswarm(&explanations, &mut buf).map_err(|e| err(e.to_string()))?;
            write_atomic(&r.path(&format!("{task}/beeswarm_{tag}.csv")), &buf)?;
            // waterfall for the instance with the highest predicted margin
            let top = explanations
                .iter()
                .max_by(|a, b| a.prediction_margin.total_cmp(&b.prediction_margin).then_with(|| b.instance_id.cmp(&a.instance_id)))
                .expect("non-empty");
            let mut buf = Vec::new();
            export_waterfall(top, &mut buf).map_err(|e| err(e.to_string()))?;
            write_atomic(&r.path(&format!("{task}/waterfall_{tag}.csv")), &buf)?;
            files.extend([
                importance_file(task, *fs, "csv"),
                importance_file(task, *fs, "json"),
                format!("{task}/beeswarm_{tag}.csv"),
                format!("{task}/waterfall_{tag}.csv"),
            ]);
        }
        Ok(StageOutput {
            files,
            counts: counts([
                ("models_explained", sets.len() as u64),
                ("explanations", n_explained as u64),
                ("background_rows", bg_idx.len() as u64),
            ]),
        })
    })
}

fn stage_report(run: &mut Run) -> Result<(), PipelineError> {
    let mut inputs = BTreeMap::new();
    for s in &run.manifest.stages {
        for (f, h) in &s.outputs {
            inputs.insert(format!("{}:{f}", s.name), h.clone());
        }
        inputs.insert(format!("{}:counts", s.name), sha256_bytes(json!(s.counts).to_string().as_bytes()));
    }
    run.stage("report", inputs, json!({}), None, |r| {
        let files = report::build_report(&r.dir, r.cfg, &r.manifest)?;
        Ok(StageOutput {
            files,
            counts: BTreeMap::new(),
        })
    })
}
