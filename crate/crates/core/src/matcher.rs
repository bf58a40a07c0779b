//! Similarity matching of post titles against the food database.
//!
//! A title's estimate is the similarity-weighted mean of the densities of
//! its (at most five) closest food items whose cosine similarity reaches the
//! calibrated threshold. The threshold itself is the median, over a sample
//! of titles, of each title's high quantile of similarity to every item.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PostRecord;
use crate::embeddings::{cosine_slices, EmbeddingProvider};
use crate::food_db::{FoodDatabase, FoodItem};

pub const MAX_MATCHES: usize = 5;
pub const DEFAULT_LOW_KCAL: f64 = 32.0;
pub const DEFAULT_HIGH_KCAL: f64 = 717.0;

/// Fraction of calibration titles allowed to lack a vector before aborting.
const MISSING_VECTOR_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("calibration sample is empty")]
    EmptySample,
    #[error("no vector for {0:?}")]
    MissingVector(String),
    #[error("{missing} of {total} calibration titles have no vector (first: {first:?})")]
    TooManyMissing { missing: usize, total: usize, first: String },
    #[error("invalid outlier bounds: low {low} must be below high {high}")]
    InvalidBounds { low: f64, high: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("title is empty")]
    EmptyTitle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub sample_size: usize,
    pub per_post_quantile: f64,
    /// Granularity the threshold is rounded up to, as a fraction (0.01 = one percentage point).
    pub rounding_precision: f64,
    pub rng_seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            sample_size: 5000,
            per_post_quantile: 0.999,
            rounding_precision: 0.01,
            rng_seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.per_post_quantile > 0.0 && self.per_post_quantile < 1.0) {
            return Err(MatchError::InvalidConfig(format!(
                "per_post_quantile {} outside (0, 1)",
                self.per_post_quantile
            )));
        }
        if self.sample_size == 0 {
            return Err(MatchError::InvalidConfig("sample_size must be at least 1".into()));
        }
        if !(self.rounding_precision > 0.0 && self.rounding_precision <= 1.0) {
            return Err(MatchError::InvalidConfig(format!(
                "rounding_precision {} outside (0, 1]",
                self.rounding_precision
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub per_post_quantiles: Vec<f64>,
    pub median_quantile: f64,
    pub threshold: f64,
    pub sample_size_used: usize,
    pub missing_titles: Vec<String>,
}

/// Nearest-rank quantile: the k-th smallest value with k = ⌈q·n⌉ (clamped to 1..=n).
///
/// `values` need not be sorted. Returns `None` for an empty slice.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = nearest_rank(values.len(), q);
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Some(*kth)
}

/// 1-based rank ⌈q·n⌉, treating products within 1e-9 of an integer as that integer.
pub fn nearest_rank(n: usize, q: f64) -> usize {
    let x = q * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).clamp(1, n)
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Round `value` up to a multiple of `precision`, absorbing float noise below 1e-9.
pub fn round_up_to(value: f64, precision: f64) -> f64 {
    let steps = value / precision;
    let r = steps.round();
    let steps = if (steps - r).abs() < 1e-9 { r } else { steps.ceil() };
    // snap to 12 decimals so 70 steps of 0.01 is 0.7, not 0.7000000000000001
    ((steps * precision) * 1e12).round() / 1e12
}

/// Calibrate from precomputed per-title similarity rows.
pub fn calibrate_from_rows(
    rows: &[Vec<f64>],
    quantile: f64,
    precision: f64,
) -> Result<CalibrationReport, MatchError> {
    let per_post_quantiles: Vec<f64> = rows
        .iter()
        .filter_map(|r| nearest_rank_quantile(r, quantile))
        .collect();
    let median_quantile = median(&per_post_quantiles).ok_or(MatchError::EmptySample)?;
    let threshold = round_up_to(median_quantile, precision).clamp(0.0, 1.0);
    Ok(CalibrationReport {
        sample_size_used: per_post_quantiles.len(),
        per_post_quantiles,
        median_quantile,
        threshold,
        missing_titles: Vec::new(),
    })
}

/// Food items paired with their vectors, ready for brute-force scans.
#[derive(Debug, Clone)]
pub struct FoodIndex {
    items: Vec<FoodItem>,
    dim: usize,
    vectors: Vec<f32>,
}

impl FoodIndex {
    pub fn build(db: &FoodDatabase, provider: &dyn EmbeddingProvider) -> Result<Self, MatchError> {
        let dim = provider.dim();
        let mut vectors = Vec::with_capacity(dim * db.count());
        for item in db.iter() {
            let v = provider
                .food_vector(item)
                .filter(|v| v.dim() == dim)
                .ok_or_else(|| MatchError::MissingVector(item.id.clone()))?;
            vectors.extend_from_slice(v.values());
        }
        Ok(FoodIndex {
            items: db.items().to_vec(),
            dim,
            vectors,
        })
    }

    pub fn items(&self) -> &[FoodItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Cosine similarity of `query` to every item, in database order.
    pub fn similarities(&self, query: &[f32]) -> Vec<f64> {
        self.vectors
            .chunks_exact(self.dim)
            .map(|v| cosine_slices(query, v))
            .collect()
    }
}

/// Per-100 g estimate for one title.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NutritionEstimate {
    pub kcal: f64,
    pub protein_g: f64,
    pub carb_g: f64,
    pub fat_g: f64,
    /// (food id, similarity), highest similarity first.
    pub matches: Vec<(String, f64)>,
    pub matched_count: usize,
}

impl NutritionEstimate {
    pub fn densities(&self) -> [f64; 4] {
        [self.kcal, self.protein_g, self.carb_g, self.fat_g]
    }

    pub fn top_match(&self) -> Option<&(String, f64)> {
        self.matches.first()
    }
}

/// Similarity-weighted mean Σ(sᵢ·dᵢ)/Σsᵢ of the matched items' densities.
///
/// `matches` must be non-empty with positive similarities and is kept in
/// the given order.
pub fn weighted_estimate(matches: &[(&FoodItem, f64)]) -> NutritionEstimate {
    let total: f64 = matches.iter().map(|(_, s)| s).sum();
    let mut acc = [0.0f64; 4];
    for (item, s) in matches {
        for (a, d) in acc.iter_mut().zip(item.densities()) {
            *a += s * d;
        }
    }
    let [kcal, protein_g, carb_g, fat_g] = acc.map(|a| a / total);
    NutritionEstimate {
        kcal,
        protein_g,
        carb_g,
        fat_g,
        matches: matches.iter().map(|(it, s)| (it.id.clone(), *s)).collect(),
        matched_count: matches.len(),
    }
}

/// Select up to five items at or above `threshold`, ordered by (similarity desc, id asc).
pub fn select_matches<'a>(items: &'a [FoodItem], sims: &[f64], threshold: f64) -> Vec<(&'a FoodItem, f64)> {
    let mut passing: Vec<(&FoodItem, f64)> = items
        .iter()
        .zip(sims)
        .filter(|(_, &s)| s >= threshold)
        .map(|(it, &s)| (it, s))
        .collect();
    passing.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
    passing.truncate(MAX_MATCHES);
    passing
}

/// Estimate one title. `Ok(None)` means no item reached the threshold.
pub fn estimate_nutrition(
    title: &str,
    index: &FoodIndex,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Option<NutritionEstimate>, MatchError> {
    if title.trim().is_empty() {
        return Err(MatchError::EmptyTitle);
    }
    let v = provider
        .title_vector(title)
        .filter(|v| v.dim() == index.dim)
        .ok_or_else(|| MatchError::MissingVector(title.to_string()))?;
    let sims = index.similarities(v.values());
    let matches = select_matches(&index.items, &sims, threshold);
    if matches.is_empty() {
        return Ok(None);
    }
    Ok(Some(weighted_estimate(&matches)))
}

/// Calibrate the similarity threshold on a seeded sample of `titles`.
pub fn calibrate_threshold(
    titles: &[String],
    index: &FoodIndex,
    provider: &dyn EmbeddingProvider,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport, MatchError> {
    cfg.validate()?;
    if titles.is_empty() || index.is_empty() {
        return Err(MatchError::EmptySample);
    }
    let sampled: Vec<&String> = if titles.len() > cfg.sample_size {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let mut idx = sample(&mut rng, titles.len(), cfg.sample_size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &titles[i]).collect()
    } else {
        titles.iter().collect()
    };

    let results: Vec<Result<f64, String>> = sampled
        .par_iter()
        .map(|t| match provider.title_vector(t).filter(|v| v.dim() == index.dim) {
            Some(v) => {
                let sims = index.similarities(v.values());
                Ok(nearest_rank_quantile(&sims, cfg.per_post_quantile).unwrap_or(0.0))
            }
            None => Err((*t).clone()),
        })
        .collect();

    let mut per_post_quantiles = Vec::with_capacity(results.len());
    let mut missing_titles = Vec::new();
    for r in results {
        match r {
            Ok(q) => per_post_quantiles.push(q),
            Err(t) => missing_titles.push(t),
        }
    }
    if !missing_titles.is_empty() {
        log::warn!("{} calibration titles have no vector", missing_titles.len());
        if missing_titles.len() as f64 >= MISSING_VECTOR_TOLERANCE * sampled.len() as f64 {
            return Err(MatchError::TooManyMissing {
                missing: missing_titles.len(),
                total: sampled.len(),
                first: missing_titles[0].clone(),
            });
        }
    }
    let median_quantile = median(&per_post_quantiles).ok_or(MatchError::EmptySample)?;
    let threshold = round_up_to(median_quantile, cfg.rounding_precision).clamp(0.0, 1.0);
    Ok(CalibrationReport {
        sample_size_used: per_post_quantiles.len(),
        per_post_quantiles,
        median_quantile,
        threshold,
        missing_titles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierBounds {
    pub low: f64,
    pub high: f64,
}

impl Default for OutlierBounds {
    fn default() -> Self {
        OutlierBounds {
            low: DEFAULT_LOW_KCAL,
            high: DEFAULT_HIGH_KCAL,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierCounts {
    pub below: usize,
    pub above: usize,
}

/// Keep items whose kcal lies in `[low, high]`; both bounds inclusive.
pub fn filter_outliers<T>(
    items: Vec<T>,
    kcal_of: impl Fn(&T) -> f64,
    bounds: OutlierBounds,
) -> Result<(Vec<T>, OutlierCounts), MatchError> {
    if !(bounds.low < bounds.high) {
        return Err(MatchError::InvalidBounds {
            low: bounds.low,
            high: bounds.high,
        });
    }
    let mut counts = OutlierCounts::default();
    let kept = items
        .into_iter()
        .filter(|it| {
            let k = kcal_of(it);
            if k < bounds.low {
                counts.below += 1;
                false
            } else if k > bounds.high {
                counts.above += 1;
                false
            } else {
                true
            }
        })
        .collect();
    Ok((kept, counts))
}

/// Estimates for a whole corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusEstimates {
    pub estimates: BTreeMap<String, NutritionEstimate>,
    /// Post ids whose title matched nothing, sorted.
    pub no_match: Vec<String>,
    /// Post ids that could not be estimated, sorted by id.
    pub errors: Vec<(String, MatchError)>,
    /// Distinct titles scanned against the database.
    pub unique_titles: usize,
    /// Distinct titles with at least one match.
    pub unique_matched_titles: usize,
}

/// Estimate every post, scanning each distinct cleaned title once.
pub fn estimate_corpus(
    posts: &[PostRecord],
    index: &FoodIndex,
    provider: &dyn EmbeddingProvider,
    threshold: f64,
) -> CorpusEstimates {
    let mut unique: Vec<&str> = posts.iter().map(|p| p.title_clean.as_str()).collect();
    unique.sort_unstable();
    unique.dedup();

    let results: Vec<Result<Option<NutritionEstimate>, MatchError>> = unique
        .par_iter()
        .map(|t| estimate_nutrition(t, index, provider, threshold))
        .collect();
    let memo: HashMap<&str, &Result<Option<NutritionEstimate>, MatchError>> =
        unique.iter().copied().zip(results.iter()).collect();

    let mut out = CorpusEstimates {
        unique_titles: unique.len(),
        unique_matched_titles: results.iter().filter(|r| matches!(r, Ok(Some(_)))).count(),
        ..Default::default()
    };
    for p in posts {
        match memo[p.title_clean.as_str()] {
            Ok(Some(est)) => {
                out.estimates.insert(p.id.clone(), est.clone());
            }
            Ok(None) => out.no_match.push(p.id.clone()),
            Err(e) => out.errors.push((p.id.clone(), e.clone())),
        }
    }
    out.no_match.sort();
    out.errors.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
