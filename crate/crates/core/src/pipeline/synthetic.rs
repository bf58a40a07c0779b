//! Synthetic corpus with a planted nutrition → engagement effect.
//!
//! Comment probability is logistic in the calorie density that the
//! estimator itself assigns to each title (fallback embedder, calibrated
//! threshold), plus weekend and author-tenure terms.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Zipf};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::PipelineError;
use crate::corpus::{clean_title, experienced_user_set, utc_weekday, PostRecord, Tag};
use crate::embeddings::FallbackEmbedder;
use crate::food_db::{FoodDatabase, FoodItem, FoodSource};
use crate::matcher::{calibrate_threshold, estimate_nutrition, CalibrationConfig, FoodIndex};

/// (name, protein, carb, fat) per 100 g.
const BASE_FOODS: [(&str, f64, f64, f64); 40] = [
    ("chicken breast", 31.0, 0.0, 3.6),
    ("chicken wings", 27.0, 0.0, 19.0),
    ("beef burger", 17.0, 24.0, 14.0),
    ("cheeseburger", 15.0, 24.0, 16.0),
    ("pepperoni pizza", 11.0, 30.0, 12.0),
    ("margherita pizza", 10.0, 31.0, 8.0),
    ("spaghetti carbonara", 12.0, 28.0, 14.0),
    ("lasagna", 9.0, 15.0, 8.0),
    ("mac and cheese", 11.0, 27.0, 15.0),
    ("beef stew", 10.0, 6.0, 5.0),
    ("pork ribs", 24.0, 3.0, 22.0),
    ("pulled pork sandwich", 16.0, 25.0, 10.0),
    ("salmon fillet", 22.0, 0.0, 12.0),
    ("shrimp tacos", 13.0, 20.0, 7.0),
    ("fish and chips", 12.0, 22.0, 13.0),
    ("caesar salad", 7.0, 6.0, 12.0),
    ("greek salad", 4.0, 5.0, 8.0),
    ("vegetable soup", 2.0, 7.0, 1.0),
    ("tomato soup", 2.0, 8.0, 2.0),
    ("ramen noodles", 8.0, 26.0, 7.0),
    ("fried rice", 6.0, 30.0, 6.0),
    ("pad thai", 9.0, 27.0, 8.0),
    ("chicken curry", 13.0, 8.0, 9.0),
    ("beef tacos", 14.0, 18.0, 11.0),
    ("bean burrito", 8.0, 28.0, 6.0),
    ("vegan buddha bowl", 6.0, 20.0, 5.0),
    ("avocado toast", 6.0, 20.0, 11.0),
    ("pancakes", 6.0, 28.0, 9.0),
    ("waffles", 8.0, 33.0, 14.0),
    ("chocolate cake", 5.0, 50.0, 22.0),
    ("cheesecake", 6.0, 26.0, 23.0),
    ("apple pie", 2.0, 34.0, 11.0),
    ("chocolate chip cookies", 5.0, 64.0, 24.0),
    ("blueberry muffin", 5.0, 48.0, 17.0),
    ("croissant", 8.0, 46.0, 21.0),
    ("sourdough bread", 9.0, 51.0, 2.0),
    ("vanilla custard", 4.0, 17.0, 5.0),
    ("rice pudding", 3.0, 22.0, 3.0),
    ("steamed dumplings", 7.0, 24.0, 5.0),
    ("roast turkey", 29.0, 0.0, 7.0),
];

/// (word, fat added g, carb added g).
const PREPARATIONS: [(&str, f64, f64); 5] = [
    ("grilled", -1.0, 0.0),
    ("fried", 12.0, 6.0),
    ("baked", 0.0, 0.0),
    ("steamed", -2.0, -1.0),
    ("creamy", 8.0, 3.0),
];

const OPENERS: [&str; 8] = ["", "", "", "Homemade ", "My ", "Late night ", "Sunday ", "First try at "];
const CLOSERS: [&str; 8] = ["", "", "", " for dinner", " for lunch", " with friends", " from scratch", " at a local spot"];
const FLAIRS: [Option<&str>; 5] = [Some("[I ate]"), Some("[Homemade]"), Some("[Pro/Chef]"), Some("[Homemade]"), None];

pub const SYNTHETIC_START: i64 = 1_546_300_800; // 2019-01-01
pub const SYNTHETIC_END: i64 = 1_672_531_200; // 2023-01-01

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_posts: usize,
    pub seed: u64,
    /// Intercept of the engagement logit.
    pub intercept: f64,
    /// Logit change per standard deviation of estimated kcal.
    pub kcal_effect: f64,
    pub weekend_effect: f64,
    pub experienced_effect: f64,
    /// Fractions of extra noise rows.
    pub deleted_rate: f64,
    pub duplicate_rate: f64,
    pub malformed_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_posts: 5000,
            seed: 7,
            intercept: 0.0,
            kcal_effect: 1.0,
            weekend_effect: 0.3,
            experienced_effect: 0.8,
            deleted_rate: 0.01,
            duplicate_rate: 0.01,
            malformed_rate: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub food_db: FoodDatabase,
    /// JSON Lines of the post dump, noise rows included.
    pub lines: Vec<String>,
    /// Similarity threshold used when planting the effect.
    pub threshold: f64,
}

pub fn synthetic_food_db() -> FoodDatabase {
    let mut items = Vec::new();
    for (i, (name, p, c, f)) in BASE_FOODS.iter().enumerate() {
        for (j, (prep, df, dc)) in PREPARATIONS.iter().enumerate() {
            let fat = (f + df).max(0.0);
            let carb = (c + dc).max(0.0);
            // water and fibre keep kcal off the pure Atwater line
            let jitter = 1.0 + 0.08 * (((i * 7 + j * 3) % 11) as f64 - 5.0) / 5.0;
            let kcal = ((4.0 * p + 4.0 * carb + 9.0 * fat) * jitter).round();
            items.push(FoodItem {
                id: format!("{}", 100_000 + i * 10 + j),
                description: format!("{name}, {prep}"),
                kcal,
                protein_g: *p,
                carb_g: carb,
                fat_g: fat,
                source: if j == 0 { FoodSource::FoundationFoods } else { FoodSource::FNDDS },
            });
        }
    }
    FoodDatabase::from_items(items)
}

struct Draft {
    id: String,
    author: String,
    title: String,
    created_utc: i64,
    flair: Option<&'static str>,
    score: i64,
}

fn title_for(rng: &mut ChaCha8Rng) -> String {
    let (food, ..) = BASE_FOODS[rng.gen_range(0..BASE_FOODS.len())];
    let prep = PREPARATIONS[rng.gen_range(0..PREPARATIONS.len())].0;
    let open = OPENERS[rng.gen_range(0..OPENERS.len())];
    let close = CLOSERS[rng.gen_range(0..CLOSERS.len())];
    let body = if rng.gen_bool(0.5) { format!("{prep} {food}") } else { food.to_string() };
    let mut t = format!("{open}{body}{close}");
    if let Some(c) = t.get_mut(0..1) {
        c.make_ascii_uppercase();
    }
    if rng.gen_bool(0.1) {
        t.push_str(" 😋");
    }
    t
}

/// Generate a corpus; identical configs give identical output.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, PipelineError> {
    if cfg.n_posts == 0 {
        return Err(PipelineError::Config("n_posts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let db = synthetic_food_db();
    let n_authors = (cfg.n_posts / 4).max(20) as u64;
    let zipf = Zipf::new(n_authors, 1.1).map_err(|e| PipelineError::Config(e.to_string()))?;
    let drafts: Vec<Draft> = (0..cfg.n_posts)
        .map(|i| Draft {
            id: format!("s{i:06}"),
            author: format!("user{}", zipf.sample(&mut rng) as u64),
            title: title_for(&mut rng),
            created_utc: rng.gen_range(SYNTHETIC_START..SYNTHETIC_END),
            flair: FLAIRS[rng.gen_range(0..FLAIRS.len())],
            score: rng.gen_range(0..500),
        })
        .collect();

    let embedder = FallbackEmbedder::default();
    let index = FoodIndex::build(&db, &embedder).map_err(|e| PipelineError::Data(e.to_string()))?;
    let titles: Vec<String> = drafts.iter().map(|d| clean_title(&d.title)).collect();
    let cal = calibrate_threshold(
        &titles,
        &index,
        &embedder,
        &CalibrationConfig {
            rng_seed: cfg.seed,
            ..CalibrationConfig::default()
        },
    )
    .map_err(|e| PipelineError::Data(e.to_string()))?;
    let kcal: Vec<Option<f64>> = titles
        .iter()
        .map(|t| estimate_nutrition(t, &index, &embedder, cal.threshold).ok().flatten().map(|e| e.kcal))
        .collect();
    let known: Vec<f64> = kcal.iter().flatten().copied().collect();
    let mean = known.iter().sum::<f64>() / known.len().max(1) as f64;
    let sd = (known.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / known.len().max(1) as f64).sqrt().max(1e-9);

    let records: Vec<PostRecord> = drafts
        .iter()
        .zip(&titles)
        .map(|(d, t)| PostRecord {
            id: d.id.clone(),
            author: d.author.clone(),
            title_raw: d.title.clone(),
            title_clean: t.clone(),
            created_utc: d.created_utc,
            num_comments: 0,
            score: d.score,
            tag: Tag::from_flair(d.flair),
        })
        .collect();
    let experienced: HashSet<String> = experienced_user_set(&records, 0.05)
        .map_err(|e| PipelineError::Data(e.to_string()))?
        .authors;

    let tail = LogNormal::<f64>::new(1.0, 1.2).expect("valid parameters");
    let noise = Normal::new(0.0, 1.0).expect("valid parameters");
    let mut lines = Vec::with_capacity(cfg.n_posts + cfg.n_posts / 20);
    for (d, k) in drafts.iter().zip(&kcal) {
        let z = k.map_or_else(|| noise.sample(&mut rng), |k| (k - mean) / sd);
        let weekend = utc_weekday(d.created_utc) >= 5;
        let logit = cfg.intercept
            + cfg.kcal_effect * z
            + if weekend { cfg.weekend_effect } else { 0.0 }
            + if experienced.contains(&d.author) { cfg.experienced_effect } else { 0.0 };
        let engaged = rng.gen_bool(1.0 / (1.0 + (-logit).exp()));
        let comments = if engaged { 1 + tail.sample(&mut rng).floor() as u64 } else { 0 };
        let obj = json!({
            "id": d.id,
            "author": d.author,
            "title": d.title,
            "created_utc": d.created_utc,
            "num_comments": comments,
            "score": d.score,
            "link_flair_text": d.flair,
        });
        lines.push(obj.to_string());
        if rng.gen_bool(cfg.duplicate_rate) {
            let mut dup = obj.clone();
            dup["id"] = json!(format!("{}d", d.id));
            dup["created_utc"] = json!(d.created_utc + rng.gen_range(1..=300));
            lines.push(dup.to_string());
        }
        if rng.gen_bool(cfg.deleted_rate) {
            let mut del = obj.clone();
            del["id"] = json!(format!("{}x", d.id));
            del["title"] = json!(if rng.gen_bool(0.5) { "[deleted]" } else { "[removed]" });
            lines.push(del.to_string());
        }
        if rng.gen_bool(cfg.malformed_rate) {
            lines.push(format!("{{\"id\": \"{}m\", \"title\": ", d.id));
        }
    }
    Ok(SyntheticCorpus {
        food_db: db,
        lines,
        threshold: cal.threshold,
    })
}

/// Write `food_db.csv` and `posts.jsonl` into `dir`.
pub fn write_synthetic(dir: &Path, cfg: &SyntheticConfig) -> Result<SyntheticCorpus, PipelineError> {
    let corpus = generate(cfg)?;
    std::fs::create_dir_all(dir)?;
    corpus
        .food_db
        .save(&dir.join("food_db.csv"))
        .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("posts.jsonl"))?);
    for l in &corpus.lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(corpus)
}
