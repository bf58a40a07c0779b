//! Human-readable summary and plot-ready tables for a completed run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::artifacts::*;
use super::{explained_sets, importance_file, CalibrationArtifact, ImportanceArtifact, Manifest, PipelineConfig, PipelineError, MANIFEST_FILE};
use crate::model::EvalReport;
use crate::textfeat::{mann_whitney_u, spearman_rho, DiscriminatorSet, StatResult};

pub const REPORT_DIR: &str = "report";
pub const KCAL_BINS: (f64, f64, f64) = (0.0, 750.0, 25.0);
pub const MACRO_BINS: (f64, f64, f64) = (0.0, 100.0, 5.0);

/// One row of the filtering funnel.
#[derive(Debug, Clone, PartialEq)]
pub struct FunnelStep {
    pub step: &'static str,
    pub posts: u64,
}

/// Post counts from raw ingestion to the modeling dataset, taken from the manifest.
pub fn funnel(manifest: &Manifest) -> Result<Vec<FunnelStep>, PipelineError> {
    let get = |stage: &str, key: &str| {
        manifest
            .count(stage, key)
            .ok_or_else(|| PipelineError::IncompleteRun(format!("manifest lacks {stage}.{key}")))
    };
    let collected = get("posts", "collected")?;
    let parsed = get("posts", "parsed")?;
    let after_empty = parsed - get("posts", "removed_empty_or_deleted")?;
    let preprocessed = get("posts", "preprocessed")?;
    let estimated = get("estimate", "matched")?;
    let retained = get("estimate", "retained")?;
    let modeling = get("features", "modeling_posts")?;
    Ok(vec![
        FunnelStep { step: "collected", posts: collected },
        FunnelStep { step: "parsed", posts: parsed },
        FunnelStep { step: "non_empty", posts: after_empty },
        FunnelStep { step: "deduplicated", posts: preprocessed },
        FunnelStep { step: "estimated", posts: estimated },
        FunnelStep { step: "within_bounds", posts: retained },
        FunnelStep { step: "modeling", posts: modeling },
    ])
}

/// Counts per bin over `[lo, hi)` with width `step`; values outside are clamped into the end bins.
pub fn histogram(values: &[f64], (lo, hi, step): (f64, f64, f64)) -> Vec<(f64, f64, u64)> {
    let n_bins = ((hi - lo) / step).round() as usize;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let k = ((v - lo) / step).floor();
        let k = if k.is_nan() || k < 0.0 { 0 } else { (k as usize).min(n_bins - 1) };
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * step, lo + (i + 1) as f64 * step, c))
        .collect()
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn p_fmt(p: f64) -> String {
    format!("{p:.6e}")
}

struct StatRow {
    test: &'static str,
    variable: &'static str,
    grouping: String,
    n_a: usize,
    n_b: usize,
    result: Option<StatResult>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| PipelineError::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))
}

/// Write every report file into `<dir>/report`; returns their run-relative paths.
pub fn build_report(dir: &Path, cfg: &PipelineConfig, manifest: &Manifest) -> Result<Vec<String>, PipelineError> {
    let out = |name: &str| format!("{REPORT_DIR}/{name}");
    let mut files = Vec::new();
    let mut md = String::new();
    writeln!(md, "# Pipeline report\n").ok();
    writeln!(md, "Master seed: {}\n", cfg.seed).ok();

    // funnel
    let steps = funnel(manifest)?;
    let bytes = csv_bytes(&["step", "posts"], steps.iter().map(|s| vec![s.step.to_string(), s.posts.to_string()]))?;
    write_atomic(&dir.join(out("funnel.csv")), &bytes)?;
    files.push(out("funnel.csv"));
    writeln!(md, "## Data filtering\n\n| step | posts |\n|---|---:|").ok();
    for s in &steps {
        writeln!(md, "| {} | {} |", s.step, s.posts).ok();
    }
    let cal: CalibrationArtifact = read_json(&dir.join("calibration.json"))?;
    writeln!(md, "\nSimilarity threshold: {:.4} ({})", cal.threshold, cal.source).ok();
    writeln!(
        md,
        "Calorie bounds: [{}, {}] kcal per 100 g",
        cfg.outliers.low, cfg.outliers.high
    )
    .ok();

    // distributions
    let estimates = read_estimates(&dir.join("estimates.csv"))?;
    let columns: [(&str, fn(&EstimateRow) -> f64, (f64, f64, f64)); 4] = [
        ("kcal", |e| e.kcal, KCAL_BINS),
        ("protein_g", |e| e.protein_g, MACRO_BINS),
        ("carb_g", |e| e.carb_g, MACRO_BINS),
        ("fat_g", |e| e.fat_g, MACRO_BINS),
    ];
    let mut hist_rows = Vec::new();
    writeln!(md, "\n## Nutrient distributions (per 100 g)\n\n| nutrient | mean | median |\n|---|---:|---:|").ok();
    for (name, get, bins) in columns {
        let values: Vec<f64> = estimates.iter().map(get).collect();
        for (lo, hi, c) in histogram(&values, bins) {
            hist_rows.push(vec![name.to_string(), f6(lo), f6(hi), c.to_string()]);
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let median = crate::matcher::median(&sorted).unwrap_or(f64::NAN);
        writeln!(md, "| {name} | {mean:.2} | {median:.2} |").ok();
    }
    write_atomic(&dir.join(out("histograms.csv")), &csv_bytes(&["variable", "bin_low", "bin_high", "count"], hist_rows)?)?;
    files.push(out("histograms.csv"));

    // explorative statistics
    let posts = read_posts_jsonl(&dir.join("posts.jsonl"))?;
    let by_id = index_by_id(&posts);
    let (_, features) = read_features(&dir.join("features.csv"))?;
    let est_by_id: BTreeMap<&str, &EstimateRow> = estimates.iter().map(|e| (e.post_id.as_str(), e)).collect();
    let mut stats = Vec::new();
    for (variable, get, _) in columns {
        let mut groups: BTreeMap<(&str, bool), Vec<f64>> = BTreeMap::new();
        let mut comments = Vec::new();
        let mut values = Vec::new();
        for f in &features {
            let Some(e) = est_by_id.get(f.post_id.as_str()) else { continue };
            let v = get(e);
            groups.entry(("engagement", f.engagement)).or_default().push(v);
            if let Some(res) = f.resonance {
                groups.entry(("resonance", res)).or_default().push(v);
            }
            if let Some(p) = by_id.get(f.post_id.as_str()) {
                comments.push(p.num_comments as f64);
                values.push(v);
            }
        }
        for task in cfg.model.tasks.iter().map(|t| t.as_str()) {
            let empty = Vec::new();
            let a = groups.get(&(task, true)).unwrap_or(&empty);
            let b = groups.get(&(task, false)).unwrap_or(&empty);
            stats.push(StatRow {
                test: "mann_whitney_u",
                variable,
                grouping: task.to_string(),
                n_a: a.len(),
                n_b: b.len(),
                result: mann_whitney_u(a, b).ok(),
            });
        }
        stats.push(StatRow {
            test: "spearman",
            variable,
            grouping: "num_comments".into(),
            n_a: values.len(),
            n_b: comments.len(),
            result: spearman_rho(&values, &comments).ok(),
        });
    }
    writeln!(md, "\n## Statistical tests\n\n| test | variable | against | statistic | p |\n|---|---|---|---:|---:|").ok();
    let stat_rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            let (stat, p) = s.result.map_or((String::new(), String::new()), |r| (f6(r.statistic), p_fmt(r.p_value)));
            writeln!(md, "| {} | {} | {} | {} | {} |", s.test, s.variable, s.grouping, stat, p).ok();
            vec![s.test.into(), s.variable.into(), s.grouping.clone(), s.n_a.to_string(), s.n_b.to_string(), stat, p]
        })
        .collect();
    write_atomic(
        &dir.join(out("stats.csv")),
        &csv_bytes(&["test", "variable", "grouping", "n_a", "n_b", "statistic", "p_value"], stat_rows)?,
    )?;
    files.push(out("stats.csv"));

    // results and importance
    let mut result_rows = Vec::new();
    let mut importance_rows = Vec::new();
    for &task in &cfg.model.tasks {
        let reports: Vec<EvalReport> = read_json(&dir.join(format!("{task}/evaluation.json")))?;
        let disc: DiscriminatorSet = read_json(&dir.join(format!("{task}/discriminators.json")))?;
        writeln!(md, "\n## {task}\n").ok();
        if let Some(s) = manifest.stage(&format!("mine_{task}")) {
            let c = |k: &str| s.counts.get(k).copied().unwrap_or(0);
            writeln!(
                md,
                "{} posts ({} positive); train {} / test {}.",
                c("task_posts"),
                c("positives"),
                c("train"),
                c("test")
            )
            .ok();
        }
        let words = |v: &[crate::textfeat::DiscriminatorEntry]| v.iter().map(|d| d.word.as_str()).collect::<Vec<_>>().join(", ");
        writeln!(md, "Positive discriminators: {}", words(&disc.positive)).ok();
        writeln!(md, "Negative discriminators: {}\n", words(&disc.negative)).ok();
        writeln!(md, "| features | ROC-AUC | 95% CI |\n|---|---:|---|").ok();
        for r in &reports {
            writeln!(md, "| {} | {:.3} | [{:.3}, {:.3}] |", r.feature_set, r.roc_auc, r.ci_low, r.ci_high).ok();
            result_rows.push(vec![task.to_string(), r.feature_set.clone(), f6(r.roc_auc), f6(r.ci_low), f6(r.ci_high)]);
        }
        for fs in explained_sets(cfg) {
            let path = dir.join(importance_file(task, fs, "json"));
            if !path.exists() {
                continue;
            }
            let imp: ImportanceArtifact = read_json(&path)?;
            writeln!(md, "\nMost important features for {} ({} instances):\n", imp.feature_set, imp.instances).ok();
            for (rank, (f, v)) in imp.importance.features.iter().enumerate() {
                if rank < 10 {
                    writeln!(md, "{}. {f} ({v:.4})", rank + 1).ok();
                }
                importance_rows.push(vec![task.to_string(), imp.feature_set.clone(), (rank + 1).to_string(), f.clone(), f6(*v)]);
            }
        }
    }
    write_atomic(
        &dir.join(out("results.csv")),
        &csv_bytes(&["task", "feature_set", "auc", "ci_low", "ci_high"], result_rows)?,
    )?;
    write_atomic(
        &dir.join(out("importance.csv")),
        &csv_bytes(&["task", "feature_set", "rank", "feature", "mean_abs_phi"], importance_rows)?,
    )?;
    files.push(out("results.csv"));
    files.push(out("importance.csv"));
    write_atomic(&dir.join(out("report.md")), md.as_bytes())?;
    files.push(out("report.md"));
    Ok(files)
}

/// Stages a complete run must contain for `cfg`.
pub fn required_stages(cfg: &PipelineConfig) -> Vec<String> {
    let mut v: Vec<String> = ["food_db", "posts", "calibrate", "estimate", "features"].map(String::from).to_vec();
    for t in &cfg.model.tasks {
        for s in ["mine", "tune", "train", "explain"] {
            v.push(format!("{s}_{t}"));
        }
    }
    v
}

/// Regenerate the report of an existing run directory.
pub fn write_report(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(PipelineError::IncompleteRun(format!("{} has no manifest", dir.display())));
    }
    let manifest = Manifest::load(dir)?;
    let cfg = PipelineConfig::load(&dir.join("config.toml"))?;
    let missing: Vec<String> = required_stages(&cfg)
        .into_iter()
        .filter(|s| match manifest.stage(s) {
            None => true,
            Some(rec) => !rec
                .outputs
                .iter()
                .all(|(f, h)| sha256_file(&dir.join(f)).map(|g| g == *h).unwrap_or(false)),
        })
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::IncompleteRun(format!("missing or modified stages: {}", missing.join(", "))));
    }
    build_report(dir, &cfg, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_clamps_and_conserves() {
        let h = histogram(&[-5.0, 0.0, 24.9, 25.0, 749.0, 750.0, 9000.0], KCAL_BINS);
        assert_eq!(h.len(), 30);
        assert_eq!(h[0], (0.0, 25.0, 3));
        assert_eq!(h[1].2, 1);
        assert_eq!(h[29], (725.0, 750.0, 3));
        assert_eq!(h.iter().map(|b| b.2).sum::<u64>(), 7);
    }

    #[test]
    fn macro_bins() {
        let h = histogram(&[5.0, 99.99, 100.0], MACRO_BINS);
        assert_eq!(h.len(), 20);
        assert_eq!(h[1].2, 1);
        assert_eq!(h[19].2, 2);
    }
}
