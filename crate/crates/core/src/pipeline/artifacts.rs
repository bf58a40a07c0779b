//! Readers and writers for the intermediate files of a run directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::PostRecord;

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

/// Write through a temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Stage {
        stage: "serialize".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| PipelineError::Stage {
        stage: "read".into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::Stage {
        stage: "read".into(),
        message: format!("{}: {e}", path.display()),
    }
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, PipelineError> {
    s.parse().map_err(|_| PipelineError::Stage {
        stage: "read".into(),
        message: format!("{}: bad number {s:?}", path.display()),
    })
}

pub fn write_posts_jsonl(path: &Path, posts: &[PostRecord]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for p in posts {
        serde_json::to_writer(&mut buf, p).expect("post serializes");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn read_posts_jsonl(path: &Path) -> Result<Vec<PostRecord>, PipelineError> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Stage {
            stage: "read".into(),
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub post_id: String,
    pub kcal: f64,
    pub protein_g: f64,
    pub carb_g: f64,
    pub fat_g: f64,
    pub matched_count: usize,
    pub top_match_id: String,
    pub top_similarity: f64,
}

impl EstimateRow {
    pub fn densities(&self) -> [f64; 4] {
        [self.kcal, self.protein_g, self.carb_g, self.fat_g]
    }
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["post_id", "kcal", "protein_g", "carb_g", "fat_g", "matched_count", "top_match_id", "top_similarity"])?;
    for r in rows {
        wr.write_record([
            r.post_id.clone(),
            r.kcal.to_string(),
            r.protein_g.to_string(),
            r.carb_g.to_string(),
            r.fat_g.to_string(),
            r.matched_count.to_string(),
            r.top_match_id.clone(),
            r.top_similarity.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>, PipelineError> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err(path))?;
        out.push(EstimateRow {
            post_id: rec[0].to_string(),
            kcal: parse_f64(path, &rec[1])?,
            protein_g: parse_f64(path, &rec[2])?,
            carb_g: parse_f64(path, &rec[3])?,
            fat_g: parse_f64(path, &rec[4])?,
            matched_count: parse_f64(path, &rec[5])? as usize,
            top_match_id: rec[6].to_string(),
            top_similarity: parse_f64(path, &rec[7])?,
        });
    }
    Ok(out)
}

/// One modeling post: labels plus the 37 columns that do not depend on a task split (N, F, C).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub post_id: String,
    pub engagement: bool,
    pub resonance: Option<bool>,
    pub base: Vec<f64>,
}

pub fn write_features(path: &Path, names: &[String], rows: &[FeatureRecord]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    {
        let mut wr = csv::Writer::from_writer(BufWriter::new(&mut buf));
        let mut header = vec!["post_id".to_string(), "engagement".into(), "resonance".into()];
        header.extend(names.iter().cloned());
        wr.write_record(&header).map_err(csv_err(path))?;
        for r in rows {
            let mut rec = vec![
                r.post_id.clone(),
                u8::from(r.engagement).to_string(),
                r.resonance.map(|b| u8::from(b).to_string()).unwrap_or_default(),
            ];
            rec.extend(r.base.iter().map(f64::to_string));
            wr.write_record(&rec).map_err(csv_err(path))?;
        }
        wr.flush()?;
    }
    write_atomic(path, &buf)
}

pub fn read_features(path: &Path) -> Result<(Vec<String>, Vec<FeatureRecord>), PipelineError> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let names: Vec<String> = rd.headers().map_err(csv_err(path))?.iter().skip(3).map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err(path))?;
        let base = rec.iter().skip(3).map(|s| parse_f64(path, s)).collect::<Result<Vec<_>, _>>()?;
        out.push(FeatureRecord {
            post_id: rec[0].to_string(),
            engagement: &rec[1] == "1",
            resonance: match &rec[2] {
                "1" => Some(true),
                "0" => Some(false),
                _ => None,
            },
            base,
        });
    }
    Ok((names, out))
}

/// Post ids on each side of a task's train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn index_by_id(posts: &[PostRecord]) -> BTreeMap<&str, &PostRecord> {
    posts.iter().map(|p| (p.id.as_str(), p)).collect()
}
