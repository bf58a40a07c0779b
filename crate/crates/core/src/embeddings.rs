//! Sentence vectors for titles and food descriptions.
//!
//! Vectors come either from a precomputed [`VectorStore`] (EMBV1 files
//! written by the exporter) or from [`FallbackEmbedder`], a hashed
//! character-trigram embedder that needs no model.
//!
//! EMBV1 layout, little-endian:
//!
//! ```text
//! magic  "EMBV1\0"        6 bytes
//! dim    u32
//! count  u64
//! count × { u32 key_len, key bytes (UTF-8), dim × f32 }
//! ```
//!
//! A record whose key starts with `__model__` is metadata: the text after
//! the prefix (and an optional `:` or `=`) names the model that produced the
//! file. Such records are counted in the header but are not lookup entries.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::food_db::FoodItem;

pub const EMBV1_MAGIC: &[u8; 6] = b"EMBV1\0";
pub const MODEL_KEY_PREFIX: &str = "__model__";
pub const DEFAULT_FALLBACK_DIM: usize = 256;
pub const MIN_FALLBACK_DIM: usize = 16;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("fallback dimension {0} is below the minimum of {MIN_FALLBACK_DIM}")]
    DimTooSmall(usize),
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("not an EMBV1 file (bad magic bytes)")]
    BadMagic,
    #[error("EMBV1 file truncated: {0}")]
    TruncatedFile(String),
    #[error("duplicate key in vector store: {0:?}")]
    DuplicateKey(String),
    #[error("key is not valid UTF-8")]
    BadKey,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        EmbeddingVector { values }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![0.0; dim] }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Scale to unit L2 norm; the zero vector is left as is.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v = (f64::from(*v) / n) as f32;
            }
        }
        self
    }

    pub fn scaled(&self, k: f32) -> Self {
        EmbeddingVector {
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hashed character-trigram embedding.
///
/// Lowercases the text, hashes every overlapping 3-character window with
/// 64-bit FNV-1a over its UTF-8 bytes, and adds ±1 to bucket `h mod dim`
/// (sign from bit 63). Texts shorter than three characters embed to zero.
pub fn embed_fallback(text: &str, dim: usize) -> Result<EmbeddingVector, EmbeddingError> {
    if dim < MIN_FALLBACK_DIM {
        return Err(EmbeddingError::DimTooSmall(dim));
    }
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut acc = vec![0.0f64; dim];
    if chars.len() >= 3 {
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a64(&buf[..len]);
            let bucket = (h % dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = if norm > 0.0 {
        acc.iter().map(|v| (v / norm) as f32).collect()
    } else {
        vec![0.0; dim]
    };
    Ok(EmbeddingVector { values })
}

/// Cosine similarity. Zero vectors have similarity 0 with everything.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(cosine_slices(a.values(), b.values()))
}

pub(crate) fn cosine_slices(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Keyed collection of equal-length vectors, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    dim: usize,
    keys: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    index: HashMap<String, usize>,
    model: Option<String>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        VectorStore {
            dim,
            ..Default::default()
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn model(&self) -> Option<&str> {
        self.model.as_deref()
    }

    pub fn insert(&mut self, key: impl Into<String>, v: EmbeddingVector) -> Result<(), EmbeddingError> {
        let key = key.into();
        if v.dim() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        if self.index.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey(key));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.vectors.push(v);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.index.get(key).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.keys.iter().map(String::as_str).zip(self.vectors.iter())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        let meta = self.model.as_ref().map(|m| format!("{MODEL_KEY_PREFIX}:{m}"));
        let count = self.keys.len() as u64 + u64::from(meta.is_some());
        let dim = u32::try_from(self.dim).map_err(|_| EmbeddingError::DimMismatch {
            expected: u32::MAX as usize,
            found: self.dim,
        })?;
        w.write_all(EMBV1_MAGIC)?;
        w.write_all(&dim.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        let zero = EmbeddingVector::zeros(self.dim);
        let records = meta
            .iter()
            .map(|k| (k.as_str(), &zero))
            .chain(self.iter());
        for (key, v) in records {
            w.write_all(&(key.len() as u32).to_le_bytes())?;
            w.write_all(key.as_bytes())?;
            for f in v.values() {
                w.write_all(&f.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != EMBV1_MAGIC {
            return Err(EmbeddingError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        read_exact(&mut r, &mut b4, "dim")?;
        let dim = u32::from_le_bytes(b4) as usize;
        read_exact(&mut r, &mut b8, "count")?;
        let count = u64::from_le_bytes(b8);

        let mut store = VectorStore::new(dim);
        let mut fbuf = vec![0u8; dim * 4];
        for i in 0..count {
            read_exact(&mut r, &mut b4, "key length")?;
            let klen = u32::from_le_bytes(b4) as usize;
            let mut kbuf = vec![0u8; klen];
            read_exact(&mut r, &mut kbuf, "key")?;
            let key = String::from_utf8(kbuf).map_err(|_| EmbeddingError::BadKey)?;
            read_exact(&mut r, &mut fbuf, "vector")
                .map_err(|_| EmbeddingError::TruncatedFile(format!("record {i} of {count}")))?;
            if let Some(rest) = key.strip_prefix(MODEL_KEY_PREFIX) {
                let name = rest.trim_start_matches([':', '=']);
                store.model = Some(name.to_string());
                continue;
            }
            let values = fbuf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(key, EmbeddingVector::new(values))?;
        }
        // Trailing bytes mean the header count disagrees with the body.
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(EmbeddingError::DimMismatch {
                expected: count as usize,
                found: count as usize + 1,
            });
        }
        Ok(store)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), EmbeddingError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EmbeddingError::TruncatedFile(format!("while reading {what}")),
        _ => EmbeddingError::Io(e),
    })
}

/// Load an EMBV1 file.
pub fn load_vector_store(path: &Path) -> Result<VectorStore, EmbeddingError> {
    let f = std::fs::File::open(path)?;
    VectorStore::read(std::io::BufReader::new(f))
}

/// Source of vectors for titles and food items.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn title_vector(&self, title: &str) -> Option<EmbeddingVector>;
    fn food_vector(&self, item: &FoodItem) -> Option<EmbeddingVector>;
}

#[derive(Debug, Clone, Copy)]
pub struct FallbackEmbedder {
    dim: usize,
}

impl FallbackEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim < MIN_FALLBACK_DIM {
            return Err(EmbeddingError::DimTooSmall(dim));
        }
        Ok(FallbackEmbedder { dim })
    }
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        FallbackEmbedder { dim: DEFAULT_FALLBACK_DIM }
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn title_vector(&self, title: &str) -> Option<EmbeddingVector> {
        embed_fallback(title, self.dim).ok()
    }

    fn food_vector(&self, item: &FoodItem) -> Option<EmbeddingVector> {
        embed_fallback(&item.description, self.dim).ok()
    }
}

/// Titles are looked up by their cleaned text, food items by id.
impl EmbeddingProvider for VectorStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn title_vector(&self, title: &str) -> Option<EmbeddingVector> {
        self.get(title).cloned()
    }

    fn food_vector(&self, item: &FoodItem) -> Option<EmbeddingVector> {
        self.get(&item.id).cloned()
    }
}
