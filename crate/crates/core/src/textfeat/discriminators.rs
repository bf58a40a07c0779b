//! Engagement discriminators: title words whose presence differs
//! significantly between the two classes of a task.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::stats::chi_square_2x2;
use super::{title_terms, Stopwords};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Minimum share of all task posts a word must appear in.
    pub cutoff: f64,
    pub alpha: f64,
    /// Most frequent words considered per class.
    pub top_k: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            cutoff: 0.01,
            alpha: 0.05,
            top_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorEntry {
    pub word: String,
    pub chi2: f64,
    /// Share of all task posts containing the word.
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSet {
    /// Words relatively more frequent in the positive class.
    pub positive: Vec<DiscriminatorEntry>,
    pub negative: Vec<DiscriminatorEntry>,
    pub cutoff: f64,
    pub alpha: f64,
}

impl DiscriminatorSet {
    pub fn empty(cfg: &MiningConfig) -> Self {
        DiscriminatorSet {
            positive: Vec::new(),
            negative: Vec::new(),
            cutoff: cfg.cutoff,
            alpha: cfg.alpha,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("discriminator set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

// Document frequency of every term across titles.
fn doc_freq(titles: &[String], stopwords: &Stopwords) -> HashMap<String, u64> {
    let mut df = HashMap::new();
    for t in titles {
        for term in title_terms(t, stopwords) {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    df
}

fn top_words(df: &HashMap<String, u64>, k: usize) -> Vec<&str> {
    let mut v: Vec<(&str, u64)> = df.iter().map(|(w, &c)| (w.as_str(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(w, _)| w).collect()
}

/// Mine discriminators from positive-class and negative-class titles.
///
/// Candidates are the union of each class's `top_k` most frequent terms
/// (by number of titles containing them, ties alphabetical). A candidate is
/// kept when its presence/absence × class table has chi-square p < `alpha`
/// and it occurs in at least `cutoff` of all titles; it is assigned to the
/// class where its relative frequency is higher.
pub fn mine_discriminators(
    titles_pos: &[String],
    titles_neg: &[String],
    cfg: &MiningConfig,
    stopwords: &Stopwords,
) -> DiscriminatorSet {
    let mut out = DiscriminatorSet::empty(cfg);
    if titles_pos.is_empty() || titles_neg.is_empty() {
        return out;
    }
    let df_pos = doc_freq(titles_pos, stopwords);
    let df_neg = doc_freq(titles_neg, stopwords);
    let candidates: BTreeSet<&str> = top_words(&df_pos, cfg.top_k)
        .into_iter()
        .chain(top_words(&df_neg, cfg.top_k))
        .collect();

    let (n_pos, n_neg) = (titles_pos.len() as u64, titles_neg.len() as u64);
    let total = (n_pos + n_neg) as f64;
    let mut scored: BTreeMap<&str, (f64, f64, bool)> = BTreeMap::new();
    for w in candidates {
        let a = df_pos.get(w).copied().unwrap_or(0);
        let c = df_neg.get(w).copied().unwrap_or(0);
        let Ok(res) = chi_square_2x2(a, n_pos - a, c, n_neg - c) else {
            continue;
        };
        if !(res.p_value < cfg.alpha) {
            continue;
        }
        let (rel_pos, rel_neg) = (a as f64 / n_pos as f64, c as f64 / n_neg as f64);
        if rel_pos == rel_neg {
            continue;
        }
        let freq = (a + c) as f64 / total;
        if freq < cfg.cutoff {
            continue;
        }
        scored.insert(w, (res.statistic, freq, rel_pos > rel_neg));
    }
    for (w, (chi2, freq, positive)) in scored {
        let e = DiscriminatorEntry {
            word: w.to_string(),
            chi2,
            freq,
        };
        if positive {
            out.positive.push(e);
        } else {
            out.negative.push(e);
        }
    }
    let order = |a: &DiscriminatorEntry, b: &DiscriminatorEntry| b.chi2.total_cmp(&a.chi2).then_with(|| a.word.cmp(&b.word));
    out.positive.sort_by(order);
    out.negative.sort_by(order);
    out
}

/// (title has a positive discriminator, title has a negative discriminator)
pub fn discriminator_flags(title_clean: &str, set: &DiscriminatorSet, stopwords: &Stopwords) -> (bool, bool) {
    let terms = title_terms(title_clean, stopwords);
    let has = |list: &[DiscriminatorEntry]| list.iter().any(|e| terms.contains(&e.word));
    (has(&set.positive), has(&set.negative))
}
