//! Title-derived features and the statistics used to explore them.
//!
//! * [`lexicon`]: fixed descriptor and category keyword flags.
//! * [`discriminators`]: chi-square mining of words that separate engagement classes.
//! * [`stats`]: Mann-Whitney U, Spearman's rho and the 2×2 chi-square test.

pub mod discriminators;
pub mod lexicon;
pub mod stats;

use std::collections::{BTreeSet, HashSet};

pub use discriminators::{
    discriminator_flags, mine_discriminators, DiscriminatorEntry, DiscriminatorSet, MiningConfig,
};
pub use lexicon::{match_descriptors, DescriptorFlags, DescriptorLexicon};
pub use stats::{chi_square_2x2, mann_whitney_u, spearman_rho, StatError, StatMethod, StatResult};

const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");

/// Lowercased word tokens of a cleaned title.
///
/// Splits on whitespace and on every other non-alphanumeric character
/// except the apostrophe, then trims apostrophes from token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Suffix-stripping lemmatizer.
///
/// Rules, first match wins:
/// 1. `-ies` → `-y` when at least two letters remain (`berries` → `berry`)
/// 2. `-es` dropped after `s`, `x`, `z`, `ch`, `sh` or `o` (`potatoes` → `potato`)
/// 3. `-s` dropped unless the word ends in `ss`, `us` or `is` (`cakes` → `cake`)
/// 4. `-ing` dropped when the stem keeps at least three letters (`frosting` → `frost`)
///
/// Words shorter than four characters are returned unchanged.
pub fn lemmatize(word: &str) -> String {
    let w = word;
    let n = w.chars().count();
    if n < 4 {
        return w.to_string();
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.chars().count() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = w.strip_suffix("es") {
        if stem.chars().count() >= 3
            && (stem.ends_with(['s', 'x', 'z', 'o']) || stem.ends_with("ch") || stem.ends_with("sh"))
        {
            return stem.to_string();
        }
    }
    if w.ends_with('s') && !(w.ends_with("ss") || w.ends_with("us") || w.ends_with("is")) {
        return w[..w.len() - 1].to_string();
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.chars().count() >= 3 {
            return stem.to_string();
        }
    }
    w.to_string()
}

/// Fixed English stopword list shipped with the crate (127 words).
#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    pub fn english() -> Self {
        Stopwords {
            words: STOPWORDS_EN.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect(),
        }
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Stopwords {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::english()
    }
}

/// Distinct lemmatized, non-stopword terms of a title.
pub fn title_terms(title: &str, stopwords: &Stopwords) -> BTreeSet<String> {
    tokenize(title)
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .map(|t| lemmatize(&t))
        .filter(|t| !stopwords.contains(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_size() {
        assert_eq!(Stopwords::english().len(), 127);
        assert!(Stopwords::english().contains("the"));
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Mac & Cheese, w/ bacon."), vec!["mac", "cheese", "w", "bacon"]);
        assert_eq!(tokenize("Mom's stir-fry"), vec!["mom's", "stir", "fry"]);
        assert_eq!(tokenize("'quoted'  (twice)"), vec!["quoted", "twice"]);
    }

    #[test]
    fn lemmatizer_rules() {
        assert_eq!(lemmatize("potatoes"), "potato");
        assert_eq!(lemmatize("berries"), "berry");
        assert_eq!(lemmatize("cakes"), "cake");
        assert_eq!(lemmatize("dishes"), "dish");
        assert_eq!(lemmatize("pies"), "pie");
        assert_eq!(lemmatize("hummus"), "hummus");
        assert_eq!(lemmatize("glass"), "glass");
        assert_eq!(lemmatize("frosting"), "frost");
        assert_eq!(lemmatize("ring"), "ring");
        assert_eq!(lemmatize("egg"), "egg");
        assert_eq!(lemmatize("pizza"), "pizza");
    }

    #[test]
    fn terms_skip_stopwords() {
        let sw = Stopwords::english();
        let t = title_terms("The best potatoes with the cheese", &sw);
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec!["best", "cheese", "potato"]);
    }
}
