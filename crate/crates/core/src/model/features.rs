//! Feature vectors and feature-set masks.
//!
//! A full row has 39 columns in block order N, F, E, C. Models are trained on
//! a projection that keeps only the active blocks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::{ControlFeatures, CovidPeriod, Tag};
use crate::textfeat::lexicon::{DescriptorFlags, DescriptorLexicon, N_CATEGORIES, N_DESCRIPTORS};

pub const N_NUTRITION: usize = 4;
pub const N_LEXICON: usize = N_DESCRIPTORS + N_CATEGORIES;
pub const N_DISCRIMINATOR: usize = 2;
pub const N_CONTROL: usize = 12;
pub const N_FEATURES: usize = N_NUTRITION + N_LEXICON + N_DISCRIMINATOR + N_CONTROL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Estimated nutritional densities.
    N,
    /// Descriptor and category keywords.
    F,
    /// Engagement discriminators.
    E,
    /// Controls.
    C,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::N, Block::F, Block::E, Block::C];

    pub fn columns(self) -> std::ops::Range<usize> {
        let f0 = N_NUTRITION;
        let e0 = f0 + N_LEXICON;
        let c0 = e0 + N_DISCRIMINATOR;
        match self {
            Block::N => 0..f0,
            Block::F => f0..e0,
            Block::E => e0..c0,
            Block::C => c0..N_FEATURES,
        }
    }

    fn letter(self) -> char {
        match self {
            Block::N => 'N',
            Block::F => 'F',
            Block::E => 'E',
            Block::C => 'C',
        }
    }
}

/// Which blocks a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSet {
    n: bool,
    f: bool,
    e: bool,
    c: bool,
}

impl FeatureSet {
    pub const fn new(n: bool, f: bool, e: bool, c: bool) -> Self {
        FeatureSet { n, f, e, c }
    }

    pub fn contains(&self, b: Block) -> bool {
        match b {
            Block::N => self.n,
            Block::F => self.f,
            Block::E => self.e,
            Block::C => self.c,
        }
    }

    /// The eight combinations that always include controls, in report order.
    pub fn matrix() -> [FeatureSet; 8] {
        let s = FeatureSet::new;
        [
            s(false, false, false, true),
            s(true, false, false, true),
            s(false, true, false, true),
            s(false, false, true, true),
            s(true, true, false, true),
            s(true, false, true, true),
            s(false, true, true, true),
            s(true, true, true, true),
        ]
    }

    pub fn full() -> Self {
        FeatureSet::new(true, true, true, true)
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        Block::ALL.into_iter().filter(|b| self.contains(*b))
    }

    /// Column indices into a full row, ascending.
    pub fn columns(&self) -> Vec<usize> {
        self.blocks().flat_map(Block::columns).collect()
    }

    pub fn width(&self) -> usize {
        self.blocks().map(|b| b.columns().len()).sum()
    }

    pub fn project(&self, full_row: &[f64]) -> Vec<f64> {
        self.columns().into_iter().map(|i| full_row[i]).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let all = full_feature_names();
        self.columns().into_iter().map(|i| all[i].clone()).collect()
    }

    /// Label such as `C+N+E`: controls first, then N, F, E.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for b in [Block::C, Block::N, Block::F, Block::E] {
            if self.contains(b) {
                parts.push(b.letter().to_string());
            }
        }
        parts.join("+")
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for FeatureSet {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut fs = FeatureSet::new(false, false, false, false);
        for part in s.split('+').map(str::trim) {
            let slot = match part {
                "N" | "n" => &mut fs.n,
                "F" | "f" => &mut fs.f,
                "E" | "e" => &mut fs.e,
                "C" | "c" => &mut fs.c,
                _ => return Err(ModelError::BadFeatureSet(s.to_string())),
            };
            if *slot {
                return Err(ModelError::BadFeatureSet(s.to_string()));
            }
            *slot = true;
        }
        if fs.width() == 0 {
            return Err(ModelError::BadFeatureSet(s.to_string()));
        }
        Ok(fs)
    }
}

impl TryFrom<String> for FeatureSet {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FeatureSet> for String {
    fn from(fs: FeatureSet) -> String {
        fs.label()
    }
}

/// Names of all 39 columns in row order.
pub fn full_feature_names() -> Vec<String> {
    let mut names: Vec<String> = ["kcal", "protein_g", "carb_g", "fat_g"].iter().map(|s| s.to_string()).collect();
    names.extend(DescriptorLexicon::default().feature_names());
    names.push("has_pos_discriminator".into());
    names.push("has_neg_discriminator".into());
    names.extend(
        [
            "is_weekend",
            "covid_pre",
            "covid_during",
            "covid_post",
            "experienced_user",
            "quartile_q1",
            "quartile_q2",
            "quartile_q3",
            "quartile_q4",
            "tag_i_ate",
            "tag_homemade",
            "tag_pro_chef",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    names
}

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

/// Assemble a full 39-column row.
pub fn build_row(
    densities: [f64; 4],
    descriptors: &DescriptorFlags,
    discriminators: (bool, bool),
    controls: &ControlFeatures,
) -> Vec<f64> {
    let mut row = Vec::with_capacity(N_FEATURES);
    row.extend_from_slice(&densities);
    row.extend(descriptors.as_values());
    row.push(b(discriminators.0));
    row.push(b(discriminators.1));
    row.push(b(controls.is_weekend));
    for p in [CovidPeriod::Pre, CovidPeriod::During, CovidPeriod::Post] {
        row.push(b(controls.covid_period == p));
    }
    row.push(b(controls.is_experienced_user));
    for q in 0..4 {
        row.push(b(controls.day_quartile.index() == q));
    }
    for t in [Tag::IAte, Tag::Homemade, Tag::ProChef] {
        row.push(b(controls.tag == t));
    }
    debug_assert_eq!(row.len(), N_FEATURES);
    row
}

/// Rows of a single feature set with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self, ModelError> {
        if rows.len() != labels.len() {
            return Err(ModelError::LengthMismatch(rows.len(), labels.len()));
        }
        let d = feature_names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(ModelError::FeatureMaskMismatch { expected: d, got: r.len() });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(ModelError::NonBinaryLabel);
        }
        Ok(Dataset { feature_names, rows, labels })
    }

    /// Project full 39-column rows onto a feature set.
    pub fn from_full_rows(fs: FeatureSet, rows: &[Vec<f64>], labels: &[u8]) -> Result<Self, ModelError> {
        let cols = fs.columns();
        let projected = rows
            .iter()
            .map(|r| {
                if r.len() != N_FEATURES {
                    return Err(ModelError::FeatureMaskMismatch { expected: N_FEATURES, got: r.len() });
                }
                Ok(cols.iter().map(|&i| r[i]).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(fs.feature_names(), projected, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DayQuartile;

    #[test]
    fn widths() {
        assert_eq!(N_FEATURES, 39);
        assert_eq!(full_feature_names().len(), 39);
        assert_eq!(FeatureSet::full().width(), 39);
        let w: Vec<usize> = FeatureSet::matrix().iter().map(|f| f.width()).collect();
        assert_eq!(w, vec![12, 16, 33, 14, 37, 18, 35, 39]);
    }

    #[test]
    fn labels_round_trip() {
        let labels: Vec<String> = FeatureSet::matrix().iter().map(|f| f.label()).collect();
        assert_eq!(labels, ["C", "C+N", "C+F", "C+E", "C+N+F", "C+N+E", "C+F+E", "C+N+F+E"]);
        for l in &labels {
            assert_eq!(l.parse::<FeatureSet>().unwrap().label(), *l);
        }
        assert_eq!("N+C".parse::<FeatureSet>().unwrap().label(), "C+N");
        assert!("C+C".parse::<FeatureSet>().is_err());
        assert!("C+X".parse::<FeatureSet>().is_err());
    }

    #[test]
    fn projection_keeps_row_order() {
        let fs: FeatureSet = "C+N".parse().unwrap();
        let names = fs.feature_names();
        assert_eq!(&names[..4], ["kcal", "protein_g", "carb_g", "fat_g"]);
        assert_eq!(names[4], "is_weekend");
        let row: Vec<f64> = (0..39).map(|i| i as f64).collect();
        let p = fs.project(&row);
        assert_eq!(p[..4], [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p[4], 27.0);
        assert_eq!(p.len(), 16);
    }

    #[test]
    fn one_hot_blocks() {
        let lex = DescriptorLexicon::default();
        let flags = crate::textfeat::match_descriptors("grilled chicken", &lex);
        for tag in [Tag::IAte, Tag::OtherOrMissing] {
            let c = ControlFeatures {
                is_weekend: true,
                covid_period: CovidPeriod::During,
                is_experienced_user: false,
                day_quartile: DayQuartile::Q3,
                tag,
            };
            let row = build_row([100.0, 1.0, 2.0, 3.0], &flags, (true, false), &c);
            let c0 = Block::C.columns().start;
            assert_eq!(row[c0 + 1..c0 + 4].iter().sum::<f64>(), 1.0);
            assert_eq!(row[c0 + 5..c0 + 9].iter().sum::<f64>(), 1.0);
            assert_eq!(row[c0 + 7], 1.0);
            let tag_sum: f64 = row[c0 + 9..].iter().sum();
            assert_eq!(tag_sum, if tag == Tag::OtherOrMissing { 0.0 } else { 1.0 });
        }
    }
}
