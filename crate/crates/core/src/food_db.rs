//! Food-composition database: loading, validation and CSV export.
//!
//! All densities are per 100 g of food. The loader accepts the flat CSV
//! layout `id,description,kcal,protein_g,carb_g,fat_g,source` (extra
//! columns are ignored) and keeps rows in file order.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REQUIRED_COLUMNS: [&str; 7] = [
    "id",
    "description",
    "kcal",
    "protein_g",
    "carb_g",
    "fat_g",
    "source",
];

/// Macronutrient totals above this are flagged (but kept).
pub const MACRO_SUM_FLAG_G: f64 = 105.0;

#[derive(Debug, Error)]
pub enum FoodDbError {
    #[error("food database header lacks required column `{0}`")]
    MissingColumn(&'static str),
    #[error("i/o error reading food database: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error in food database: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FoodSource {
    FoundationFoods,
    SRLegacy,
    FNDDS,
    Other,
}

impl FoodSource {
    pub fn parse(raw: &str) -> Self {
        let key: String = raw
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "foundationfoods" | "foundationfood" | "foundation" => FoodSource::FoundationFoods,
            "srlegacy" | "srlegacyfood" | "sr" => FoodSource::SRLegacy,
            "fndds" | "surveyfndds" | "surveyfood" => FoodSource::FNDDS,
            _ => FoodSource::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FoodSource::FoundationFoods => "FoundationFoods",
            FoodSource::SRLegacy => "SRLegacy",
            FoodSource::FNDDS => "FNDDS",
            FoodSource::Other => "Other",
        }
    }
}

impl fmt::Display for FoodSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodItem {
    pub id: String,
    pub description: String,
    pub kcal: f64,
    pub protein_g: f64,
    pub carb_g: f64,
    pub fat_g: f64,
    pub source: FoodSource,
}

impl FoodItem {
    /// Densities in the fixed order kcal, protein, carbohydrate, fat.
    pub fn densities(&self) -> [f64; 4] {
        [self.kcal, self.protein_g, self.carb_g, self.fat_g]
    }
}

/// A single broken invariant on a [`FoodItem`].
#[derive(Debug, Clone, PartialEq)]
pub enum DensityViolation {
    NegativeKcal,
    MacroOutOfRange { field: &'static str, value: f64 },
    NonFinite { field: &'static str },
    EmptyDescription,
}

impl fmt::Display for DensityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityViolation::NegativeKcal => f.write_str("kcal ≥ 0"),
            DensityViolation::MacroOutOfRange { field, value } => {
                if *value < 0.0 {
                    write!(f, "{field} ≥ 0")
                } else {
                    write!(f, "{field} ≤ 100")
                }
            }
            DensityViolation::NonFinite { field } => write!(f, "{field} is finite"),
            DensityViolation::EmptyDescription => f.write_str("description non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCheck {
    pub valid: bool,
    pub violations: Vec<DensityViolation>,
    /// Macronutrient grams add up to more than [`MACRO_SUM_FLAG_G`]. Informational only.
    pub macro_sum_flag: bool,
}

/// Check an item against the [`FoodItem`] invariants. Never mutates.
pub fn validate_density_bounds(item: &FoodItem) -> DensityCheck {
    let mut violations = Vec::new();
    if !item.kcal.is_finite() {
        violations.push(DensityViolation::NonFinite { field: "kcal" });
    } else if item.kcal < 0.0 {
        violations.push(DensityViolation::NegativeKcal);
    }
    for (field, value) in [
        ("protein_g", item.protein_g),
        ("carb_g", item.carb_g),
        ("fat_g", item.fat_g),
    ] {
        if !value.is_finite() {
            violations.push(DensityViolation::NonFinite { field });
        } else if !(0.0..=100.0).contains(&value) {
            violations.push(DensityViolation::MacroOutOfRange { field, value });
        }
    }
    if item.description.trim().is_empty() {
        violations.push(DensityViolation::EmptyDescription);
    }
    let macro_sum_flag = item.protein_g + item.carb_g + item.fat_g > MACRO_SUM_FLAG_G;
    DensityCheck {
        valid: violations.is_empty(),
        violations,
        macro_sum_flag,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowRejection {
    BadNumeric { line: u64, column: &'static str, value: String },
    DuplicateId { line: u64, id: String },
    Invalid { line: u64, violations: Vec<String> },
    Malformed { line: u64, message: String },
}

/// Everything the loader skipped or flagged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rejected: Vec<RowRejection>,
    pub macro_sum_flagged: usize,
}

impl LoadReport {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }

    pub fn count_bad_numeric(&self) -> usize {
        self.rejected
            .iter()
            .filter(|r| matches!(r, RowRejection::BadNumeric { .. }))
            .count()
    }

    pub fn count_duplicates(&self) -> usize {
        self.rejected
            .iter()
            .filter(|r| matches!(r, RowRejection::DuplicateId { .. }))
            .count()
    }
}

/// Immutable, ordered food database.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FoodDatabase {
    items: Vec<FoodItem>,
}

impl FoodDatabase {
    /// Build from items, dropping later duplicates of an id.
    pub fn from_items(items: Vec<FoodItem>) -> Self {
        let mut seen = HashSet::new();
        let items = items
            .into_iter()
            .filter(|it| seen.insert(it.id.clone()))
            .collect();
        FoodDatabase { items }
    }

    pub fn items(&self) -> &[FoodItem] {
        &self.items
    }

    pub fn count(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FoodItem> {
        self.items.iter().find(|it| it.id == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FoodItem> {
        self.items.iter()
    }

    /// Write the canonical CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FoodDbError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REQUIRED_COLUMNS)?;
        for it in &self.items {
            w.write_record([
                it.id.as_str(),
                it.description.as_str(),
                &format_density(it.kcal),
                &format_density(it.protein_g),
                &format_density(it.carb_g),
                &format_density(it.fat_g),
                it.source.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), FoodDbError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

// Shortest representation that parses back to the same f64.
fn format_density(v: f64) -> String {
    format!("{v:?}")
}

/// Load a food database from a CSV file.
pub fn load_food_db(path: &Path) -> Result<(FoodDatabase, LoadReport), FoodDbError> {
    let f = std::fs::File::open(path)?;
    read_food_db(f)
}

pub fn read_food_db<R: Read>(reader: R) -> Result<(FoodDatabase, LoadReport), FoodDbError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or(FoodDbError::MissingColumn(name))?;
    }
    let [c_id, c_desc, c_kcal, c_prot, c_carb, c_fat, c_src] = cols;

    let mut items = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut report = LoadReport::default();

    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.rejected.push(RowRejection::Malformed {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();

        let mut nums = [0.0f64; 4];
        let mut bad = None;
        for (k, (col, name)) in [
            (c_kcal, "kcal"),
            (c_prot, "protein_g"),
            (c_carb, "carb_g"),
            (c_fat, "fat_g"),
        ]
        .into_iter()
        .enumerate()
        {
            match field(col).parse::<f64>() {
                Ok(v) if v.is_finite() => nums[k] = v,
                _ => {
                    bad = Some((name, field(col).to_string()));
                    break;
                }
            }
        }
        if let Some((column, value)) = bad {
            log::warn!("food db line {line}: non-numeric {column} = {value:?}");
            report.rejected.push(RowRejection::BadNumeric { line, column, value });
            continue;
        }

        let item = FoodItem {
            id: field(c_id).to_string(),
            description: field(c_desc).to_string(),
            kcal: nums[0],
            protein_g: nums[1],
            carb_g: nums[2],
            fat_g: nums[3],
            source: FoodSource::parse(field(c_src)),
        };
        let check = validate_density_bounds(&item);
        if !check.valid || item.id.is_empty() {
            let mut violations: Vec<String> =
                check.violations.iter().map(ToString::to_string).collect();
            if item.id.is_empty() {
                violations.push("id non-empty".to_string());
            }
            report.rejected.push(RowRejection::Invalid { line, violations });
            continue;
        }
        if !seen.insert(item.id.clone()) {
            log::warn!("food db line {line}: duplicate id {:?} skipped", item.id);
            report.rejected.push(RowRejection::DuplicateId { line, id: item.id });
            continue;
        }
        if check.macro_sum_flag {
            report.macro_sum_flagged += 1;
        }
        items.push(item);
    }
    Ok((FoodDatabase { items }, report))
}
