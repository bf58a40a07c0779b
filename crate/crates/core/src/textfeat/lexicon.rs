//! Food descriptor and category keywords.

use super::{lemmatize, tokenize};

pub const DESCRIPTOR_GROUPS: [(&str, [&str; 5]); 3] = [
    ("preparation", ["grilled", "fried", "baked", "boiled", "steamed"]),
    ("taste", ["savory", "sweet", "spicy", "rich", "salty"]),
    ("texture", ["creamy", "crispy", "tender", "juicy", "crunchy"]),
];

pub const CATEGORIES: [(&str, &[&str]); 6] = [
    ("main_dish", &["pasta", "casserole", "roast", "chicken", "stirfry"]),
    (
        "dessert",
        &["cake", "custard", "pudding", "cookie", "pancake", "waffle", "muffin", "biscuit"],
    ),
    ("fast_food", &["pizza", "burger", "burrito"]),
    ("healthy", &["soup", "salad"]),
    ("plant_based", &["vegan", "vegetarian", "veggie"]),
    ("pastry", &["bread", "croissant"]),
];

pub const N_DESCRIPTORS: usize = 15;
pub const N_CATEGORIES: usize = 6;

#[derive(Debug, Clone)]
pub struct DescriptorLexicon {
    pub descriptors: Vec<(String, String)>,
    pub categories: Vec<(String, Vec<String>)>,
}

impl Default for DescriptorLexicon {
    fn default() -> Self {
        DescriptorLexicon {
            descriptors: DESCRIPTOR_GROUPS
                .iter()
                .flat_map(|(g, terms)| terms.iter().map(move |t| (g.to_string(), t.to_string())))
                .collect(),
            categories: CATEGORIES
                .iter()
                .map(|(c, kws)| (c.to_string(), kws.iter().map(|k| k.to_string()).collect()))
                .collect(),
        }
    }
}

impl DescriptorLexicon {
    /// Feature names: `desc_<term>` then `cat_<category>`.
    pub fn feature_names(&self) -> Vec<String> {
        self.descriptors
            .iter()
            .map(|(_, t)| format!("desc_{t}"))
            .chain(self.categories.iter().map(|(c, _)| format!("cat_{c}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorFlags {
    pub descriptors: Vec<bool>,
    pub categories: Vec<bool>,
}

impl DescriptorFlags {
    pub fn as_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.descriptors
            .iter()
            .chain(&self.categories)
            .map(|&b| if b { 1.0 } else { 0.0 })
    }
}

// A keyword matches a whole token, its lemma, or its plain plural.
fn token_matches(token: &str, lemma: &str, term: &str) -> bool {
    token == term
        || lemma == term
        || token.strip_suffix('s') == Some(term)
        || token.strip_suffix("es") == Some(term)
}

/// Flag every descriptor and category whose keyword occurs as a whole word in the title.
pub fn match_descriptors(title_clean: &str, lexicon: &DescriptorLexicon) -> DescriptorFlags {
    let tokens: Vec<(String, String)> = tokenize(title_clean)
        .into_iter()
        .map(|t| {
            let l = lemmatize(&t);
            (t, l)
        })
        .collect();
    let hit = |term: &str| tokens.iter().any(|(t, l)| token_matches(t, l, term));
    DescriptorFlags {
        descriptors: lexicon.descriptors.iter().map(|(_, d)| hit(d)).collect(),
        categories: lexicon
            .categories
            .iter()
            .map(|(_, kws)| kws.iter().any(|k| hit(k)))
            .collect(),
    }
}
