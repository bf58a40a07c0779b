//! Gradient-boosted regression trees with logistic loss.
//!
//! Trees are grown level by level with exact greedy split search over
//! presorted columns. Leaf weights are Newton steps `−G/(H+λ)`; the raw
//! output is `base_margin + lr · Σ leaf`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, ModelError};

pub const MODEL_FORMAT_VERSION: u32 = 1;
/// L2 penalty on leaf weights.
pub const LAMBDA: f64 = 1.0;
/// Minimum hessian sum in each child of a split.
pub const MIN_CHILD_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BinaryLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: Loss,
}

impl GbtConfig {
    pub fn new(n_estimators: usize, max_depth: usize, learning_rate: f64) -> Self {
        GbtConfig {
            n_estimators,
            max_depth,
            learning_rate,
            seed: 0,
            loss: Loss::BinaryLogistic,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_estimators == 0 {
            return Err(ModelError::InvalidConfig("n_estimators must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(ModelError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A regression tree node. Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn leaf(value: f64) -> Node {
        Node::Leaf { value }
    }

    pub fn split(feature: usize, threshold: f64, left: Node, right: Node) -> Node {
        Node::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    /// Number of split levels on the longest path (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split { feature, left, right, .. } => {
                Some((*feature).max(left.max_feature().unwrap_or(0)).max(right.max_feature().unwrap_or(0)))
            }
        }
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        match self {
            Node::Leaf { .. } => false,
            Node::Split { feature, left, right, .. } => *feature == f || left.uses_feature(f) || right.uses_feature(f),
        }
    }
}

/// Anything with an additive raw output over a fixed-width input.
pub trait MarginModel: Sync {
    fn n_features(&self) -> usize;
    /// Raw output; `x` has exactly `n_features()` values.
    fn margin(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub config: GbtConfig,
    pub base_margin: f64,
    pub trees: Vec<Node>,
}

impl TrainedModel {
    pub fn predict_margin(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.feature_names.len() {
            return Err(ModelError::FeatureMaskMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        Ok(self.margin(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.predict_margin(x).map(probability)
    }

    pub fn predict_margins(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        rows.iter().map(|r| self.predict_margin(r)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let m: TrainedModel = serde_json::from_str(s).map_err(|e| ModelError::Json(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(m.format_version));
        }
        let d = m.feature_names.len();
        if m.trees.iter().filter_map(Node::max_feature).any(|f| f >= d) {
            return Err(ModelError::Json("split feature index out of range".into()));
        }
        Ok(m)
    }
}

impl MarginModel for TrainedModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn margin(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.eval(x)).sum();
        self.base_margin + self.config.learning_rate * s
    }
}

/// Logistic function, kept strictly inside (0, 1).
pub fn probability(margin: f64) -> f64 {
    let p = if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of raw margins.
pub fn logloss(margins: &[f64], labels: &[u8]) -> f64 {
    let s: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| if y == 1 { softplus(-m) } else { softplus(m) })
        .sum();
    s / margins.len() as f64
}

/// Train a model; see [`train_gbt_logged`].
pub fn train_gbt(data: &Dataset, cfg: &GbtConfig) -> Result<TrainedModel, ModelError> {
    train_gbt_logged(data, cfg).map(|(m, _)| m)
}

/// Train a model and return the training logloss before the first round
/// and after every round (`n_estimators + 1` values).
pub fn train_gbt_logged(data: &Dataset, cfg: &GbtConfig) -> Result<(TrainedModel, Vec<f64>), ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let n = data.len();
    let pos = data.positives();
    if pos == 0 || pos == n {
        return Err(ModelError::SingleClassInput);
    }
    if data.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let d = data.n_features();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| data.rows.iter().map(|r| r[j]).collect()).collect();
    let layouts: Vec<Layout> = cols.par_iter().map(|c| Layout::new(c)).collect();

    let prevalence = pos as f64 / n as f64;
    let base = (prevalence / (1.0 - prevalence)).ln();
    let lr = cfg.learning_rate;
    let mut leaf_sum = vec![0.0; n];
    let mut margins = vec![base; n];
    let mut losses = vec![logloss(&margins, &data.labels)];
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..cfg.n_estimators {
        for i in 0..n {
            let p = probability(margins[i]);
            grad[i] = p - data.labels[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(&cols, &layouts, &grad, &hess, cfg.max_depth);
        for i in 0..n {
            leaf_sum[i] += leaf_of[i];
            margins[i] = base + lr * leaf_sum[i];
        }
        losses.push(logloss(&margins, &data.labels));
        trees.push(tree);
    }
    let model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: data.feature_names.clone(),
        config: *cfg,
        base_margin: base,
        trees,
    };
    Ok((model, losses))
}

struct BuildNode {
    g: f64,
    h: f64,
    split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

/// Column access pattern used by split finding.
enum Layout {
    /// Only 0/1 values: rows holding 1, ascending. The single candidate split
    /// is at 0.5 and its left side is obtained by subtraction.
    Binary(Vec<u32>),
    /// Rows ordered by value (ties by row index).
    Sorted(Vec<u32>),
}

impl Layout {
    fn new(col: &[f64]) -> Layout {
        if col.iter().all(|&v| v == 0.0 || v == 1.0) {
            return Layout::Binary((0..col.len() as u32).filter(|&i| col[i as usize] == 1.0).collect());
        }
        let mut o: Vec<u32> = (0..col.len() as u32).collect();
        o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
        Layout::Sorted(o)
    }

    fn rows(&self) -> &[u32] {
        match self {
            Layout::Binary(r) | Layout::Sorted(r) => r,
        }
    }

    fn retain_active(&self, slot: &[u32]) -> Layout {
        let keep = |r: &[u32]| r.iter().copied().filter(|&i| slot[i as usize] != INACTIVE).collect();
        match self {
            Layout::Binary(r) => Layout::Binary(keep(r)),
            Layout::Sorted(r) => Layout::Sorted(keep(r)),
        }
    }
}

const INACTIVE: u32 = u32::MAX;

// Grow one tree; also returns each training row's leaf value.
fn grow_tree(cols: &[Vec<f64>], layouts: &[Layout], grad: &[f64], hess: &[f64], max_depth: usize) -> (Node, Vec<f64>) {
    let n = grad.len();
    let mut nodes = vec![BuildNode {
        g: grad.iter().sum(),
        h: hess.iter().sum(),
        split: None,
    }];
    let mut node_of = vec![0usize; n];
    // frontier slot of each row's node
    let mut slot = vec![0u32; n];
    let mut frontier = vec![0usize];
    let mut active: Option<Vec<Layout>> = None;
    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let current: &[Layout] = active.as_deref().unwrap_or(layouts);
        let totals: Vec<(f64, f64)> = frontier.iter().map(|&id| (nodes[id].g, nodes[id].h)).collect();
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..cols.len())
            .into_par_iter()
            .map(|j| match &current[j] {
                Layout::Binary(ones) => best_binary_splits(ones, grad, hess, &slot, &totals),
                Layout::Sorted(order) => best_splits(&cols[j], order, grad, hess, &slot, &totals),
            })
            .collect();

        let mut next = Vec::new();
        let mut chosen: Vec<Option<(usize, f64)>> = vec![None; frontier.len()];
        for (s, c) in chosen.iter_mut().enumerate() {
            let mut best: Option<(usize, Candidate)> = None;
            for (j, cands) in per_feature.iter().enumerate() {
                if let Some(c) = cands[s] {
                    if best.map_or(true, |(_, b)| c.gain > b.gain) {
                        best = Some((j, c));
                    }
                }
            }
            *c = best.map(|(j, c)| (j, c.threshold));
        }
        let mut child_of = vec![(0usize, 0usize); frontier.len()];
        for (s, &id) in frontier.iter().enumerate() {
            if let Some((j, t)) = chosen[s] {
                let l = nodes.len();
                nodes.push(BuildNode { g: 0.0, h: 0.0, split: None });
                nodes.push(BuildNode { g: 0.0, h: 0.0, split: None });
                nodes[id].split = Some((j, t, l, l + 1));
                child_of[s] = (l, l + 1);
                next.push(l);
                next.push(l + 1);
            }
        }
        let mut next_slot_of = vec![INACTIVE; nodes.len()];
        for (k, &id) in next.iter().enumerate() {
            next_slot_of[id] = k as u32;
        }
        for i in 0..n {
            let s = slot[i];
            if s == INACTIVE {
                continue;
            }
            match chosen[s as usize] {
                Some((j, t)) => {
                    let (l, r) = child_of[s as usize];
                    let c = if cols[j][i] < t { l } else { r };
                    node_of[i] = c;
                    nodes[c].g += grad[i];
                    nodes[c].h += hess[i];
                    slot[i] = next_slot_of[c];
                }
                None => slot[i] = INACTIVE,
            }
        }
        frontier = next;
        let live = slot.iter().filter(|&&s| s != INACTIVE).count();
        // compact once enough rows have settled in final leaves
        if !frontier.is_empty() && live * 4 < current[0].rows().len().max(1) * 3 {
            active = Some(current.iter().map(|l| l.retain_active(&slot)).collect());
        }
    }
    let weight = |b: &BuildNode| -b.g / (b.h + LAMBDA);
    let leaf_of = node_of.iter().map(|&id| weight(&nodes[id])).collect();
    (to_node(&nodes, 0, &weight), leaf_of)
}

fn to_node(nodes: &[BuildNode], id: usize, weight: &dyn Fn(&BuildNode) -> f64) -> Node {
    match nodes[id].split {
        None => Node::leaf(weight(&nodes[id])),
        Some((f, t, l, r)) => Node::split(f, t, to_node(nodes, l, weight), to_node(nodes, r, weight)),
    }
}

fn consider(best: &mut Option<Candidate>, (g, h): (f64, f64), parent: f64, gl: f64, hl: f64, threshold: impl FnOnce() -> f64) {
    let (gr, hr) = (g - gl, h - hl);
    if hl >= MIN_CHILD_WEIGHT && hr >= MIN_CHILD_WEIGHT {
        let gain = gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - parent;
        if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
            *best = Some(Candidate {
                gain,
                threshold: threshold(),
            });
        }
    }
}

// Scan one presorted column and return the best split per frontier slot.
fn best_splits(col: &[f64], order: &[u32], grad: &[f64], hess: &[f64], slot: &[u32], totals: &[(f64, f64)]) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let mut gl = vec![0.0; k];
    let mut hl = vec![0.0; k];
    let mut last: Vec<Option<f64>> = vec![None; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let parent_score: Vec<f64> = totals.iter().map(|&(g, h)| g * g / (h + LAMBDA)).collect();
    for &i in order {
        let i = i as usize;
        let s = slot[i];
        if s == INACTIVE {
            continue;
        }
        let s = s as usize;
        let x = col[i];
        if let Some(v) = last[s] {
            if x > v {
                consider(&mut best[s], totals[s], parent_score[s], gl[s], hl[s], || {
                    let t = v + (x - v) / 2.0;
                    if t <= v {
                        x
                    } else {
                        t
                    }
                });
            }
        }
        gl[s] += grad[i];
        hl[s] += hess[i];
        last[s] = Some(x);
    }
    best
}

// 0/1 column: sum the rows holding 1; the rest of the node goes left.
fn best_binary_splits(ones: &[u32], grad: &[f64], hess: &[f64], slot: &[u32], totals: &[(f64, f64)]) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let mut g1 = vec![0.0; k];
    let mut h1 = vec![0.0; k];
    for &i in ones {
        let i = i as usize;
        let s = slot[i];
        if s != INACTIVE {
            g1[s as usize] += grad[i];
            h1[s as usize] += hess[i];
        }
    }
    (0..k)
        .map(|s| {
            let mut best = None;
            let (g, h) = totals[s];
            consider(&mut best, (g, h), g * g / (h + LAMBDA), g - g1[s], h - h1[s], || 0.5);
            best
        })
        .collect()
}
