//! Gradient-boosted decision trees for binary classification.
//!
//! Logistic loss, second-order (Newton) leaf values, exact greedy split
//! search and depth-first growth. Models serialize to a versioned JSON
//! document; see `docs/model-format.md`.

mod split;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{best_split, midpoint, split_gain, Split};

pub const MODEL_FORMAT: &str = "regionrec-gbdt";
pub const MODEL_VERSION: u32 = 1;
/// Limit applied to the initial log-odds.
pub const BASE_SCORE_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
    pub subsample: f64,
    pub rng_seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            l2_leaf_reg: 1.0,
            subsample: 1.0,
            rng_seed: 7,
        }
    }
}

impl GbdtParams {
    /// `n_trees = 0` is accepted and yields a base-rate model.
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("gbdt.max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "gbdt.learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("gbdt.min_samples_leaf must be positive".into()));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return Err(Error::Config(format!("gbdt.l2_leaf_reg {} must be >= 0", self.l2_leaf_reg)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("gbdt.subsample {} outside (0, 1]", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A tree stored as a node arena; node 0 is the root and children always
/// have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => i = if x[feature_index] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    fn check(&self, feature_count: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { value } if !value.is_finite() => {
                    return Err(format!("node {i}: non-finite leaf value"))
                }
                TreeNode::Leaf { .. } => {}
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    if feature_index >= feature_count {
                        return Err(format!("node {i}: feature {feature_index} out of range"));
                    }
                    if threshold.is_nan() {
                        return Err(format!("node {i}: NaN threshold"));
                    }
                    for c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i}: bad child index {c}"));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a single tree".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_count: usize,
    pub trees: Vec<Tree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Keeps probabilities strictly inside (0, 1).
const PROBA_EPS: f64 = 1e-15;

impl GbdtModel {
    pub fn constant(base_score: f64, feature_count: usize) -> Self {
        Self {
            base_score,
            learning_rate: 1.0,
            feature_count,
            trees: Vec::new(),
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_count {
            return Err(Error::Contract(format!(
                "model expects {} features, got {}",
                self.feature_count,
                x.len()
            )));
        }
        Ok(())
    }

    /// Log-odds: `base_score + learning_rate * sum of tree outputs`.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.raw_unchecked(x, self.trees.len()))
    }

    fn raw_unchecked(&self, x: &[f64], n_trees: usize) -> f64 {
        let sum: f64 = self.trees[..n_trees].iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict_raw(x)?).clamp(PROBA_EPS, 1.0 - PROBA_EPS))
    }

    /// Probability using only the first `n_trees` trees.
    pub fn predict_proba_truncated(&self, x: &[f64], n_trees: usize) -> Result<f64> {
        self.check_len(x)?;
        let n = n_trees.min(self.trees.len());
        Ok(sigmoid(self.raw_unchecked(x, n)).clamp(PROBA_EPS, 1.0 - PROBA_EPS))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::ModelFormat("non-finite base score or learning rate".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.check(self.feature_count)
                .map_err(|m| Error::ModelFormat(format!("tree {t}: {m}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: GbdtModel,
    /// Set when the training labels were all one class.
    pub single_class: bool,
    /// Mean training log-loss after 0, 1, ..., n_trees trees.
    pub loss_trace: Vec<f64>,
}

pub fn log_loss(labels: &[bool], raw: &[f64]) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(raw)
        .map(|(&y, &z)| {
            // log(1 + e^-z) for y = 1, log(1 + e^z) for y = 0, computed stably
            let s = if y { -z } else { z };
            s.max(0.0) + (-s.abs()).exp().ln_1p()
        })
        .sum();
    total / labels.len() as f64
}

struct Grower<'a> {
    rows: &'a [&'a [f64]],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn leaf_value(&self, members: &[usize]) -> f64 {
        let mut members = members.to_vec();
        members.sort_unstable();
        let (g, h) = members
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        let denom = h + self.params.l2_leaf_reg;
        if denom > 0.0 {
            -g / denom
        } else {
            0.0
        }
    }

    fn scan(&self, order: &[usize], f: usize, accept_zero: bool) -> Option<Split> {
        split::scan_sorted(
            order.len(),
            |i| self.rows[order[i]][f],
            |i| self.grad[order[i]],
            |i| self.hess[order[i]],
            self.params.min_samples_leaf,
            self.params.l2_leaf_reg,
            accept_zero,
        )
    }

    /// Best positive-gain split over all features; ties go to the lower feature.
    fn best(&self, sorted: &[Vec<usize>]) -> Option<(usize, Split)> {
        let mut best: Option<(usize, Split)> = None;
        for (f, order) in sorted.iter().enumerate() {
            if let Some(s) = self.scan(order, f, false) {
                if best.is_none_or(|(_, b)| s.gain > b.gain) {
                    best = Some((f, s));
                }
            }
        }
        best
    }

    fn partition(&self, sorted: Vec<Vec<usize>>, feature: usize, threshold: f64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        sorted
            .into_iter()
            .map(|order| order.into_iter().partition(|&i| self.rows[i][feature] <= threshold))
            .unzip()
    }

    /// A zero-gain split is kept only if a child can then split with
    /// positive gain (XOR-like interactions).
    fn zero_gain_lookahead(&self, sorted: &[Vec<usize>], depth: usize) -> Option<(usize, Split)> {
        if depth + 1 >= self.params.max_depth {
            return None;
        }
        for (f, order) in sorted.iter().enumerate() {
            let Some(s) = self.scan(order, f, true) else { continue };
            let (left, right) = self.partition(sorted.to_vec(), f, s.threshold);
            if self.best(&left).is_some() || self.best(&right).is_some() {
                return Some((f, s));
            }
        }
        None
    }

    /// `sorted[f]` lists the node's samples ordered by feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let n = sorted[0].len();
        let mut chosen = None;
        if depth < self.params.max_depth && n >= 2 * self.params.min_samples_leaf {
            chosen = self.best(&sorted).or_else(|| self.zero_gain_lookahead(&sorted, depth));
        }
        let Some((feature, s)) = chosen else {
            self.nodes[id] = TreeNode::Leaf {
                value: self.leaf_value(&sorted[0]),
            };
            return id;
        };
        let (left, right) = self.partition(sorted, feature, s.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature_index: feature,
            threshold: s.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Trains a classifier on `rows` (all of equal length) and boolean labels.
pub fn fit<R: AsRef<[f64]>>(rows: &[R], labels: &[bool], params: &GbdtParams) -> Result<FitOutput> {
    params.validate()?;
    if rows.is_empty() {
        return Err(Error::Validation("cannot fit on an empty training set".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Contract(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    let rows: Vec<&[f64]> = rows.iter().map(AsRef::as_ref).collect();
    let feature_count = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != feature_count {
            return Err(Error::Contract(format!("row {i} has {} features, expected {feature_count}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("row {i} has a non-finite feature")));
        }
    }

    let n = rows.len();
    let positives = labels.iter().filter(|&&y| y).count();
    let prevalence = positives as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln().clamp(-BASE_SCORE_CLAMP, BASE_SCORE_CLAMP);
    let single_class = positives == 0 || positives == n;
    if single_class {
        tracing::warn!(n, positives, "single-class training set, returning a base-rate model");
        let model = GbdtModel {
            base_score,
            learning_rate: params.learning_rate,
            feature_count,
            trees: Vec::new(),
        };
        let loss = log_loss(labels, &vec![base_score; n]);
        return Ok(FitOutput {
            model,
            single_class,
            loss_trace: vec![loss],
        });
    }

    let presorted: Vec<Vec<usize>> = (0..feature_count)
        .map(|f| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            order
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut tree_sum = vec![0.0; n];
    let mut raw = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut loss_trace = vec![log_loss(labels, &raw)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let sorted = if sample_size < n {
            let mut keep = vec![false; n];
            for i in rand::seq::index::sample(&mut rng, n, sample_size) {
                keep[i] = true;
            }
            presorted
                .iter()
                .map(|o| o.iter().copied().filter(|&i| keep[i]).collect())
                .collect()
        } else {
            presorted.clone()
        };
        let mut grower = Grower {
            rows: &rows,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
        };
        grower.grow(sorted, 0);
        let tree = Tree { nodes: grower.nodes };
        for i in 0..n {
            tree_sum[i] += tree.predict(rows[i]);
            raw[i] = base_score + params.learning_rate * tree_sum[i];
        }
        trees.push(tree);
        loss_trace.push(log_loss(labels, &raw));
    }

    Ok(FitOutput {
        model: GbdtModel {
            base_score,
            learning_rate: params.learning_rate,
            feature_count,
            trees,
        },
        single_class,
        loss_trace,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    version: u32,
    #[serde(default)]
    params: Option<GbdtParams>,
    #[serde(flatten)]
    body: T,
}

/// JSON document for a model. `params` is informational.
pub fn model_to_json(model: &GbdtModel, params: Option<&GbdtParams>) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        params: params.cloned(),
        body: model,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<GbdtModel> {
    let file: ModelFile<GbdtModel> =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("unreadable model: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!("unknown format `{}`", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!(
            "model version {} is not supported (expected {MODEL_VERSION})",
            file.version
        )));
    }
    file.body.validate()?;
    Ok(file.body)
}

pub fn save_model(model: &GbdtModel, params: Option<&GbdtParams>, path: &Path) -> Result<()> {
    crate::ingest::write_file(path, &model_to_json(model, params)?)
}

pub fn load_model(path: &Path) -> Result<GbdtModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    model_from_json(&text)
}
