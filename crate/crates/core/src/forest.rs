//! CART decision trees and random forests with Gini impurity.
//!
//! Split search is exact: candidate splits are compared with integer
//! arithmetic on weighted class counts, so the chosen split never depends on
//! floating-point rounding. Among splits with equal impurity decrease the
//! lowest feature index wins, then the lowest threshold.
//!
//! Forests train one tree per RNG stream derived from `(seed, tree index)`
//! with [`derive_seed`], so a fitted model is independent of the number of
//! worker threads.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::matrix::Matrix;
use crate::seed::derive_seed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Exact split scoring multiplies five weight factors in `u128`.
const MAX_TOTAL_WEIGHT: u64 = 1 << 25;

/// How many features each node samples before searching for a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(p))`.
    Sqrt,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => {
                let mut k = (n_features as f64).sqrt() as usize;
                while k * k < n_features {
                    k += 1;
                }
                while k > 1 && (k - 1) * (k - 1) >= n_features {
                    k -= 1;
                }
                k
            }
            MaxFeatures::Fixed(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_features: MaxFeatures,
    /// Nodes with less total sample weight than this become leaves.
    pub min_samples_split: usize,
    /// Minimum total sample weight on each side of a split.
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            bootstrap: true,
            tree: TreeConfig {
                max_features: MaxFeatures::Sqrt,
                ..TreeConfig::default()
            },
        }
    }
}

/// A tree node. Every node keeps the weighted class counts of the training
/// samples that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        counts: Vec<u64>,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        counts: Vec<u64>,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn counts(&self) -> &[u64] {
        match self {
            TreeNode::Leaf { counts } | TreeNode::Split { counts, .. } => counts,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn leaf_counts(&self, row: &[f64]) -> &[u64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        majority(self.leaf_counts(row))
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Largest feature index referenced by any split.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    fn accumulate_importance(&self, acc: &mut [f64]) {
        if let TreeNode::Split {
            feature,
            counts,
            left,
            right,
            ..
        } = self
        {
            let weighted = |c: &[u64]| c.iter().sum::<u64>() as f64 * gini(c);
            let gain = weighted(counts) - weighted(left.counts()) - weighted(right.counts());
            acc[*feature] += gain.max(0.0);
            left.accumulate_importance(acc);
            right.accumulate_importance(acc);
        }
    }

    /// Mean decrease in impurity per feature, normalized to sum 1 (all zero
    /// for a single leaf).
    pub fn feature_importance(&self, n_features: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_features];
        self.accumulate_importance(&mut acc);
        let total = (self.counts().iter().sum::<u64>() as f64).max(1.0);
        acc.iter_mut().for_each(|v| *v /= total);
        let sum: f64 = acc.iter().sum();
        if sum > 0.0 {
            acc.iter_mut().for_each(|v| *v /= sum);
        }
        acc
    }
}

/// Gini impurity of a class-count histogram.
pub fn gini(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Index of the largest count, lowest index on ties.
pub fn majority(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Split threshold between two adjacent distinct values.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m >= hi || !m.is_finite() {
        lo
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    /// Split quality is `num / den`, larger is better:
    /// `sum_k l_k^2 / w_l + sum_k r_k^2 / w_r`, which orders splits the same
    /// way as the weighted child Gini impurity (reversed).
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        let lhs = self.num * other.den;
        let rhs = other.num * self.den;
        lhs > rhs
            || (lhs == rhs
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

struct Builder<'a, R: Rng> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [u64],
    n_classes: usize,
    config: TreeConfig,
    max_features: usize,
    rng: &'a mut R,
    features: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.n_classes];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> TreeNode {
        let counts = self.counts(idx);
        let total: u64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || total < self.config.min_samples_split as u64 {
            return TreeNode::Leaf { counts };
        }
        let Some(best) = self.best_split(idx, &counts, total) else {
            return TreeNode::Leaf { counts };
        };

        let mut mid = 0;
        for j in 0..idx.len() {
            if self.x.get(idx[j], best.feature) <= best.threshold {
                idx.swap(mid, j);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            counts,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&mut self, idx: &[usize], counts: &[u64], total: u64) -> Option<Candidate> {
        let p = self.x.n_cols();
        if self.max_features < p {
            self.features.shuffle(self.rng);
        }
        let min_leaf = self.config.min_samples_leaf.max(1) as u64;
        let parent_sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
        let mut best: Option<Candidate> = None;
        let mut visited = 0;

        for fi in 0..p {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            let f = self.features[fi];
            self.scratch.clear();
            self.scratch.extend(idx.iter().map(|&i| (self.x.get(i, f), i)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 >= self.scratch[self.scratch.len() - 1].0 {
                continue;
            }
            visited += 1;

            let mut left = vec![0u64; self.n_classes];
            let mut right = counts.to_vec();
            let (mut wl, mut wr) = (0u64, total);
            let (mut sl, mut sr) = (0u128, parent_sq);
            for pos in 0..self.scratch.len() - 1 {
                let (v, i) = self.scratch[pos];
                let (k, w) = (self.y[i], self.w[i]);
                let w128 = w as u128;
                sl += 2 * left[k] as u128 * w128 + w128 * w128;
                sr = sr + w128 * w128 - 2 * right[k] as u128 * w128;
                left[k] += w;
                right[k] -= w;
                wl += w;
                wr -= w;
                let next = self.scratch[pos + 1].0;
                if next <= v || wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let cand = Candidate {
                    feature: f,
                    threshold: midpoint(v, next),
                    num: sl * wr as u128 + sr * wl as u128,
                    den: wl as u128 * wr as u128,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

fn check_inputs(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput("cannot fit a tree on zero rows".into()));
    }
    if x.n_cols() == 0 {
        return Err(Error::EmptyInput("cannot fit a tree on zero features".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }
    Ok(())
}

/// Fits one tree with unit sample weights.
pub fn fit_tree<R: Rng>(x: &Matrix, y: &[usize], n_classes: usize, rng: &mut R, config: &TreeConfig) -> Result<TreeNode> {
    let w = vec![1u64; x.n_rows()];
    fit_tree_weighted(x, y, n_classes, &w, rng, config)
}

/// Fits one tree where row `i` counts `weights[i]` times. Rows of weight 0
/// are ignored.
pub fn fit_tree_weighted<R: Rng>(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    weights: &[u64],
    rng: &mut R,
    config: &TreeConfig,
) -> Result<TreeNode> {
    check_inputs(x, y, n_classes)?;
    if weights.len() != x.n_rows() {
        return Err(Error::InvalidArgument("one weight per row required".into()));
    }
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("all sample weights are zero".into()));
    }
    if total > MAX_TOTAL_WEIGHT {
        return Err(Error::InvalidArgument(format!(
            "total sample weight {total} exceeds {MAX_TOTAL_WEIGHT}"
        )));
    }
    let mut idx: Vec<usize> = (0..x.n_rows()).filter(|&i| weights[i] > 0).collect();
    let mut builder = Builder {
        x,
        y,
        w: weights,
        n_classes,
        config: *config,
        max_features: config.max_features.resolve(x.n_cols()),
        rng,
        features: (0..x.n_cols()).collect(),
        scratch: Vec::with_capacity(idx.len()),
    };
    Ok(builder.build(&mut idx, 0))
}

/// A fitted model that maps a feature row to a class index.
pub trait Predictor: Send + Sync {
    fn predict_row(&self, row: &[f64]) -> usize;

    /// Per-feature importance, when the model defines one.
    fn feature_importance(&self) -> Option<Vec<f64>> {
        None
    }
}

/// A trainable classifier. External models plug into cross-validation and
/// feature selection through this trait.
pub trait Classifier: Send + Sync {
    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Predictor>>;

    /// JSON description embedded in report fingerprints.
    fn describe(&self) -> serde_json::Value;
}

/// A single tree together with the width of its training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTree {
    pub root: TreeNode,
    pub n_features: usize,
}

impl Predictor for FittedTree {
    fn predict_row(&self, row: &[f64]) -> usize {
        self.root.predict(row)
    }

    fn feature_importance(&self) -> Option<Vec<f64>> {
        let mut imp = self.root.feature_importance(self.n_features);
        if imp.iter().all(|&v| v == 0.0) && self.n_features > 0 {
            imp.fill(1.0 / self.n_features as f64);
        }
        Some(imp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub classes: Vec<String>,
    pub config: ForestConfig,
    pub seed: u64,
    pub trees: Vec<TreeNode>,
}

/// Draws a bootstrap sample of `n` rows as per-row multiplicities.
pub fn bootstrap_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<u64> {
    let mut w = vec![0u64; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}

/// RNG for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64))
}

impl ForestModel {
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        classes: Vec<String>,
        feature_names: Vec<String>,
        config: &ForestConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.n_estimators == 0 {
            return Err(Error::InvalidArgument("n_estimators must be at least 1".into()));
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::Schema("feature names do not match matrix width".into()));
        }
        check_inputs(x, y, classes.len())?;
        let trees = (0..config.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let weights = if config.bootstrap {
                    bootstrap_weights(x.n_rows(), &mut rng)
                } else {
                    vec![1; x.n_rows()]
                };
                fit_tree_weighted(x, y, classes.len(), &weights, &mut rng, &config.tree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names,
            classes,
            config: *config,
            seed,
            trees,
        })
    }

    pub fn fit_dataset(dataset: &Dataset, config: &ForestConfig, seed: u64) -> Result<Self> {
        let (classes, y) = dataset.class_indices();
        Self::fit(&dataset.matrix(), &y, classes, dataset.feature_names.clone(), config, seed)
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }

    fn proba_unchecked(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            let counts = tree.leaf_counts(row);
            let total = counts.iter().sum::<u64>() as f64;
            for (acc, &c) in p.iter_mut().zip(counts) {
                *acc += c as f64 / total;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    /// Mean of the trees' normalized leaf histograms.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        Ok(self.proba_unchecked(row))
    }

    /// Class index with the highest mean probability, lowest index on ties.
    /// With pure leaves this is the plurality vote of the trees.
    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        self.check_row(row)?;
        Ok(argmax(&self.proba_unchecked(row)))
    }

    pub fn predict_label(&self, row: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict(row)?])
    }

    /// Per-tree hard votes: each tree's leaf majority class.
    pub fn votes(&self, row: &[f64]) -> Result<Vec<usize>> {
        self.check_row(row)?;
        let mut v = vec![0usize; self.classes.len()];
        for tree in &self.trees {
            v[tree.predict(row)] += 1;
        }
        Ok(v)
    }

    /// Mean decrease in Gini impurity, averaged over trees, summing to 1.
    /// A forest of single leaves gets uniform importance.
    pub fn feature_importance(&self) -> Vec<f64> {
        let p = self.feature_names.len();
        let mut acc = vec![0.0; p];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.feature_importance(p)) {
                *a += v;
            }
        }
        let sum: f64 = acc.iter().sum();
        if sum > 0.0 {
            acc.iter_mut().for_each(|v| *v /= sum);
        } else if p > 0 {
            acc.iter_mut().for_each(|v| *v = 1.0 / p as f64);
        }
        acc
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let model = ForestModel::deserialize(&mut de)?;
        de.end()?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        let p = model.feature_names.len();
        if model.trees.is_empty() || model.trees.iter().any(|t| t.max_feature().is_some_and(|f| f >= p)) {
            return Err(Error::Schema("model references invalid features".into()));
        }
        Ok(model)
    }
}

impl Predictor for ForestModel {
    fn predict_row(&self, row: &[f64]) -> usize {
        argmax(&self.proba_unchecked(row))
    }

    fn feature_importance(&self) -> Option<Vec<f64>> {
        Some(ForestModel::feature_importance(self))
    }
}

/// Classifier configurations shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    RandomForest(ForestConfig),
    DecisionTree(TreeConfig),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::RandomForest(ForestConfig::default())
    }
}

impl fmt::Display for ClassifierConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierConfig::RandomForest(c) => write!(f, "random_forest({} trees)", c.n_estimators),
            ClassifierConfig::DecisionTree(_) => f.write_str("decision_tree"),
        }
    }
}

impl Classifier for ClassifierConfig {
    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Predictor>> {
        match self {
            ClassifierConfig::RandomForest(cfg) => {
                let classes = (0..n_classes).map(|c| c.to_string()).collect();
                let names = (0..x.n_cols()).map(|c| format!("f{c}")).collect();
                Ok(Box::new(ForestModel::fit(x, y, classes, names, cfg, seed)?))
            }
            ClassifierConfig::DecisionTree(cfg) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(Box::new(FittedTree {
                    root: fit_tree(x, y, n_classes, &mut rng, cfg)?,
                    n_features: x.n_cols(),
                }))
            }
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}
