//! CART random forests for regression (variance reduction) and
//! classification (Gini), with bootstrap resampling and per-split feature
//! subsampling.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::featurize::Targets;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Features considered per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(p / 3)` for regression, `ceil(sqrt(p))` for classification.
    Auto,
    All,
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Auto,
        }
    }
}

impl ForestConfig {
    fn features_per_split(&self, p: usize, task: Task) -> usize {
        let k = match self.max_features {
            MaxFeatures::Auto => match task {
                Task::Regression => p.div_ceil(3),
                Task::Classification => (p as f64).sqrt().ceil() as usize,
            },
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Value(f64),
    Counts(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

/// Mean that is exact when all values are equal.
fn stable_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let n = values.clone().count() as f64;
    first + values.map(|v| v - first).sum::<f64>() / n
}

fn argmax_lowest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_for(&self, row: &[f64]) -> &Leaf {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf(leaf) => return leaf,
            }
        }
    }

    /// Leaf value for regression; majority class index for classification.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.leaf_for(row) {
            Leaf::Value(v) => *v,
            Leaf::Counts(c) => argmax_lowest(c) as f64,
        }
    }
}

enum Labels<'a> {
    Values(&'a [f64]),
    Classes(&'a [usize], usize),
}

/// Grows one tree over a bootstrap sample of `m` rows. For every feature
/// `sorted[f * m ..][..m]` lists the sample sorted by that feature, and each
/// node owns the same `start..end` range in all of them, so splits are
/// scanned without re-sorting and children are formed by stable partition.
struct TreeBuilder<'a, R: Rng> {
    x: &'a [f64],
    p: usize,
    m: usize,
    y: Labels<'a>,
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: R,
    nodes: Vec<Node>,
    features: Vec<usize>,
    sorted: Vec<usize>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<'a, R: Rng> TreeBuilder<'a, R> {
    /// `by_feature[f]` holds all rows of `x` sorted by feature `f`;
    /// `counts[row]` is the row's bootstrap multiplicity.
    #[allow(clippy::too_many_arguments)]
    fn new(
        x: &'a [f64],
        p: usize,
        y: Labels<'a>,
        cfg: &'a ForestConfig,
        mtry: usize,
        rng: R,
        by_feature: &[Vec<usize>],
        counts: &[usize],
    ) -> Self {
        let m: usize = counts.iter().sum();
        let mut sorted = Vec::with_capacity(p * m);
        for rows in by_feature {
            for &r in rows {
                sorted.extend(std::iter::repeat_n(r, counts[r]));
            }
        }
        Self {
            x,
            p,
            m,
            y,
            cfg,
            mtry,
            rng,
            nodes: Vec::new(),
            features: Vec::with_capacity(p),
            sorted,
            goes_left: vec![false; counts.len()],
            scratch: Vec::with_capacity(m),
        }
    }

    fn value(&self, row: usize, f: usize) -> f64 {
        self.x[row * self.p + f]
    }

    fn rows(&self, f: usize, start: usize, end: usize) -> &[usize] {
        &self.sorted[f * self.m + start..f * self.m + end]
    }

    fn leaf(&self, idx: &[usize]) -> Leaf {
        match self.y {
            Labels::Values(y) => Leaf::Value(stable_mean(idx.iter().map(|&i| y[i]))),
            Labels::Classes(y, k) => {
                let mut counts = vec![0u32; k];
                for &i in idx {
                    counts[y[i]] += 1;
                }
                Leaf::Counts(counts)
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.y {
            Labels::Values(y) => idx.iter().all(|&i| y[i] == y[idx[0]]),
            Labels::Classes(y, _) => idx.iter().all(|&i| y[i] == y[idx[0]]),
        }
    }

    /// Best threshold on one feature; `None` when no split leaves at least
    /// `min_samples_leaf` rows on each side.
    fn best_on_feature(&self, f: usize, start: usize, end: usize) -> Option<Split> {
        let leaf = self.cfg.min_samples_leaf.max(1);
        let order = self.rows(f, start, end);
        let n = order.len();
        let mut best: Option<Split> = None;
        let mut consider = |i: usize, score: f64| {
            let (a, b) = (self.value(order[i - 1], f), self.value(order[i], f));
            if a == b {
                return;
            }
            if best.as_ref().is_none_or(|s| score > s.score) {
                let mut t = 0.5 * (a + b);
                if t >= b {
                    t = a;
                }
                best = Some(Split {
                    feature: f,
                    threshold: t,
                    score,
                });
            }
        };
        match self.y {
            Labels::Values(y) => {
                // maximise sL^2/nL + sR^2/nR, centred on the node mean for precision
                let c = y[order[0]];
                let total: f64 = order.iter().map(|&i| y[i] - c).sum();
                let mut left = 0.0;
                for i in 1..n {
                    left += y[order[i - 1]] - c;
                    if i < leaf || n - i < leaf {
                        continue;
                    }
                    let right = total - left;
                    let score = left * left / i as f64 + right * right / (n - i) as f64;
                    consider(i, score);
                }
            }
            Labels::Classes(y, k) => {
                let mut right = vec![0.0f64; k];
                for &i in order {
                    right[y[i]] += 1.0;
                }
                let mut left = vec![0.0f64; k];
                let (mut sl, mut sr) = (0.0, right.iter().map(|c| c * c).sum::<f64>());
                for i in 1..n {
                    let c = y[order[i - 1]];
                    sl += 2.0 * left[c] + 1.0;
                    sr -= 2.0 * right[c] - 1.0;
                    left[c] += 1.0;
                    right[c] -= 1.0;
                    if i < leaf || n - i < leaf {
                        continue;
                    }
                    consider(i, sl / i as f64 + sr / (n - i) as f64);
                }
            }
        }
        best
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(Leaf::Value(0.0)));
        let leaf = self.cfg.min_samples_leaf.max(1);
        let stop = end - start < 2 * leaf
            || self.cfg.max_depth.is_some_and(|d| depth >= d)
            || self.is_pure(self.rows(0, start, end));
        let split = if stop { None } else { self.find_split(start, end) };
        match split {
            None => self.nodes[id] = Node::Leaf(self.leaf(self.rows(0, start, end))),
            Some(s) => {
                let mid = self.partition(&s, start, end);
                let left = self.build(start, mid, depth + 1);
                let right = self.build(mid, end, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    /// Stable partition of the node's range in every feature order; returns
    /// the first index of the right child.
    fn partition(&mut self, s: &Split, start: usize, end: usize) -> usize {
        for k in start..end {
            let r = self.sorted[k];
            self.goes_left[r] = self.value(r, s.feature) <= s.threshold;
        }
        let mut mid = start;
        for f in 0..self.p {
            let base = f * self.m;
            self.scratch.clear();
            let mut lo = base + start;
            for k in base + start..base + end {
                let r = self.sorted[k];
                if self.goes_left[r] {
                    self.sorted[lo] = r;
                    lo += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            self.sorted[lo..base + end].copy_from_slice(&self.scratch);
            mid = lo - base;
        }
        mid
    }

    /// Draws `mtry` features; if none of them can split, keeps drawing from
    /// the rest until one can or all are exhausted.
    fn find_split(&mut self, start: usize, end: usize) -> Option<Split> {
        let mut features = std::mem::take(&mut self.features);
        features.clear();
        features.extend(0..self.p);
        features.shuffle(&mut self.rng);
        let mut best: Option<Split> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_on_feature(f, start, end) {
                if best.as_ref().is_none_or(|b| s.score > b.score) {
                    best = Some(s);
                }
            }
        }
        self.features = features;
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    task: Task,
    trees: Vec<DecisionTree>,
    config: ForestConfig,
    seed: u64,
    n_features: usize,
    /// Sorted class labels (classification only).
    classes: Vec<String>,
}

impl RandomForest {
    pub fn fit(x: &DMatrix<f64>, targets: &Targets, config: &ForestConfig, seed: u64) -> Result<Self, ModelError> {
        let (n, p) = x.shape();
        if n == 0 || targets.is_empty() {
            return Err(ModelError::Empty);
        }
        if targets.len() != n {
            return Err(ModelError::LengthMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        if p == 0 {
            return Err(ModelError::InvalidConfig("no feature columns".into()));
        }
        if config.n_trees == 0 {
            return Err(ModelError::InvalidConfig("n_trees must be >= 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let mut rows = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                rows[i * p + j] = x[(i, j)];
            }
        }
        let (task, classes, class_idx) = match targets {
            Targets::Values(v) => {
                if v.iter().any(|t| !t.is_finite()) {
                    return Err(ModelError::NonFinite);
                }
                (Task::Regression, Vec::new(), Vec::new())
            }
            Targets::Labels(l) => {
                let classes: Vec<String> = l.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                let idx = l.iter().map(|s| classes.binary_search(s).unwrap()).collect();
                (Task::Classification, classes, idx)
            }
        };
        let mtry = config.features_per_split(p, task);
        let mut master = seeding::rng(seed);
        let tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| master.random()).collect();
        let by_feature: Vec<Vec<usize>> = (0..p)
            .map(|f| {
                let mut rows: Vec<usize> = (0..n).collect();
                rows.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
                rows
            })
            .collect();
        let trees = tree_seeds
            .par_iter()
            .map(|&ts| {
                let mut rng = seeding::rng(ts);
                let mut counts = vec![0usize; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                let labels = match targets {
                    Targets::Values(v) => Labels::Values(v),
                    Targets::Labels(_) => Labels::Classes(&class_idx, classes.len()),
                };
                let mut b = TreeBuilder::new(&rows, p, labels, config, mtry, rng, &by_feature, &counts);
                b.build(0, n, 0);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            task,
            trees,
            config: *config,
            seed,
            n_features: p,
            classes,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn predict_slice(&self, row: &[f64]) -> f64 {
        match self.task {
            Task::Regression => stable_mean(self.trees.iter().map(|t| t.predict_row(row))),
            Task::Classification => {
                let mut votes = vec![0u32; self.classes.len()];
                for t in &self.trees {
                    votes[t.predict_row(row) as usize] += 1;
                }
                argmax_lowest(&votes) as f64
            }
        }
    }

    /// Mean of tree outputs (regression) or majority vote with ties going to
    /// the lowest label in sort order (classification).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Targets, ModelError> {
        if x.ncols() != self.n_features {
            return Err(ModelError::ShapeMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let mut row = vec![0.0; self.n_features];
        let raw: Vec<f64> = (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.predict_slice(&row)
            })
            .collect();
        Ok(match self.task {
            Task::Regression => Targets::Values(raw),
            Task::Classification => {
                Targets::Labels(raw.into_iter().map(|c| self.classes[c as usize].clone()).collect())
            }
        })
    }
}

pub fn rf_fit(
    x: &DMatrix<f64>,
    targets: &Targets,
    config: &ForestConfig,
    seed: u64,
) -> Result<RandomForest, ModelError> {
    RandomForest::fit(x, targets, config, seed)
}

pub fn rf_predict(model: &RandomForest, x: &DMatrix<f64>) -> Result<Targets, ModelError> {
    model.predict(x)
}
