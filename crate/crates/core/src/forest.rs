//! Random forests for 1-5 star labels: CART trees on bootstrap samples with
//! per-node feature subsampling, out-of-bag evaluation, impurity-decrease
//! importance, confusion matrices and classification metrics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::util::{argsort_desc, rng};
use crate::{Error, Result};

pub const CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means floor(sqrt(p)).
    pub mtry: Option<usize>,
    /// Minimum training rows in each child of a split.
    pub min_node: usize,
    pub seed: u64,
    /// Treat stars as numeric: variance-reduction splits, mean-vote
    /// predictions rounded to the nearest star.
    pub regression: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 500, mtry: None, min_node: 5, seed: 0, regression: false }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or(((p as f64).sqrt().floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease of this split.
        decrease: f64,
    },
    Leaf {
        counts: [u32; CLASSES],
        /// Mean label of the leaf's training rows.
        mean: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Times each training row was drawn into this tree's bootstrap sample.
    pub in_bag: Vec<u32>,
}

/// Majority class of `counts`; ties go to the lower star.
fn majority(counts: &[u32; CLASSES]) -> u8 {
    let mut best = 0;
    for c in 1..CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best as u8 + 1
}

impl Tree {
    fn leaf(&self, row: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    /// Class vote of this tree (classification).
    pub fn predict(&self, row: &[f64]) -> u8 {
        match self.leaf(row) {
            Node::Leaf { counts, .. } => majority(counts),
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Mean-label prediction of this tree (regression).
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self.leaf(row) {
            Node::Leaf { mean, .. } => *mean,
            Node::Split { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Out-of-bag prediction per training row; `None` if every tree saw it.
    pub oob_predictions: Vec<Option<u8>>,
    /// Mean per-tree impurity decrease by feature, before normalisation.
    pub raw_importance: Vec<f64>,
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [u8],
    mtry: usize,
    min_node: usize,
    regression: bool,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    buf: Vec<(f64, u8)>,
}

/// Weighted impurity (n * Gini, or the sum of squared deviations).
fn impurity(regression: bool, counts: &[u32; CLASSES], n: f64, sum: f64, sum_sq: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    if regression {
        (sum_sq - sum * sum / n).max(0.0)
    } else {
        n - counts.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>() / n
    }
}

#[derive(Default, Clone, Copy)]
struct Stats {
    counts: [u32; CLASSES],
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Stats {
    fn add(&mut self, label: u8) {
        self.counts[label as usize - 1] += 1;
        let v = label as f64;
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn impurity(&self, regression: bool) -> f64 {
        impurity(regression, &self.counts, self.n, self.sum, self.sum_sq)
    }

    fn sub(&self, other: &Stats) -> Stats {
        let mut counts = self.counts;
        for (c, o) in counts.iter_mut().zip(other.counts) {
            *c -= o;
        }
        Stats { counts, n: self.n - other.n, sum: self.sum - other.sum, sum_sq: self.sum_sq - other.sum_sq }
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<u32>) {
        // Explicit stack of (node slot, rows).
        self.nodes.push(Node::Leaf { counts: [0; CLASSES], mean: 0.0 });
        let mut stack = vec![(0usize, rows)];
        while let Some((slot, rows)) = stack.pop() {
            let mut stats = Stats::default();
            for &r in &rows {
                stats.add(self.y[r as usize]);
            }
            let parent = stats.impurity(self.regression);
            let split = if parent > 1e-12 && rows.len() >= 2 * self.min_node { self.best_split(&rows, &stats, parent) } else { None };
            match split {
                None => {
                    self.nodes[slot] = Node::Leaf { counts: stats.counts, mean: stats.sum / stats.n.max(1.0) };
                }
                Some((feature, threshold, decrease)) => {
                    let (l, r): (Vec<u32>, Vec<u32>) =
                        rows.iter().partition(|&&i| self.x[(i as usize, feature)] <= threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { counts: [0; CLASSES], mean: 0.0 });
                    self.nodes.push(Node::Leaf { counts: [0; CLASSES], mean: 0.0 });
                    self.nodes[slot] = Node::Split { feature, threshold, left, right: left + 1, decrease };
                    self.importance[feature] += decrease;
                    stack.push((left + 1, r));
                    stack.push((left, l));
                }
            }
        }
    }

    /// Best (feature, threshold, decrease) over `mtry` features drawn without
    /// replacement; `None` if no split leaves `min_node` rows on both sides
    /// and reduces impurity.
    fn best_split(&mut self, rows: &[u32], total: &Stats, parent: f64) -> Option<(usize, f64, f64)> {
        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry {
            let j = self.rng.random_range(i..p);
            features.swap(i, j);
        }
        let n = rows.len();
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &features[..self.mtry] {
            self.buf.clear();
            self.buf.extend(rows.iter().map(|&r| (self.x[(r as usize, f)], self.y[r as usize])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = Stats::default();
            for j in 0..n - 1 {
                left.add(self.buf[j].1);
                let (v, next) = (self.buf[j].0, self.buf[j + 1].0);
                if v == next || j + 1 < self.min_node || n - j - 1 < self.min_node {
                    continue;
                }
                let right = total.sub(&left);
                let decrease = parent - left.impurity(self.regression) - right.impurity(self.regression);
                if decrease > 1e-12 && best.is_none_or(|b| decrease > b.2) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((f, threshold, decrease));
                }
            }
        }
        best
    }
}

fn check_labels(y: &[u8]) -> Result<()> {
    match y.iter().find(|&&c| !(1..=5).contains(&c)) {
        Some(&bad) => Err(Error::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// Trains a forest on `x` (n x p topic proportions) and star labels `y`.
pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &ForestConfig) -> Result<ForestModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < 10 {
        return Err(Error::InvalidInput(format!("random forest needs at least 10 rows, got {n}")));
    }
    check_labels(y)?;
    let mtry = config.mtry_for(p);
    if p == 0 || mtry == 0 || mtry > p || config.min_node == 0 || config.n_trees == 0 {
        return Err(Error::InvalidConfig(format!(
            "invalid forest settings: p={p}, mtry={mtry}, min_node={}, n_trees={}",
            config.min_node, config.n_trees
        )));
    }
    if x.row_iter().any(|r| (r.sum() - 1.0).abs() > 1e-6) {
        log::warn!("some feature rows do not sum to 1; are these topic proportions?");
    }
    for c in 1..=5u8 {
        if !y.contains(&c) {
            log::warn!("class {c} is absent from the labels and can never be predicted");
        }
    }

    let trees: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(config.seed, t as u64);
            let mut in_bag = vec![0u32; n];
            let rows: Vec<u32> = (0..n)
                .map(|_| {
                    let i = r.random_range(0..n);
                    in_bag[i] += 1;
                    i as u32
                })
                .collect();
            let mut g = Grower {
                x,
                y,
                mtry,
                min_node: config.min_node,
                regression: config.regression,
                rng: r,
                nodes: Vec::new(),
                importance: vec![0.0; p],
                buf: Vec::with_capacity(n),
            };
            g.grow(rows);
            let imp = g.importance.iter().map(|v| v / n as f64).collect();
            (Tree { nodes: g.nodes, in_bag }, imp)
        })
        .collect();

    let mut raw_importance = vec![0.0; p];
    for (_, imp) in &trees {
        for (a, b) in raw_importance.iter_mut().zip(imp) {
            *a += b;
        }
    }
    raw_importance.iter_mut().for_each(|v| *v /= config.n_trees as f64);
    let trees: Vec<Tree> = trees.into_iter().map(|(t, _)| t).collect();

    let mut model = ForestModel { config: *config, n_features: p, trees, oob_predictions: Vec::new(), raw_importance };
    model.oob_predictions = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            model.vote(&row, |t| t.in_bag[i] == 0)
        })
        .collect();
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: usize,
    pub importance: f64,
    /// 1-based rank.
    pub rank: usize,
}

/// Features by descending importance (normalised to sum to 1); ties keep
/// feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceRanking {
    /// Importance indexed by feature.
    pub fn by_feature(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.entries.len()];
        for e in &self.entries {
            v[e.feature] = e.importance;
        }
        v
    }
}

impl ForestModel {
    /// Majority vote of the trees selected by `use_tree`; ties go to the
    /// lower star. Regression forests average and round instead.
    fn vote(&self, row: &[f64], use_tree: impl Fn(&Tree) -> bool) -> Option<u8> {
        if self.config.regression {
            let (mut s, mut n) = (0.0, 0usize);
            for t in self.trees.iter().filter(|t| use_tree(t)) {
                s += t.predict_value(row);
                n += 1;
            }
            return (n > 0).then(|| (s / n as f64).round().clamp(1.0, 5.0) as u8);
        }
        let mut votes = [0u32; CLASSES];
        let mut any = false;
        for t in self.trees.iter().filter(|t| use_tree(t)) {
            votes[t.predict(row) as usize - 1] += 1;
            any = true;
        }
        any.then(|| majority(&votes))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: x.ncols() });
        }
        Ok(x.row_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().copied().collect();
                self.vote(&row, |_| true).expect("forest has trees")
            })
            .collect())
    }

    /// Accuracy of the out-of-bag predictions over rows that have one.
    pub fn oob_accuracy(&self, y: &[u8]) -> f64 {
        let (hit, n) = self
            .oob_predictions
            .iter()
            .zip(y)
            .filter_map(|(p, t)| p.map(|p| (p == *t) as usize))
            .fold((0, 0), |(h, n), x| (h + x, n + 1));
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }

    /// Confusion matrix of the out-of-bag predictions.
    pub fn oob_confusion(&self, y: &[u8]) -> Result<ConfusionMatrix> {
        let (pred, truth): (Vec<u8>, Vec<u8>) =
            self.oob_predictions.iter().zip(y).filter_map(|(p, t)| p.map(|p| (p, *t))).unzip();
        confusion(&pred, &truth)
    }

    pub fn importance(&self) -> ImportanceRanking {
        let total: f64 = self.raw_importance.iter().sum();
        let norm: Vec<f64> = if total > 0.0 {
            self.raw_importance.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.n_features]
        };
        let entries = argsort_desc(&norm)
            .into_iter()
            .enumerate()
            .map(|(i, f)| ImportanceEntry { feature: f, importance: norm[f], rank: i + 1 })
            .collect();
        ImportanceRanking { entries }
    }
}

/// 5x5 counts; `counts[p - 1][t - 1]` is rows predicted `p` with true `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, predicted: usize) -> u64 {
        self.counts[predicted].iter().sum()
    }

    pub fn col_total(&self, truth: usize) -> u64 {
        self.counts.iter().map(|r| r[truth]).sum()
    }

    /// CSV with the 5x5 counts plus row and column margins.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("predicted\\true,1,2,3,4,5,total\n");
        for p in 0..CLASSES {
            s += &format!("{},", p + 1);
            for t in 0..CLASSES {
                s += &format!("{},", self.counts[p][t]);
            }
            s += &format!("{}\n", self.row_total(p));
        }
        s += "total,";
        for t in 0..CLASSES {
            s += &format!("{},", self.col_total(t));
        }
        s += &format!("{}\n", self.total());
        s
    }
}

pub fn confusion(predictions: &[u8], truth: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: predictions.len() });
    }
    check_labels(predictions)?;
    check_labels(truth)?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        cm.counts[p as usize - 1][t as usize - 1] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A margin was zero, so at least one metric is reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; CLASSES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
}

/// Accuracy, per-class precision (over the predicted-row margin), recall
/// (over the true-column margin), standard F1, and macro averages.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("confusion matrix is empty".into()));
    }
    let trace: u64 = (0..CLASSES).map(|c| cm.counts[c][c]).sum();
    let per_class = std::array::from_fn(|c| {
        let (row, col, hit) = (cm.row_total(c), cm.col_total(c), cm.counts[c][c] as f64);
        let precision = if row > 0 { hit / row as f64 } else { 0.0 };
        let recall = if col > 0 { hit / col as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        ClassMetrics { precision, recall, f1, undefined: row == 0 || col == 0 }
    });
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / CLASSES as f64;
    Ok(Metrics {
        accuracy: trace as f64 / total as f64,
        macro_precision: avg(|m| m.precision),
        macro_recall: avg(|m| m.recall),
        macro_f1: avg(|m| m.f1),
        per_class,
        total,
    })
}
