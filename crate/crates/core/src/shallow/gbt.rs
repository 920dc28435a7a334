use serde::{Deserialize, Serialize};

use super::{rows_f64, training_view, Result, ShallowError};
use crate::features::{FeatureMatrix, ImportanceReport};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_rounds: 100, max_depth: 3, learning_rate: 0.3, lambda: 1.0, min_child_weight: 1.0 }
    }
}

/// Either a split (`feature`, `threshold`, `left`, `right`) or a leaf
/// (`leaf_value`). Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<TreeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<TreeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_value: Option<f64>,
}

impl TreeNode {
    fn leaf(value: f64) -> Self {
        Self { feature: None, threshold: None, left: None, right: None, leaf_value: Some(value) }
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match (node.feature, node.threshold, &node.left, &node.right) {
                (Some(f), Some(t), Some(l), Some(r)) => node = if row[f] < t { l } else { r },
                _ => return node.leaf_value.unwrap_or(0.0),
            }
        }
    }

    pub fn visit_splits(&self, f: &mut impl FnMut(usize, f64)) {
        if let (Some(feat), Some(t)) = (self.feature, self.threshold) {
            f(feat, t);
        }
        for child in [&self.left, &self.right].into_iter().flatten() {
            child.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub classes: Vec<usize>,
    pub n_features: usize,
    /// `trees[round][class]`.
    pub trees: Vec<Vec<TreeNode>>,
    /// Total split gain credited to each feature.
    pub feature_gain: Vec<f64>,
    /// Training log-loss before boosting and after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtPrediction {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
    feature_gain: &'a mut [f64],
    in_node: Vec<bool>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn best_split(&mut self, members: &[usize]) -> Option<Split> {
        let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
        let parent = self.score(g, h);
        for &i in members {
            self.in_node[i] = true;
        }
        let mcw = self.params.min_child_weight;
        let mut best: Option<Split> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<f64> = None;
            for &i in order.iter().filter(|&&i| self.in_node[i]) {
                let v = self.rows[i][f];
                if let Some(p) = prev {
                    if v > p && hl >= mcw && h - hl >= mcw {
                        let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                        if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                            let mut threshold = p + (v - p) / 2.0;
                            if threshold <= p {
                                threshold = v;
                            }
                            best = Some(Split { feature: f, threshold, gain });
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                prev = Some(v);
            }
        }
        for &i in members {
            self.in_node[i] = false;
        }
        best
    }

    /// Grow a subtree and record each member's leaf value in `out`.
    fn grow(&mut self, members: Vec<usize>, depth: usize, out: &mut [f64]) -> TreeNode {
        let split = if depth < self.params.max_depth && members.len() >= 2 { self.best_split(&members) } else { None };
        match split {
            Some(s) => {
                self.feature_gain[s.feature] += s.gain;
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.into_iter().partition(|&i| self.rows[i][s.feature] < s.threshold);
                let left = self.grow(l, depth + 1, out);
                let right = self.grow(r, depth + 1, out);
                TreeNode {
                    feature: Some(s.feature),
                    threshold: Some(s.threshold),
                    left: Some(Box::new(left)),
                    right: Some(Box::new(right)),
                    leaf_value: None,
                }
            }
            None => {
                let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
                let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
                let value = -g / (h + self.params.lambda) * self.params.learning_rate;
                for &i in &members {
                    out[i] = value;
                }
                TreeNode::leaf(value)
            }
        }
    }
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_loss(logits: &[Vec<f64>], targets: &[usize]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(z, &t)| {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[t]
        })
        .sum();
    total / logits.len() as f64
}

/// Softmax boosting with exact greedy second-order splits.
pub fn gbt_train<T: Real>(x: &FeatureMatrix<T>, params: &GbtParams) -> Result<GbtModel> {
    if params.n_rounds == 0 {
        return Err(ShallowError::InvalidParams("n_rounds must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0 && params.lambda >= 0.0 && params.min_child_weight >= 0.0) {
        return Err(ShallowError::InvalidParams(format!("{params:?}")));
    }
    let (rows, classes) = training_view(x)?;
    let (n, p, k) = (rows.len(), x.n_cols(), classes.len());
    let targets: Vec<usize> = x.labels().iter().map(|l| classes.binary_search(l).unwrap()).collect();
    let sorted: Vec<Vec<usize>> = (0..p)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut logits = vec![vec![0.0; k]; n];
    let mut feature_gain = vec![0.0; p];
    let mut train_loss = vec![log_loss(&logits, &targets)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut delta = vec![vec![0.0; n]; k];
    for _ in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = logits.iter().map(|z| softmax_row(z)).collect();
        let mut round = Vec::with_capacity(k);
        for (c, out) in delta.iter_mut().enumerate() {
            for i in 0..n {
                let pi = probs[i][c];
                grad[i] = pi - if targets[i] == c { 1.0 } else { 0.0 };
                hess[i] = (2.0 * pi * (1.0 - pi)).max(1e-16);
            }
            let mut grower = Grower {
                rows: &rows,
                sorted: &sorted,
                grad: &grad,
                hess: &hess,
                params,
                feature_gain: &mut feature_gain,
                in_node: vec![false; n],
            };
            round.push(grower.grow((0..n).collect(), 0, out));
        }
        for (i, z) in logits.iter_mut().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += delta[c][i];
            }
        }
        train_loss.push(log_loss(&logits, &targets));
        trees.push(round);
    }
    Ok(GbtModel { params: params.clone(), classes, n_features: p, trees, feature_gain, train_loss })
}

impl GbtModel {
    /// A model with no trees: uniform class probabilities.
    pub fn prior(classes: Vec<usize>, n_features: usize) -> Self {
        Self {
            params: GbtParams { n_rounds: 0, ..GbtParams::default() },
            classes,
            n_features,
            trees: Vec::new(),
            feature_gain: vec![0.0; n_features],
            train_loss: Vec::new(),
        }
    }

    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.classes.len()];
        for round in &self.trees {
            for (zc, tree) in z.iter_mut().zip(round) {
                *zc += tree.eval(row);
            }
        }
        z
    }

    pub fn predict<T: Real>(&self, x: &FeatureMatrix<T>) -> Result<GbtPrediction> {
        if x.n_cols() != self.n_features {
            return Err(ShallowError::DimensionMismatch { expected: self.n_features, actual: x.n_cols() });
        }
        let probabilities: Vec<Vec<f64>> = rows_f64(x)?.iter().map(|r| softmax_row(&self.logits(r))).collect();
        let labels = probabilities
            .iter()
            .map(|p| {
                let best = (0..p.len()).fold(0, |b, c| if p[c] > p[b] { c } else { b });
                self.classes[best]
            })
            .collect();
        Ok(GbtPrediction { labels, probabilities })
    }
}

/// Normalized per-feature gain with the cumulative-threshold selection.
pub fn gbt_importances(model: &GbtModel, threshold: f64) -> Result<ImportanceReport> {
    if model.trees.is_empty() {
        return Err(ShallowError::UntrainedModel);
    }
    Ok(ImportanceReport::new(&model.feature_gain, threshold)?)
}
