//! Adaptive boosting over depth-limited decision trees. Trees split on raw
//! feature values by weighted Gini impurity; leaves vote the weighted
//! majority label.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{canonical, evaluate_rows, gather, mean, EvalReport, Folds, Hyperparameters};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::features::FeatureKind;

/// Floor on the weighted error when a stage classifies every row correctly.
const MIN_ERROR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        label: i8,
    },
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> i8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { label } => return label,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Weighted-Gini tree on `rows` restricted to `max_depth` levels.
    pub fn fit(rows: &[Vec<f64>], labels: &[i8], weights: &[f64], max_depth: usize) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        let all: Vec<usize> = (0..rows.len()).collect();
        tree.grow(rows, labels, weights, all, max_depth);
        tree
    }

    fn grow(&mut self, rows: &[Vec<f64>], labels: &[i8], weights: &[f64], idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let (wp, wn) = class_weights(&idx, labels, weights);
        self.nodes.push(Node::Leaf { label: if wp >= wn { 1 } else { -1 } });
        if depth == 0 || wp <= 0.0 || wn <= 0.0 {
            return at;
        }
        let Some((feature, threshold)) = best_split(rows, labels, weights, &idx, wp, wn) else { return at };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][feature] <= threshold);
        let left = self.grow(rows, labels, weights, l, depth - 1);
        let right = self.grow(rows, labels, weights, r, depth - 1);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

fn class_weights(idx: &[usize], labels: &[i8], weights: &[f64]) -> (f64, f64) {
    idx.iter().fold((0.0, 0.0), |(p, n), &i| if labels[i] == 1 { (p + weights[i], n) } else { (p, n + weights[i]) })
}

/// Weighted Gini mass `w · (1 − p² − q²)` of a node with class masses `a`, `b`.
fn gini(a: f64, b: f64) -> f64 {
    let w = a + b;
    if w <= 0.0 {
        0.0
    } else {
        2.0 * a * b / w
    }
}

fn best_split(rows: &[Vec<f64>], labels: &[i8], weights: &[f64], idx: &[usize], wp: f64, wn: f64) -> Option<(usize, f64)> {
    let parent = gini(wp, wn);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..rows[idx[0]].len() {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let (mut lp, mut ln) = (0.0, 0.0);
        for pair in order.windows(2) {
            let (i, next) = (pair[0], pair[1]);
            if labels[i] == 1 {
                lp += weights[i]
            } else {
                ln += weights[i]
            }
            let (v, vn) = (rows[i][f], rows[next][f]);
            if v == vn {
                continue;
            }
            let impurity = gini(lp, ln) + gini(wp - lp, wn - ln);
            if best.is_none_or(|(b, _, _)| impurity < b) {
                best = Some((impurity, f, 0.5 * (v + vn)));
            }
        }
    }
    best.filter(|&(imp, _, _)| imp < parent).map(|(_, f, t)| (f, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub feature_kind: FeatureKind,
    pub trees: Vec<Tree>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each accepted stage.
    pub stage_errors: Vec<f64>,
}

impl BoostModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.trees.iter().zip(&self.alphas).map(|(t, a)| a * t.predict(row) as f64).sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> i8 {
        if self.score(row) > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn stages(&self) -> usize {
        self.trees.len()
    }

    /// Training error of the ensemble truncated after each stage.
    pub fn staged_errors(&self, rows: &[Vec<f64>], labels: &[i8]) -> Vec<f64> {
        let mut scores = vec![0.0; rows.len()];
        let mut out = Vec::with_capacity(self.trees.len());
        for (t, a) in self.trees.iter().zip(&self.alphas) {
            for (s, r) in scores.iter_mut().zip(rows) {
                *s += a * t.predict(r) as f64;
            }
            let wrong = scores.iter().zip(labels).filter(|&(&s, &y)| (if s > 0.0 { 1 } else { -1 }) != y).count();
            out.push(wrong as f64 / rows.len() as f64);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub stages: usize,
    pub max_depth: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { stages: 200, max_depth: 3 }
    }
}

/// Adaptive boosting: each stage fits a tree to the current weights, gets
/// weight `½ ln((1−ε)/ε)` from its weighted error `ε`, and reweights rows by
/// `exp(−α y h)`. Stops early when `ε ≥ 0.5` or the stage is perfect.
pub fn fit_boost(rows: &[Vec<f64>], labels: &[i8], kind: FeatureKind, cfg: &BoostConfig) -> Result<BoostModel> {
    let n = rows.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut model = BoostModel { feature_kind: kind, trees: Vec::new(), alphas: Vec::new(), stage_errors: Vec::new() };
    for stage in 0..cfg.stages {
        let tree = Tree::fit(rows, labels, &w, cfg.max_depth);
        let pred: Vec<i8> = rows.iter().map(|r| tree.predict(r)).collect();
        let eps: f64 = (0..n).filter(|&i| pred[i] != labels[i]).map(|i| w[i]).sum();
        if eps >= 0.5 {
            if stage == 0 {
                return Err(Error::AllStagesRejected(eps));
            }
            break;
        }
        let e = eps.max(MIN_ERROR);
        let alpha = 0.5 * ((1.0 - e) / e).ln();
        model.trees.push(tree);
        model.alphas.push(alpha);
        model.stage_errors.push(eps);
        if eps == 0.0 {
            break;
        }
        for i in 0..n {
            w[i] *= (-alpha * (labels[i] * pred[i]) as f64).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    Ok(model)
}

pub fn train_boost<E: ParMap>(
    train: &LabeledDataset,
    cfg: &BoostConfig,
    folds: usize,
    seed: u64,
    exec: &E,
) -> Result<(BoostModel, EvalReport)> {
    if cfg.stages == 0 || cfg.max_depth == 0 {
        return Err(Error::ParamOutOfRange("stages and depth must be positive".into()));
    }
    let (rows, labels) = canonical(train)?;
    let kind = train.meta.feature_kind;
    let fold_set = Folds::new(&labels, folds, seed)?;
    let fold_accuracies = exec
        .map(folds, |f| -> Result<f64> {
            let (tr, va) = fold_set.split(f);
            let m = fit_boost(&gather(&rows, &tr), &gather(&labels, &tr), kind, cfg)?;
            Ok(evaluate_rows("fold", &gather(&rows, &va), &gather(&labels, &va), |r| m.predict_row(r)).accuracy)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let model = fit_boost(&rows, &labels, kind, cfg)?;
    let report = EvalReport {
        feature_kind: kind,
        hyperparameters: Hyperparameters::Boost { stages: cfg.stages, max_depth: cfg.max_depth, accepted_stages: model.stages() },
        folds,
        seed,
        cv_accuracy: mean(&fold_accuracies),
        fold_accuracies,
        train: evaluate_rows("train", &rows, &labels, |r| model.predict_row(r)),
        test: None,
        generalization: Vec::new(),
        events: Vec::new(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_splits_at_midpoint() {
        let rows: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        let labels = [-1, -1, 1, 1];
        let t = Tree::fit(&rows, &labels, &[0.25; 4], 1);
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 });
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let rows = vec![vec![0.0], vec![1.0]];
        let t = Tree::fit(&rows, &[1, 1], &[0.5, 0.5], 3);
        assert_eq!(t.nodes, [Node::Leaf { label: 1 }]);
    }

    #[test]
    fn constant_features_reject_first_stage() {
        let rows = vec![vec![1.0]; 4];
        let err = fit_boost(&rows, &[1, -1, 1, -1], FeatureKind::F2, &BoostConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AllStagesRejected(_)));
    }
}
