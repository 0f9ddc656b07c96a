//! Classifiers on feature datasets: Gaussian-kernel SVM, a two-hidden-layer
//! ReLU network and boosted decision trees, plus splits, cross-validation and
//! evaluation.
//!
//! Training canonicalizes row order first (by label, then features), so a
//! model depends only on the multiset of rows, the hyperparameters and the
//! seed.

mod ann;
mod boost;
mod svm;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use ann::{train_ann, AnnConfig, AnnModel, Layer};
pub use boost::{fit_boost, train_boost, BoostConfig, BoostModel, Node, Tree};
pub use svm::{train_svm, SvmGrid, SvmModel};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::rng::{domain, Rng};

pub const DEFAULT_FOLDS: usize = 5;
/// The holdout split keeps one of this many stratified parts for testing.
pub const HOLDOUT_PARTS: usize = 6;

/// Per-column affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics of the given rows; constant columns get `std = 1`.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let k = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = alloc::vec![0.0; k];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; k];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Confusion counts, rows = actual (-1, +1), columns = predicted (-1, +1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 2]; 2]);

impl Confusion {
    fn slot(label: i8) -> usize {
        (label == 1) as usize
    }

    pub fn record(&mut self, actual: i8, predicted: i8) {
        self.0[Self::slot(actual)][Self::slot(predicted)] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.0[0][0] + self.0[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub name: String,
    pub n: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparameters {
    Svm { c: f64, gamma: f64, grid_c: Vec<f64>, grid_gamma: Vec<f64> },
    Ann { hidden: [usize; 2], epochs: usize, lr: f64 },
    Boost { stages: usize, max_depth: usize, accepted_stages: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_kind: FeatureKind,
    pub hyperparameters: Hyperparameters,
    pub folds: usize,
    pub seed: u64,
    /// Mean accuracy over the cross-validation folds.
    pub cv_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub train: Evaluation,
    pub test: Option<Evaluation>,
    /// Accuracy on additional generalization sets.
    pub generalization: Vec<Evaluation>,
    /// Notable training events, such as learning-rate retries.
    pub events: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Svm(SvmModel),
    Ann(AnnModel),
    Boost(BoostModel),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::Svm(_) => "svm",
            Model::Ann(_) => "ann",
            Model::Boost(_) => "boost",
        }
    }

    pub fn feature_kind(&self) -> FeatureKind {
        match self {
            Model::Svm(m) => m.feature_kind,
            Model::Ann(m) => m.feature_kind,
            Model::Boost(m) => m.feature_kind,
        }
    }

    /// Label of one raw (unstandardized) feature row.
    pub fn predict_row(&self, row: &[f64]) -> i8 {
        match self {
            Model::Svm(m) => m.predict_row(row),
            Model::Ann(m) => m.predict_row(row),
            Model::Boost(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<i8> {
        self.check_kind(fv.kind)?;
        Ok(self.predict_row(&fv.values))
    }

    fn check_kind(&self, found: FeatureKind) -> Result<()> {
        let expected = self.feature_kind();
        if expected != found {
            return Err(Error::FeatureKindMismatch { expected: expected.name(), found: found.name() });
        }
        Ok(())
    }
}

/// Accuracy and confusion matrix of `model` on `ds`.
pub fn evaluate(model: &Model, ds: &LabeledDataset, name: &str) -> Result<Evaluation> {
    model.check_kind(ds.meta.feature_kind)?;
    Ok(evaluate_rows(name, &ds.features, &ds.labels, |r| model.predict_row(r)))
}

pub(crate) fn evaluate_rows(name: &str, rows: &[Vec<f64>], labels: &[i8], predict: impl Fn(&[f64]) -> i8) -> Evaluation {
    let mut confusion = Confusion::default();
    for (r, &y) in rows.iter().zip(labels) {
        confusion.record(y, predict(r));
    }
    Evaluation { name: name.into(), n: confusion.total(), accuracy: confusion.accuracy(), confusion }
}

fn cmp_rows(a: &(&Vec<f64>, i8), b: &(&Vec<f64>, i8)) -> Ordering {
    a.1.cmp(&b.1).then_with(|| a.0.iter().zip(b.0.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal))
}

/// Rows and labels of `ds` in canonical order.
pub(crate) fn canonical(ds: &LabeledDataset) -> Result<(Vec<Vec<f64>>, Vec<i8>)> {
    ds.validate()?;
    let (pos, neg) = ds.counts();
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateData(format!("{pos} positive and {neg} negative rows")));
    }
    let mut rows: Vec<(&Vec<f64>, i8)> = ds.features.iter().zip(ds.labels.iter().copied()).collect();
    rows.sort_by(cmp_rows);
    Ok(rows.into_iter().map(|(r, y)| (r.clone(), y)).unzip())
}

/// Stratified assignment of rows to `k` parts: each class is shuffled with
/// the seed and dealt round-robin.
pub fn stratified_parts(labels: &[i8], k: usize, seed: u64) -> Vec<usize> {
    let mut part = alloc::vec![0; labels.len()];
    let mut offset = 0;
    for (c, class) in [-1i8, 1].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = Rng::stream(seed, domain::SPLIT, c as u64);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.below(i + 1));
        }
        for (r, &i) in idx.iter().enumerate() {
            part[i] = (offset + r) % k;
        }
        offset += idx.len();
    }
    part
}

/// Stratified 5:1 train/test split (one of [`HOLDOUT_PARTS`] parts held out),
/// applied to the canonically ordered dataset.
pub fn holdout_split(ds: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (features, labels) = canonical(ds)?;
    let parts = stratified_parts(&labels, HOLDOUT_PARTS, seed ^ 0x686f_6c64);
    let sorted = LabeledDataset { meta: ds.meta.clone(), features, labels };
    let train: Vec<usize> = (0..parts.len()).filter(|&i| parts[i] != 0).collect();
    let test: Vec<usize> = (0..parts.len()).filter(|&i| parts[i] == 0).collect();
    Ok((sorted.subset(&train), sorted.subset(&test)))
}

/// Fold membership for cross-validation over canonically ordered labels.
pub(crate) struct Folds {
    part: Vec<usize>,
}

impl Folds {
    pub fn new(labels: &[i8], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::ParamOutOfRange("at least two folds are required".into()));
        }
        let (pos, neg) = (labels.iter().filter(|&&l| l == 1).count(), labels.iter().filter(|&&l| l == -1).count());
        if pos < k || neg < k {
            return Err(Error::DegenerateData(format!("{pos}/{neg} rows cannot fill {k} stratified folds")));
        }
        Ok(Self { part: stratified_parts(labels, k, seed) })
    }

    /// `(train, validation)` row indices of fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.part.len()).partition(|&i| self.part[i] != f)
    }
}

pub(crate) fn gather<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_centers_and_scales() {
        let rows = alloc::vec![alloc::vec![1.0, 5.0], alloc::vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.mean, [2.0, 5.0]);
        assert_eq!(s.std, [1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), [1.0, 0.0]);
    }

    #[test]
    fn stratified_parts_balance_classes() {
        let labels: Vec<i8> = (0..60).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let parts = stratified_parts(&labels, 5, 1);
        for p in 0..5 {
            let pos = (0..60).filter(|&i| parts[i] == p && labels[i] == 1).count();
            let neg = (0..60).filter(|&i| parts[i] == p && labels[i] == -1).count();
            assert_eq!((pos, neg), (4, 8));
        }
    }

    #[test]
    fn confusion_accuracy() {
        let mut c = Confusion::default();
        c.record(1, 1);
        c.record(-1, 1);
        assert_eq!(c.total(), 2);
        assert_eq!(c.accuracy(), 0.5);
    }
}
