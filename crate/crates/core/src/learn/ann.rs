//! Fully connected network `k → h1 → h2 → 1` with ReLU hidden layers and a
//! sigmoid output, trained by full-batch gradient descent on the mean binary
//! cross-entropy. Labels map to targets `-1 → 0`, `+1 → 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{canonical, evaluate_rows, gather, mean, EvalReport, Folds, Hyperparameters, Standardizer};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::features::FeatureKind;
use crate::rng::{domain, Rng};

/// Dense layer, `w` row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn init(rng: &mut Rng, inputs: usize, outputs: usize, gain: f64) -> Self {
        let scale = (gain / inputs as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect();
        Self { inputs, outputs, w, b: vec![0.0; outputs] }
    }

    fn zeros_like(&self) -> Self {
        Self { inputs: self.inputs, outputs: self.outputs, w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()] }
    }

    /// `x · wᵀ + b` for `n` row-major input rows.
    fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut z: Vec<f64> = (0..n).flat_map(|_| self.b.iter().copied()).collect();
        // SAFETY: slices hold n·inputs, outputs·inputs and n·outputs values.
        unsafe {
            matrixmultiply::dgemm(
                n,
                self.inputs,
                self.outputs,
                1.0,
                x.as_ptr(),
                self.inputs as isize,
                1,
                self.w.as_ptr(),
                1,
                self.inputs as isize,
                1.0,
                z.as_mut_ptr(),
                self.outputs as isize,
                1,
            );
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub feature_kind: FeatureKind,
    pub standardizer: Standardizer,
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnConfig {
    /// Defaults to (64, 32) for F1 and (32, 16) for F2.
    pub hidden: Option<[usize; 2]>,
    pub epochs: usize,
    pub lr: f64,
    /// Times training restarts with the learning rate divided by ten after
    /// the loss turns non-finite.
    pub lr_retries: usize,
}

impl Default for AnnConfig {
    fn default() -> Self {
        Self { hidden: None, epochs: 1000, lr: 0.1, lr_retries: 3 }
    }
}

impl AnnConfig {
    pub fn hidden_for(&self, kind: FeatureKind) -> [usize; 2] {
        self.hidden.unwrap_or(match kind {
            FeatureKind::F1 => [64, 32],
            FeatureKind::F2 => [32, 16],
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softplus(z) − t·z`, the cross-entropy of a logit against target `t`.
fn bce(z: f64, t: f64) -> f64 {
    z.max(0.0) - t * z + (-z.abs()).exp().ln_1p()
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

impl AnnModel {
    pub fn new(kind: FeatureKind, standardizer: Standardizer, sizes: &[usize], rng: &mut Rng) -> Self {
        let last = sizes.len() - 2;
        let layers = sizes.windows(2).enumerate().map(|(i, w)| Layer::init(rng, w[0], w[1], if i == last { 1.0 } else { 2.0 })).collect();
        Self { feature_kind: kind, standardizer, layers }
    }

    fn flatten(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().flat_map(|r| self.standardizer.apply(r)).collect()
    }

    /// Pre-activations of every layer for raw input rows.
    fn forward(&self, rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = rows.len();
        let mut acts = vec![self.flatten(rows)];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(acts.last().unwrap(), n);
            if i + 1 < self.layers.len() {
                let mut a = z.clone();
                relu(&mut a);
                acts.push(a);
            }
            pre.push(z);
        }
        (acts, pre)
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let (_, pre) = self.forward(core::slice::from_ref(&row.to_vec()));
        sigmoid(pre.last().unwrap()[0])
    }

    pub fn predict_row(&self, row: &[f64]) -> i8 {
        if self.probability(row) > 0.5 {
            1
        } else {
            -1
        }
    }

    /// Mean cross-entropy on labeled rows.
    pub fn loss(&self, rows: &[Vec<f64>], labels: &[i8]) -> f64 {
        let (_, pre) = self.forward(rows);
        let out = pre.last().unwrap();
        mean(&out.iter().zip(labels).map(|(&z, &y)| bce(z, (y == 1) as u8 as f64)).collect::<Vec<_>>())
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn gradient(&self, rows: &[Vec<f64>], labels: &[i8]) -> (f64, Vec<Layer>) {
        let n = rows.len();
        let (acts, pre) = self.forward(rows);
        let out = pre.last().unwrap();
        let mut loss = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(labels)
            .map(|(&z, &y)| {
                let t = (y == 1) as u8 as f64;
                loss += bce(z, t);
                (sigmoid(z) - t) / n as f64
            })
            .collect();
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (fan_in, fan_out) = (layer.inputs, layer.outputs);
            let a = &acts[l];
            let g = &mut grads[l];
            // dW = δᵀ · a  (fan_out × fan_in), db = Σ_rows δ
            // SAFETY: δ is n × fan_out, a is n × fan_in, g.w is fan_out × fan_in.
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    n,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    a.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    g.w.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for r in 0..n {
                for (gb, d) in g.b.iter_mut().zip(&delta[r * fan_out..(r + 1) * fan_out]) {
                    *gb += d;
                }
            }
            if l == 0 {
                break;
            }
            // δ_prev = (δ · W) ⊙ 1[z_prev > 0]
            let mut prev = vec![0.0; n * fan_in];
            // SAFETY: δ is n × fan_out, W is fan_out × fan_in, prev is n × fan_in.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    layer.w.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (p, z) in prev.iter_mut().zip(&pre[l - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        (loss / n as f64, grads)
    }

    fn step(&mut self, grads: &[Layer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.w.iter_mut().zip(&g.w).for_each(|(w, d)| *w -= lr * d);
            layer.b.iter_mut().zip(&g.b).for_each(|(b, d)| *b -= lr * d);
        }
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

fn fit_once(rows: &[Vec<f64>], labels: &[i8], kind: FeatureKind, cfg: &AnnConfig, lr: f64, rng: &mut Rng) -> Result<AnnModel> {
    let hidden = cfg.hidden_for(kind);
    let standardizer = Standardizer::fit(rows);
    let k = rows[0].len();
    let mut model = AnnModel::new(kind, standardizer, &[k, hidden[0], hidden[1], 1], rng);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = model.gradient(rows, labels);
        if !loss.is_finite() {
            return Err(Error::DivergedLoss { epoch, lr });
        }
        model.step(&grads, lr);
        if !model.parameters_finite() {
            return Err(Error::DivergedLoss { epoch, lr });
        }
    }
    Ok(model)
}

/// Trains from stream `index` of the model domain, dividing the learning
/// rate by ten after each divergence. Returns the model, the learning rate
/// that succeeded and the divergence events.
fn fit(
    rows: &[Vec<f64>],
    labels: &[i8],
    kind: FeatureKind,
    cfg: &AnnConfig,
    seed: u64,
    index: u64,
) -> Result<(AnnModel, f64, Vec<alloc::string::String>)> {
    let mut lr = cfg.lr;
    let mut events = Vec::new();
    for attempt in 0..=cfg.lr_retries {
        let mut rng = Rng::stream(seed, domain::MODEL, index);
        match fit_once(rows, labels, kind, cfg, lr, &mut rng) {
            Ok(m) => return Ok((m, lr, events)),
            Err(Error::DivergedLoss { epoch, lr: bad }) if attempt < cfg.lr_retries => {
                events.push(format!("loss diverged at epoch {epoch} with lr {bad}; retrying with lr {}", bad / 10.0));
                lr = bad / 10.0;
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("the last attempt returns")
}

pub fn train_ann<E: ParMap>(train: &LabeledDataset, cfg: &AnnConfig, folds: usize, seed: u64, exec: &E) -> Result<(AnnModel, EvalReport)> {
    if cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::ParamOutOfRange("epochs and learning rate must be positive".into()));
    }
    let (rows, labels) = canonical(train)?;
    let kind = train.meta.feature_kind;
    let fold_set = Folds::new(&labels, folds, seed)?;
    let results = exec.map(folds, |f| -> Result<(f64, Vec<alloc::string::String>)> {
        let (tr, va) = fold_set.split(f);
        let (model, _, events) = fit(&gather(&rows, &tr), &gather(&labels, &tr), kind, cfg, seed, f as u64)?;
        let acc = evaluate_rows("fold", &gather(&rows, &va), &gather(&labels, &va), |r| model.predict_row(r)).accuracy;
        Ok((acc, events.into_iter().map(|e| format!("fold {f}: {e}")).collect()))
    });
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut events = Vec::new();
    for r in results {
        let (acc, ev) = r?;
        fold_accuracies.push(acc);
        events.extend(ev);
    }
    let (model, lr, ev) = fit(&rows, &labels, kind, cfg, seed, folds as u64)?;
    events.extend(ev.into_iter().map(|e| format!("final: {e}")));
    let report = EvalReport {
        feature_kind: kind,
        hyperparameters: Hyperparameters::Ann { hidden: cfg.hidden_for(kind), epochs: cfg.epochs, lr },
        folds,
        seed,
        cv_accuracy: mean(&fold_accuracies),
        fold_accuracies,
        train: evaluate_rows("train", &rows, &labels, |r| model.predict_row(r)),
        test: None,
        generalization: Vec::new(),
        events,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_cross_entropy() {
        assert!((bce(0.0, 1.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(800.0, 1.0).abs() < 1e-12);
        assert!((bce(-800.0, 1.0) - 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn forward_shapes_chain() {
        let mut rng = Rng::new(1);
        let std = Standardizer { mean: vec![0.0; 4], std: vec![1.0; 4] };
        let m = AnnModel::new(FeatureKind::F2, std, &[4, 5, 3, 1], &mut rng);
        let (acts, pre) = m.forward(&[vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]]);
        assert_eq!(acts.len(), 3);
        assert_eq!([pre[0].len(), pre[1].len(), pre[2].len()], [10, 6, 2]);
    }
}
