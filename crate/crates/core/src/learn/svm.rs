//! Soft-margin SVM with a Gaussian kernel, trained by sequential minimal
//! optimization with second-order working-set selection.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{canonical, evaluate_rows, gather, mean, EvalReport, Folds, Hyperparameters, Standardizer};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::features::FeatureKind;

/// Stopping tolerance on the maximal KKT violation.
const SMO_EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for SvmGrid {
    /// `C ∈ {2^-3..2^7}`, `γ ∈ {2^-7..2^3}`.
    fn default() -> Self {
        Self { c: (-3..=7).map(|e| 2f64.powi(e)).collect(), gamma: (-7..=3).map(|e| 2f64.powi(e)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub feature_kind: FeatureKind,
    pub standardizer: Standardizer,
    /// Standardized support vectors.
    pub support: Vec<Vec<f64>>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let x = self.standardizer.apply(row);
        self.decision_standardized(&x)
    }

    fn decision_standardized(&self, x: &[f64]) -> f64 {
        let s: f64 = self.support.iter().zip(&self.coef).map(|(sv, a)| a * (-self.gamma * sq_dist(sv, x)).exp()).sum();
        s + self.bias
    }

    pub fn predict_row(&self, row: &[f64]) -> i8 {
        if self.decision(row) > 0.0 {
            1
        } else {
            -1
        }
    }

    /// `|Σ α_i y_i|`, zero at a KKT point.
    pub fn equality_residual(&self) -> f64 {
        self.coef.iter().sum::<f64>().abs()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major squared distances between `a` rows and `b` rows.
fn distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let mut d = Vec::with_capacity(a.len() * b.len());
    for x in a {
        d.extend(b.iter().map(|y| sq_dist(x, y)));
    }
    d
}

struct Smo {
    alpha: Vec<f64>,
    rho: f64,
}

/// Dual problem `min ½ αᵀQα − Σα` with `Q_ij = y_i y_j K_ij`,
/// `0 ≤ α ≤ C`, `yᵀα = 0`; `k` is the row-major kernel matrix.
fn smo(k: &[f64], y: &[f64], c: f64) -> Smo {
    let n = y.len();
    let kk = |i: usize, j: usize| k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let max_iter = 10_000_000usize.max(100 * n);
    let up = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };

    for _ in 0..max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * g[t] >= gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = y[t] * g[t];
            gmax2 = gmax2.max(v);
            let b = gmax + v;
            if i != usize::MAX && b > 0.0 {
                let a = (kk(i, i) + kk(t, t) - 2.0 * kk(i, t)).max(TAU);
                let obj = -b * b / a;
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < SMO_EPS || j == usize::MAX {
            break;
        }

        let (ai, aj) = (alpha[i], alpha[j]);
        let quad = (kk(i, i) + kk(j, j) - 2.0 * kk(i, j)).max(TAU);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            g[t] += y[t] * (y[i] * kk(t, i) * di + y[j] * kk(t, j) * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    Smo { alpha, rho }
}

fn fit(rows: &[Vec<f64>], labels: &[i8], kind: FeatureKind, c: f64, gamma: f64) -> SvmModel {
    let standardizer = Standardizer::fit(rows);
    let x: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let k: Vec<f64> = distances(&x, &x).into_iter().map(|d| (-gamma * d).exp()).collect();
    let sol = smo(&k, &y, c);
    let keep: Vec<usize> = (0..x.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    SvmModel {
        feature_kind: kind,
        standardizer,
        support: gather(&x, &keep),
        coef: keep.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        bias: -sol.rho,
        gamma,
        c,
    }
}

/// Validation accuracy of every `C` at one `(fold, γ)` pair.
fn fold_scores(rows: &[Vec<f64>], labels: &[i8], folds: &Folds, f: usize, gamma: f64, cs: &[f64]) -> Vec<f64> {
    let (tr, va) = folds.split(f);
    let std = Standardizer::fit(&gather(rows, &tr));
    let xt: Vec<Vec<f64>> = tr.iter().map(|&i| std.apply(&rows[i])).collect();
    let xv: Vec<Vec<f64>> = va.iter().map(|&i| std.apply(&rows[i])).collect();
    let yt: Vec<f64> = tr.iter().map(|&i| labels[i] as f64).collect();
    let k: Vec<f64> = distances(&xt, &xt).into_iter().map(|d| (-gamma * d).exp()).collect();
    let kv: Vec<f64> = distances(&xv, &xt).into_iter().map(|d| (-gamma * d).exp()).collect();
    let nt = xt.len();
    cs.iter()
        .map(|&c| {
            let sol = smo(&k, &yt, c);
            let correct = va
                .iter()
                .enumerate()
                .filter(|&(v, &i)| {
                    let row = &kv[v * nt..(v + 1) * nt];
                    let s: f64 = (0..nt).map(|t| sol.alpha[t] * yt[t] * row[t]).sum::<f64>() - sol.rho;
                    (if s > 0.0 { 1 } else { -1 }) == labels[i]
                })
                .count();
            correct as f64 / va.len() as f64
        })
        .collect()
}

/// Grid search over `(C, γ)` by mean `folds`-fold accuracy, then a final fit
/// on all rows. Ties go to the first grid point (C outer, γ inner).
pub fn train_svm<E: ParMap>(train: &LabeledDataset, grid: &SvmGrid, folds: usize, seed: u64, exec: &E) -> Result<(SvmModel, EvalReport)> {
    if grid.c.is_empty() || grid.gamma.is_empty() || grid.c.iter().chain(&grid.gamma).any(|v| !(*v > 0.0)) {
        return Err(Error::ParamOutOfRange("SVM grid values must be positive".into()));
    }
    let (rows, labels) = canonical(train)?;
    let fold_set = Folds::new(&labels, folds, seed)?;
    let ng = grid.gamma.len();
    // unit u = (fold, gamma index); each returns accuracies for all C
    let scores = exec.map(folds * ng, |u| fold_scores(&rows, &labels, &fold_set, u / ng, grid.gamma[u % ng], &grid.c));

    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (ci, _) in grid.c.iter().enumerate() {
        for gi in 0..ng {
            let m = mean(&(0..folds).map(|f| scores[f * ng + gi][ci]).collect::<Vec<_>>());
            if m > best.0 {
                best = (m, ci, gi);
            }
        }
    }
    let (cv, ci, gi) = best;
    let (c, gamma) = (grid.c[ci], grid.gamma[gi]);
    let fold_accuracies: Vec<f64> = (0..folds).map(|f| scores[f * ng + gi][ci]).collect();
    let kind = train.meta.feature_kind;
    let model = fit(&rows, &labels, kind, c, gamma);
    let report = EvalReport {
        feature_kind: kind,
        hyperparameters: Hyperparameters::Svm { c, gamma, grid_c: grid.c.clone(), grid_gamma: grid.gamma.clone() },
        folds,
        seed,
        cv_accuracy: cv,
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
    fn smo_two_points() {
        // orthogonal feature images: the dual optimum is α = (1, 1), ρ = 0
        let k = [1.0, 0.0, 0.0, 1.0];
        let sol = smo(&k, &[1.0, -1.0], 10.0);
        assert!((sol.alpha[0] - 1.0).abs() < 1e-9 && (sol.alpha[1] - 1.0).abs() < 1e-9);
        assert!(sol.rho.abs() < 1e-9);
    }

    #[test]
    fn box_constraint_holds() {
        let k = [1.0, 0.0, 0.0, 1.0];
        let sol = smo(&k, &[1.0, -1.0], 0.25);
        assert_eq!(sol.alpha, [0.25, 0.25]);
    }
}
