use steerkit_core::datasets::{LabeledDataset, SetMeta};
use steerkit_core::exec::Sequential;
use steerkit_core::features::{FeatureKind, FeatureVector};
use steerkit_core::learn::*;
use steerkit_core::rng::Rng;
use steerkit_core::Error;

/// Pads 2-d toy rows to the F2 width.
fn toy(points: &[(f64, f64, i8)]) -> LabeledDataset {
    let rows = points
        .iter()
        .map(|&(x, y, _)| {
            let mut r = vec![0.0; 16];
            r[0] = x;
            r[1] = y;
            r
        })
        .collect();
    let labels = points.iter().map(|p| p.2).collect();
    LabeledDataset::new(FeatureKind::F2, rows, labels, SetMeta::new("toy", "toy", 0)).unwrap()
}

fn clusters(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = Rng::new(seed);
    let pts: Vec<_> = (0..n)
        .map(|i| {
            let l = if i % 2 == 0 { 1 } else { -1 };
            let c = 3.0 * l as f64;
            (c + rng.uniform(-1.0, 1.0), c + rng.uniform(-1.0, 1.0), l)
        })
        .collect();
    toy(&pts)
}

fn xor(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = Rng::new(seed);
    let pts: Vec<_> = (0..n)
        .map(|_| {
            let (x, y) = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            (x, y, if x * y > 0.0 { 1 } else { -1 })
        })
        .collect();
    toy(&pts)
}

fn small_grid() -> SvmGrid {
    SvmGrid { c: vec![1.0, 10.0, 100.0], gamma: vec![0.1, 1.0, 10.0] }
}

#[test]
fn svm_separates_clusters() {
    let ds = clusters(60, 1);
    let (_, report) = train_svm(&ds, &small_grid(), 5, 1, &Sequential).unwrap();
    assert_eq!(report.cv_accuracy, 1.0);
}

#[test]
fn svm_gaussian_kernel_learns_xor() {
    let (train, test) = holdout_split(&xor(600, 2), 2).unwrap();
    let (model, _) = train_svm(&train, &small_grid(), 5, 2, &Sequential).unwrap();
    let acc = evaluate(&Model::Svm(model), &test, "test").unwrap().accuracy;
    assert!(acc > 0.95, "{acc}");
}

#[test]
fn svm_satisfies_kkt_constraints() {
    let ds = xor(200, 3);
    let (model, _) = train_svm(&ds, &SvmGrid { c: vec![0.5, 4.0], gamma: vec![1.0] }, 5, 3, &Sequential).unwrap();
    assert!(model.equality_residual() < 1e-6);
    assert!(model.coef.iter().all(|a| a.abs() > 0.0 && a.abs() <= model.c + 1e-12));
}

#[test]
fn single_class_is_degenerate() {
    let ds = toy(&[(0.0, 0.0, 1), (1.0, 0.0, 1), (2.0, 0.0, 1)]);
    assert!(matches!(train_svm(&ds, &small_grid(), 5, 0, &Sequential), Err(Error::DegenerateData(_))));
}

#[test]
fn ann_learns_and_gate() {
    let mut pts = Vec::new();
    for _ in 0..5 {
        pts.extend([(0.0, 0.0, -1), (0.0, 1.0, -1), (1.0, 0.0, -1), (1.0, 1.0, 1)]);
    }
    // balance the classes so every fold sees both
    for _ in 0..10 {
        pts.push((1.0, 1.0, 1));
    }
    let ds = toy(&pts);
    let (model, report) = train_ann(&ds, &AnnConfig::default(), 5, 4, &Sequential).unwrap();
    assert_eq!(report.train.accuracy, 1.0);
    assert_eq!(evaluate(&Model::Ann(model), &ds, "all").unwrap().accuracy, 1.0);
}

/// Relative error `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-12)` of analytic against
/// central-difference gradients, per layer.
fn gradient_errors(model: &AnnModel, rows: &[Vec<f64>], labels: &[i8]) -> Vec<f64> {
    let h = 1e-6;
    let (_, grads) = model.gradient(rows, labels);
    let mut out = Vec::new();
    for (l, g) in grads.iter().enumerate() {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for is_bias in [false, true] {
            let len = if is_bias { g.b.len() } else { g.w.len() };
            for i in 0..len {
                let shifted = |delta: f64| {
                    let mut m = model.clone();
                    let layer = &mut m.layers[l];
                    if is_bias {
                        layer.b[i] += delta
                    } else {
                        layer.w[i] += delta
                    }
                    m.loss(rows, labels)
                };
                let (up, down) = (shifted(h), shifted(-h));
                let numeric = (up - down) / (2.0 * h);
                let analytic = if is_bias { g.b[i] } else { g.w[i] };
                diff += (numeric - analytic).powi(2);
                norm += numeric.abs().max(analytic.abs()).powi(2);
            }
        }
        out.push(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    out
}

#[test]
fn ann_gradient_matches_finite_differences() {
    for cfg in 0..5u64 {
        let mut rng = Rng::new(100 + cfg);
        let k = 3 + rng.below(5);
        let sizes = [k, 2 + rng.below(6), 2 + rng.below(5), 1];
        let std = Standardizer { mean: vec![0.0; k], std: vec![1.0; k] };
        let mut model = AnnModel::new(FeatureKind::F2, std, &sizes, &mut rng);
        // nonzero biases keep hidden pre-activations off the ReLU kink
        for layer in &mut model.layers {
            layer.b.iter_mut().for_each(|b| *b = rng.uniform(-0.5, 0.5));
        }
        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
        let labels: Vec<i8> = (0..10).map(|_| if rng.below(2) == 0 { 1 } else { -1 }).collect();
        for (l, e) in gradient_errors(&model, &rows, &labels).into_iter().enumerate() {
            assert!(e < 1e-5, "config {cfg} layer {l}: {e}");
        }
    }
}

#[test]
fn boost_single_stump_separates_threshold_data() {
    let pts: Vec<_> = (0..20).map(|i| (i as f64, 0.0, if i < 10 { -1 } else { 1 })).collect();
    let ds = toy(&pts);
    let (model, report) = train_boost(&ds, &BoostConfig { stages: 1, max_depth: 1 }, 5, 5, &Sequential).unwrap();
    assert_eq!(report.train.accuracy, 1.0);
    assert_eq!(model.stages(), 1);
}

#[test]
fn boost_exponential_loss_never_increases() {
    for seed in 0..3 {
        let ds = xor(200, 50 + seed);
        let model = fit_boost(&ds.features, &ds.labels, FeatureKind::F2, &BoostConfig { stages: 60, max_depth: 2 }).unwrap();
        assert!(model.stage_errors.iter().all(|&e| e < 0.5));
        let mut scores = vec![0.0; ds.len()];
        let mut prev = 1.0;
        for (t, a) in model.trees.iter().zip(&model.alphas) {
            for (s, r) in scores.iter_mut().zip(&ds.features) {
                *s += a * t.predict(r) as f64;
            }
            let loss = scores.iter().zip(&ds.labels).map(|(s, &y)| (-s * y as f64).exp()).sum::<f64>() / ds.len() as f64;
            assert!(loss <= prev * (1.0 + 1e-12), "{loss} > {prev}");
            prev = loss;
        }
        let errs = model.staged_errors(&ds.features, &ds.labels);
        assert!(errs.iter().all(|&e| e <= errs[0]));
    }
}

#[test]
fn constant_model_scores_half_on_balanced_data() {
    let ds = clusters(40, 6);
    let model = Model::Boost(BoostModel {
        feature_kind: FeatureKind::F2,
        trees: vec![Tree { nodes: vec![Node::Leaf { label: 1 }] }],
        alphas: vec![1.0],
        stage_errors: vec![0.5],
    });
    let ev = evaluate(&model, &ds, "all").unwrap();
    assert_eq!(ev.accuracy, 0.5);
    assert_eq!(ev.confusion.total(), 40);
}

#[test]
fn training_ignores_row_order() {
    let ds = xor(120, 7);
    let mut rev = ds.clone();
    rev.features.reverse();
    rev.labels.reverse();
    let grid = SvmGrid { c: vec![1.0, 10.0], gamma: vec![1.0] };
    let (a, _) = train_svm(&ds, &grid, 5, 9, &Sequential).unwrap();
    let (b, _) = train_svm(&rev, &grid, 5, 9, &Sequential).unwrap();
    assert_eq!(a, b);
    let cfg = AnnConfig { epochs: 50, ..AnnConfig::default() };
    let (a, _) = train_ann(&ds, &cfg, 5, 9, &Sequential).unwrap();
    let (b, _) = train_ann(&rev, &cfg, 5, 9, &Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn prediction_checks_feature_kind() {
    let ds = clusters(20, 8);
    let (model, _) = train_boost(&ds, &BoostConfig { stages: 3, max_depth: 1 }, 5, 1, &Sequential).unwrap();
    let fv = FeatureVector::new(FeatureKind::F1, vec![0.0; 80]).unwrap();
    assert!(matches!(Model::Boost(model).predict(&fv), Err(Error::FeatureKindMismatch { .. })));
}
