use std::fs;

use steerkit::error::AppError;
use steerkit::io::*;
use steerkit_core::bounds::{plot_rows, BoundCurve, BoundSurface, Method};
use steerkit_core::datasets::{gen_isotropic_states, Family, SetMeta, StateRecord, StateSet};
use steerkit_core::exec::Sequential;
use steerkit_core::families::{random_density, Rng};
use steerkit_core::features::FeatureKind;
use steerkit_core::learn::{train_boost, BoostConfig, Model};

fn iso_set() -> StateSet {
    gen_isotropic_states(4, 3, &Sequential).unwrap()
}

#[test]
fn dataset_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = iso_set().dataset(FeatureKind::F2).unwrap();
    let sha = save_dataset(&ds, &path).unwrap();
    assert_eq!(sha, file_checksum(&path).unwrap());
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, ds);
    let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,f14,f15,label");
}

#[test]
fn dataset_tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let ds = iso_set().dataset(FeatureKind::F1).unwrap();
    save_dataset(&ds, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    // a changed value still parses but no longer matches the checksum
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[0] = "1.0000000000000000e0".into();
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(load_dataset(&path), Err(AppError::ChecksumMismatch { .. })));

    // a dropped row breaks the class counts
    let truncated: Vec<&str> = text.lines().take(text.lines().count() - 1).collect();
    fs::write(&path, truncated.join("\n") + "\n").unwrap();
    assert!(matches!(load_dataset(&path), Err(AppError::SchemaMismatch { .. })));

    // a dropped column breaks the header
    let narrow: Vec<String> = text.lines().map(|l| l.split_once(',').unwrap().1.to_string()).collect();
    fs::write(&path, narrow.join("\n") + "\n").unwrap();
    assert!(matches!(load_dataset(&path), Err(AppError::SchemaMismatch { .. })));
}

#[test]
fn missing_files_are_reported_as_missing() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(&dir.path().join("none.csv")).unwrap_err();
    assert!(matches!(err, AppError::InputMissing(_)));
    assert_eq!(err.exit_code(), 4);

    // a CSV without its sidecar
    let path = dir.path().join("bare.csv");
    fs::write(&path, "f0,label\n").unwrap();
    assert!(matches!(load_dataset(&path), Err(AppError::InputMissing(p)) if p.ends_with("bare.meta.json")));
}

#[test]
fn state_cache_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let mut set = iso_set();
    let mut rng = Rng::new(9);
    set.records.push(StateRecord { family: Family::Random, params: [9.0, 3.0, 1.0], index: 99, label: 1, state: random_density(&mut rng) });
    save_states(&set, None, &path).unwrap();
    let (back, werner) = load_states(&path).unwrap();
    assert_eq!(back, set);
    assert!(werner.is_none());

    // without a sidecar the rows still load
    fs::remove_file(sidecar_path(&path)).unwrap();
    let (bare, _) = load_states(&path).unwrap();
    assert_eq!(bare.records, set.records);
    assert_eq!(bare.meta, SetMeta::new("file", "unknown", 0));
}

#[test]
fn state_cache_rejects_invalid_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    save_states(&iso_set(), None, &path).unwrap();
    fs::remove_file(sidecar_path(&path)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    // re_0_0: breaks the unit trace
    cells[6] = "5.0".into();
    lines[1] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(load_states(&path), Err(AppError::SchemaMismatch { .. })));
}

#[test]
fn model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let ds = iso_set().dataset(FeatureKind::F2).unwrap();
    let (boost, _) = train_boost(&ds, &BoostConfig { stages: 5, max_depth: 2 }, 2, 1, &Sequential).unwrap();
    let model = Model::Boost(boost);
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
    fs::write(&path, "{\"schema_version\": 1}").unwrap();
    assert!(matches!(load_model(&path), Err(AppError::SchemaMismatch { .. })));
}

#[test]
fn plot_data_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let curve =
        BoundCurve { method: Method::Sdp, grid: vec![3, 4], bounds: vec![0.43, 1.0], found: vec![true, false], step: 0.01, window: 3 };
    let surface = BoundSurface {
        method: Method::Sw,
        theta: vec![0.0, 0.5],
        phi: vec![0.1],
        bounds: vec![0.48, 0.7],
        found: vec![true, true],
        p_step: 0.01,
    };
    let rows = plot_rows(&[BoundCurve::theory(&[3, 4]), curve], &[surface]);
    save_plot(&rows, &path).unwrap();
    assert_eq!(load_plot(&path).unwrap(), rows);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,m,theta,phi,bound"));
    assert!(lines.next().unwrap().starts_with("THEORY,,,,4.1666666666666"));
}
