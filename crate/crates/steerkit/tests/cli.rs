use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use steerkit::cli::{DetectFile, Manifest};
use steerkit::io;
use steerkit_core::datasets::{Family, SetMeta, StateRecord, StateSet};
use steerkit_core::families::isotropic;
use steerkit_core::measure::{build_assemblage, measurement_from_direction};
use steerkit_core::steersdp::{steering_weight, DEFAULT_TOL};

fn steerkit(dir: &Path, args: &[&str], workers: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steerkit"))
        .args(args)
        .current_dir(dir)
        .env("STEERKIT_WORKERS", workers.to_string())
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str], workers: usize) -> Output {
    let out = steerkit(dir, args, workers);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

const GEN: &[&str] =
    &["gen-data", "--m", "3", "--pos", "4", "--neg", "4", "--rank", "4", "--trials", "20", "--seed", "7", "--feature", "f2"];

/// Runs `args` (which must write `files`) in fresh directories: twice with
/// one worker and once with four. Returns the first directory.
fn assert_reproducible(setup: impl Fn(&Path), args: &[&str], files: &[&str]) -> tempfile::TempDir {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, w) in dirs.iter().zip([1, 1, 4]) {
        setup(d.path());
        ok(d.path(), args, w);
    }
    for f in files {
        let a = bytes(dirs[0].path(), f);
        assert!(!a.is_empty(), "{f} is empty");
        assert_eq!(a, bytes(dirs[1].path(), f), "{f} differs between runs");
        assert_eq!(a, bytes(dirs[2].path(), f), "{f} differs between worker counts");
    }
    dirs.into_iter().next().unwrap()
}

#[test]
fn gen_data_is_reproducible() {
    let dir = assert_reproducible(|_| {}, &[GEN, &["--states", "states.csv"]].concat(), &["data.csv", "data.meta.json", "states.csv"]);
    let manifest: Manifest = io::read_json(&dir.path().join("data.manifest.json")).unwrap();
    assert_eq!(manifest.command, "gen-data");
    assert_eq!(manifest.seeds, vec![7]);
    assert_eq!(manifest.config["trials"], 20);
    let out = manifest.outputs.iter().find(|o| o.path == Path::new("data.csv")).unwrap();
    assert_eq!(out.sha256, io::file_checksum(&dir.path().join("data.csv")).unwrap());
    let ds = io::load_dataset(&dir.path().join("data.csv")).unwrap();
    assert_eq!((ds.meta.positives, ds.meta.negatives), (4, 4));
    assert_eq!(ds.meta.set.trials, Some(20));
}

fn with_data(dir: &Path) {
    ok(dir, &["gen-data", "--source", "isotropic", "--per-class", "30", "--seed", "2", "--feature", "f2"], 1);
}

#[test]
fn train_is_reproducible() {
    for model in [
        &["--model", "boost", "--stages", "20"][..],
        &["--model", "ann", "--epochs", "50"],
        &["--model", "svm", "--c-grid", "1,10", "--gamma-grid", "0.1,1"],
    ] {
        let args = [&["train", "--data", "data.csv", "--seed", "4", "--holdout"][..], model].concat();
        let dir = assert_reproducible(with_data, &args, &["model.json", "model.report.json"]);
        let report: serde_json::Value = io::read_json(&dir.path().join("model.report.json")).unwrap();
        assert!(report["test"]["accuracy"].as_f64().unwrap() > 0.8, "{model:?}: {report}");
    }
}

#[test]
fn sweep_is_reproducible() {
    let args = ["sweep", "--methods", "sdp,theory", "--ms", "2,3", "--trials", "3", "--step", "0.05", "--seed", "5"];
    let dir = assert_reproducible(|_| {}, &args, &["bounds.csv", "bounds.summary.json"]);
    let rows = io::load_plot(&dir.path().join("bounds.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].m.is_none() && (rows[2].bound - 5.0 / 12.0).abs() < 1e-15);
    for r in &rows[..2] {
        assert!(r.bound >= 5.0 / 12.0 - 0.01 && r.bound <= 1.0, "{r:?}");
    }
}

#[test]
fn eval_reports_each_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    with_data(d);
    ok(d, &["gen-data", "--source", "isotropic", "--per-class", "10", "--seed", "3", "--feature", "f2", "--out", "other.csv"], 1);
    ok(d, &["train", "--data", "data.csv", "--model", "boost", "--stages", "10"], 1);
    ok(d, &["eval", "--model", "model.json", "--data", "data.csv,other.csv"], 1);
    let report: serde_json::Value = io::read_json(&d.join("eval.json")).unwrap();
    let evs = report["evaluations"].as_array().unwrap();
    assert_eq!(evs.len(), 2);
    assert_eq!(evs[1]["name"], "other");
    assert_eq!(evs[1]["n"], 20);
}

fn write_state(dir: &Path, name: &str, eta: f64) -> PathBuf {
    let set = StateSet {
        meta: SetMeta::new("file", "isotropic", 0),
        records: vec![StateRecord {
            family: Family::Isotropic,
            params: [eta, 0.0, 0.0],
            index: 0,
            label: -1,
            state: isotropic(eta).unwrap(),
        }],
    };
    let path = dir.join(name);
    io::save_states(&set, None, &path).unwrap();
    path
}

#[test]
fn detect_certifies_isotropic_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_state(d, "iso_eta0.9.csv", 0.9);
    let out = ok(d, &["detect", "--state", "iso_eta0.9.csv", "--method", "sdp", "--m", "3", "--trials", "100"], 1);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("row 0: STEERABLE (trial 1,"), "{stdout}");
    let file: DetectFile = io::read_json(&d.join("verdict.json")).unwrap();
    assert_eq!(file.method, "SDP m=3");
    let v = &file.verdicts[0];
    assert_eq!((v.verdict.as_str(), v.label), ("STEERABLE", -1));
    let w = v.sdp.as_ref().unwrap().witness.as_ref().unwrap();
    assert_eq!(w.trial, 0);
    assert!(w.value < -1e-6);
    // the reported settings show steering weight under an independent solve
    let ms: Vec<_> = w.directions.iter().map(|dir| measurement_from_direction(dir).unwrap()).collect();
    let asm = build_assemblage(&isotropic(0.9).unwrap(), &ms).unwrap();
    assert!(steering_weight(&asm, DEFAULT_TOL).unwrap() > 1e-3);
}

#[test]
fn detect_finds_no_certificate_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    write_state(dir.path(), "iso.csv", 0.3);
    let out = ok(dir.path(), &["detect", "--state", "iso.csv", "--trials", "5"], 1);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "row 0: NO_CERTIFICATE (5 trials, 0 stalled)\n");
}

#[test]
fn missing_input_exits_with_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = steerkit(dir.path(), &["train", "--data", "missing.csv", "--model", "svm"], 1);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing written");
}

#[test]
fn invalid_configuration_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| steerkit(d, args, 1).status.code();
    assert_eq!(code(&["gen-data", "--m", "9", "--pos", "1", "--neg", "1"]), Some(3));
    assert_eq!(code(&["gen-data", "--pos", "1"]), Some(3));
    assert_eq!(code(&["gen-data", "--source", "isotropic", "--per-class", "2", "--rank", "2"]), Some(3));
    assert_eq!(code(&["train", "--data", "x.csv", "--model", "svm", "--epochs", "3"]), Some(3));
    assert_eq!(code(&["sweep", "--methods", "sw"]), Some(3));
    assert_eq!(code(&["gen-data", "--source", "isotropic", "--per-class", "2", "--workers", "0"]), Some(3));
    assert_eq!(code(&["gen-data", "--bogus"]), Some(2));
    assert_eq!(steerkit(d, &["gen-data", "--source", "isotropic", "--per-class", "2"], 0).status.code(), Some(3));
    assert!(fs::read_dir(d).unwrap().next().is_none(), "nothing written");
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    with_data(d);
    let before = bytes(d, "data.csv");
    let out = steerkit(d, &["train", "--data", "data.csv", "--model", "boost", "--out", "data.csv"], 1);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(bytes(d, "data.csv"), before);
}

#[test]
fn config_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.json"), r#"{"source": "isotropic", "per_class": 5, "seed": 11, "feature": "f1", "out": "a.csv"}"#).unwrap();
    ok(d, &["gen-data", "--config", "run.json", "--feature", "f2"], 1);
    let ds = io::load_dataset(&d.join("a.csv")).unwrap();
    assert_eq!(ds.meta.set.master_seed, 11);
    assert_eq!(ds.meta.feature_kind.name(), "f2");
    assert_eq!(ds.len(), 10);
    let manifest: Manifest = io::read_json(&d.join("a.manifest.json")).unwrap();
    assert_eq!(manifest.config["feature"], "f2");

    fs::write(d.join("bad.json"), r#"{"source": "isotropic", "per_class": 5, "colour": "red"}"#).unwrap();
    assert_eq!(steerkit(d, &["gen-data", "--config", "bad.json"], 1).status.code(), Some(3));
    assert_eq!(steerkit(d, &["gen-data", "--config", "none.json"], 1).status.code(), Some(4));
}
