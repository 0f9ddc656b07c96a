//! On-disk formats.
//!
//! * Dataset: CSV `f0,…,f{k-1},label` plus `<name>.meta.json`.
//! * State cache: CSV `family,p0,p1,p2,index,label,re_0_0,im_0_0,…,re_8_8,im_8_8`
//!   plus `<name>.meta.json`.
//! * Model and report files: JSON.
//! * Plot data: CSV `method,m,theta,phi,bound`.
//!
//! Floats in CSV files are written with 17 significant digits. Sidecars
//! carry a SHA-256 checksum of their CSV, verified on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use steerkit_core::bounds::{Method, PlotRow};
use steerkit_core::datasets::{DatasetMeta, Family, LabeledDataset, SetMeta, StateRecord, StateSet, WernerRanges};
use steerkit_core::learn::Model;
use steerkit_core::qcore::{c, ComplexMatrix, DensityMatrix};
use steerkit_core::rng;

use crate::error::{AppError, AppResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Decimal text with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_checksum(path: &Path) -> AppResult<String> {
    Ok(sha256_hex(&read(path)?))
}

fn read(path: &Path) -> AppResult<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| AppError::schema(path, e.to_string()))
}

/// `data/x.csv` → `data/x.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn csv_records(path: &Path, bytes: &[u8]) -> AppResult<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
    let header = r.headers().map_err(|e| AppError::schema(path, e.to_string()))?.iter().map(String::from).collect();
    let records = r.records().collect::<Result<Vec<_>, _>>().map_err(|e| AppError::schema(path, e.to_string()))?;
    Ok((header, records))
}

fn parse_f64(path: &Path, s: &str) -> AppResult<f64> {
    s.trim().parse().map_err(|_| AppError::schema(path, format!("not a number: {s:?}")))
}

fn parse_label(path: &Path, s: &str) -> AppResult<i8> {
    match s.trim() {
        "1" => Ok(1),
        "-1" => Ok(-1),
        other => Err(AppError::schema(path, format!("label must be -1 or 1, got {other:?}"))),
    }
}

fn verify_checksum(path: &Path, bytes: &[u8], expected: &str) -> AppResult<()> {
    let found = sha256_hex(bytes);
    if found != expected {
        return Err(AppError::ChecksumMismatch { path: path.into(), expected: expected.into(), found });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    #[serde(flatten)]
    pub meta: DatasetMeta,
    pub rng: String,
    pub checksum: String,
}

pub fn dataset_header(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("f{i}")).chain(std::iter::once("label".into())).collect()
}

/// Writes `path` and its sidecar; returns the CSV checksum.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> AppResult<String> {
    ds.validate()?;
    let rows =
        ds.features.iter().zip(&ds.labels).map(|(f, l)| f.iter().map(|&v| fmt_f64(v)).chain(std::iter::once(l.to_string())).collect());
    let bytes = csv_bytes(&dataset_header(ds.meta.k), rows);
    let checksum = sha256_hex(&bytes);
    write(path, &bytes)?;
    let side =
        DatasetSidecar { schema_version: SCHEMA_VERSION, meta: ds.meta.clone(), rng: rng::ALGORITHM.into(), checksum: checksum.clone() };
    write_json(&sidecar_path(path), &side)?;
    Ok(checksum)
}

pub fn load_dataset(path: &Path) -> AppResult<LabeledDataset> {
    let bytes = read(path)?;
    let side_path = sidecar_path(path);
    let side: DatasetSidecar = read_json(&side_path)?;
    if side.schema_version != SCHEMA_VERSION {
        return Err(AppError::schema(&side_path, format!("unsupported schema version {}", side.schema_version)));
    }
    let k = side.meta.feature_kind.len();
    if side.meta.k != k {
        return Err(AppError::schema(
            &side_path,
            format!("k = {} does not match feature kind {}", side.meta.k, side.meta.feature_kind.name()),
        ));
    }
    let (header, records) = csv_records(path, &bytes)?;
    if header != dataset_header(k) {
        return Err(AppError::schema(path, format!("header has {} columns, expected {} features and a label", header.len(), k)));
    }
    let mut features = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        let f = r.iter().take(k).map(|s| parse_f64(path, s)).collect::<AppResult<Vec<_>>>()?;
        features.push(f);
        labels.push(parse_label(path, &r[k])?);
    }
    let ds = LabeledDataset { meta: side.meta, features, labels };
    ds.validate().map_err(|e| AppError::schema(path, e.to_string()))?;
    verify_checksum(path, &bytes, &side.checksum)?;
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatesSidecar {
    pub schema_version: u32,
    #[serde(flatten)]
    pub meta: SetMeta,
    pub count: usize,
    pub werner: Option<WernerRanges>,
    pub rng: String,
    pub checksum: String,
}

pub fn states_header() -> Vec<String> {
    let mut h: Vec<String> = ["family", "p0", "p1", "p2", "index", "label"].map(String::from).to_vec();
    for i in 0..9 {
        for j in 0..9 {
            h.push(format!("re_{i}_{j}"));
            h.push(format!("im_{i}_{j}"));
        }
    }
    h
}

fn state_row(r: &StateRecord) -> Vec<String> {
    let mut row = vec![r.family.as_str().to_string()];
    row.extend(r.params.iter().map(|&p| fmt_f64(p)));
    row.push(r.index.to_string());
    row.push(r.label.to_string());
    let m = r.state.matrix();
    for i in 0..9 {
        for j in 0..9 {
            row.push(fmt_f64(m[(i, j)].re));
            row.push(fmt_f64(m[(i, j)].im));
        }
    }
    row
}

/// Writes the state cache and its sidecar; returns the CSV checksum.
pub fn save_states(set: &StateSet, werner: Option<&WernerRanges>, path: &Path) -> AppResult<String> {
    let bytes = csv_bytes(&states_header(), set.records.iter().map(state_row));
    let checksum = sha256_hex(&bytes);
    write(path, &bytes)?;
    let side = StatesSidecar {
        schema_version: SCHEMA_VERSION,
        meta: set.meta.clone(),
        count: set.records.len(),
        werner: werner.cloned(),
        rng: rng::ALGORITHM.into(),
        checksum: checksum.clone(),
    };
    write_json(&sidecar_path(path), &side)?;
    Ok(checksum)
}

fn parse_state_records(path: &Path, bytes: &[u8]) -> AppResult<Vec<StateRecord>> {
    let (header, records) = csv_records(path, bytes)?;
    if header != states_header() {
        return Err(AppError::schema(path, "state cache header mismatch"));
    }
    records
        .iter()
        .map(|r| {
            let family = Family::parse(&r[0]).ok_or_else(|| AppError::schema(path, format!("unknown family {:?}", &r[0])))?;
            let params = [parse_f64(path, &r[1])?, parse_f64(path, &r[2])?, parse_f64(path, &r[3])?];
            let index = r[4].trim().parse().map_err(|_| AppError::schema(path, format!("bad index {:?}", &r[4])))?;
            let label = parse_label(path, &r[5])?;
            let vals = r.iter().skip(6).map(|s| parse_f64(path, s)).collect::<AppResult<Vec<_>>>()?;
            let m = ComplexMatrix::from_fn(9, 9, |i, j| c(vals[2 * (9 * i + j)], vals[2 * (9 * i + j) + 1]));
            let state = DensityMatrix::new(m).map_err(|e| AppError::schema(path, format!("row {index}: {e}")))?;
            Ok(StateRecord { family, params, index, label, state })
        })
        .collect()
}

/// Loads a state cache. The sidecar, when present, is checked against the
/// file; a bare CSV (for example a hand-written state) is accepted too.
pub fn load_states(path: &Path) -> AppResult<(StateSet, Option<WernerRanges>)> {
    let bytes = read(path)?;
    let records = parse_state_records(path, &bytes)?;
    let side_path = sidecar_path(path);
    if !side_path.exists() {
        let meta = SetMeta::new("file", "unknown", 0);
        return Ok((StateSet { meta, records }, None));
    }
    let side: StatesSidecar = read_json(&side_path)?;
    if side.schema_version != SCHEMA_VERSION || side.count != records.len() {
        return Err(AppError::schema(path, format!("sidecar expects {} rows, found {}", side.count, records.len())));
    }
    verify_checksum(path, &bytes, &side.checksum)?;
    Ok((StateSet { meta: side.meta, records }, side.werner))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: Model,
}

pub fn save_model(model: &Model, path: &Path) -> AppResult<String> {
    write_json(path, &ModelFile { schema_version: SCHEMA_VERSION, model: model.clone() })?;
    file_checksum(path)
}

pub fn load_model(path: &Path) -> AppResult<Model> {
    let f: ModelFile = read_json(path)?;
    if f.schema_version != SCHEMA_VERSION {
        return Err(AppError::schema(path, format!("unsupported schema version {}", f.schema_version)));
    }
    Ok(f.model)
}

pub const PLOT_HEADER: [&str; 5] = ["method", "m", "theta", "phi", "bound"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn save_plot(rows: &[PlotRow], path: &Path) -> AppResult<String> {
    let header: Vec<String> = PLOT_HEADER.map(String::from).to_vec();
    let bytes = csv_bytes(
        &header,
        rows.iter().map(|r| vec![r.method.as_str().into(), opt(r.m), opt(r.theta.map(fmt_f64)), opt(r.phi.map(fmt_f64)), fmt_f64(r.bound)]),
    );
    write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_plot(path: &Path) -> AppResult<Vec<PlotRow>> {
    let bytes = read(path)?;
    let (header, records) = csv_records(path, &bytes)?;
    if header != PLOT_HEADER {
        return Err(AppError::schema(path, "plot header mismatch"));
    }
    let field = |s: &str| -> AppResult<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(path, s).map(Some)
        }
    };
    records
        .iter()
        .map(|r| {
            Ok(PlotRow {
                method: Method::parse(&r[0]).ok_or_else(|| AppError::schema(path, format!("unknown method {:?}", &r[0])))?,
                m: if r[1].is_empty() { None } else { Some(r[1].parse().map_err(|_| AppError::schema(path, "bad m"))?) },
                theta: field(&r[2])?,
                phi: field(&r[3])?,
                bound: parse_f64(path, &r[4])?,
            })
        })
        .collect()
}
