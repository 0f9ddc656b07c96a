//! Command-line front end.
//!
//! Every subcommand takes its parameters from flags and, optionally, from a
//! JSON file given with `--config` whose keys are the flag names in
//! snake_case. Flags win over the file. All parameters are checked before
//! any work starts, and every run writes a manifest next to its main output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;
use steerkit_core::bounds::{
    self, plot_rows, sweep_isotropic, sweep_isotropic_sdp, sweep_partial, sweep_partial_sw, BoundCurve, BoundSurface, Method, SdpPredictor,
};
use steerkit_core::datasets::{
    gen_accurate_states, gen_isotropic_states, gen_partial_states, gen_random_sdp_states, relabel_subsample, AccurateConfig,
    RandomSdpConfig, StateSet, WernerRanges, PARTIAL_SW_CUTOFF,
};
use steerkit_core::features::{extract, FeatureKind};
use steerkit_core::learn::{
    evaluate, holdout_split, train_ann, train_boost, train_svm, AnnConfig, BoostConfig, EvalReport, Evaluation, Model, SvmGrid,
    DEFAULT_FOLDS,
};
use steerkit_core::rng::{self, domain, Rng};
use steerkit_core::steersdp::{sdp_label, LabelOutcome, DEFAULT_TOL, DEFAULT_TRIALS, MAX_SETTINGS};

use crate::error::{AppError, AppResult};
use crate::exec::{default_workers, Pool};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "steerkit", version, about = "Steerability detection and learning for two-qutrit states")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled feature dataset (and optionally its state cache).
    GenData(GenDataArgs),
    /// Train a classifier on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model on datasets.
    Eval(EvalArgs),
    /// Compute steerability bounds along state families.
    Sweep(SweepArgs),
    /// Decide steerability of the states in a state file.
    Detect(DetectArgs),
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// random (SDP-labeled), accurate, isotropic or partial.
    #[arg(long)]
    pub source: Option<String>,
    /// Measurement settings for SDP labels.
    #[arg(long)]
    pub m: Option<usize>,
    /// Unsteerable (+1) target of the random source.
    #[arg(long)]
    pub pos: Option<usize>,
    /// Steerable (-1) target of the random source.
    #[arg(long)]
    pub neg: Option<usize>,
    /// States per class for the accurate, isotropic and partial sources.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// f1 or f2.
    #[arg(long)]
    pub feature: Option<String>,
    /// SDP measurement draws per state.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Rank of random states (9 = full rank).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Draw limit of the quota-filling sources.
    #[arg(long)]
    pub max_draws: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the labeled states to this state cache.
    #[arg(long)]
    pub states: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// svm, ann or boost.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Hold out a stratified sixth of the data as a test set.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub holdout: Option<bool>,
    /// Extra datasets to report accuracy on.
    #[arg(long, value_delimiter = ',')]
    pub generalize: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    /// Two hidden-layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub data: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// isotropic or partial.
    #[arg(long)]
    pub family: Option<String>,
    /// Any of sdp, sw, theory.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Model files, each optionally prefixed with its setting count as `M=PATH`.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Setting counts of the SDP curve.
    #[arg(long, value_delimiter = ',')]
    pub ms: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Grid step of the scanned parameter.
    #[arg(long)]
    pub step: Option<f64>,
    /// Consecutive steerable predictions that fix a bound.
    #[arg(long)]
    pub window: Option<usize>,
    /// Grid points on theta in [0, π/4] (partial family).
    #[arg(long)]
    pub theta_points: Option<usize>,
    /// Grid points on phi in [0, π/2] (partial family).
    #[arg(long)]
    pub phi_points: Option<usize>,
    /// Steering-weight cutoff of the sw method.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Plot-data CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full curves and surfaces as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// State cache file.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// sdp or model.
    #[arg(long)]
    pub method: Option<String>,
    /// Model file for the model method.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Only this row of the state file.
    #[arg(long)]
    pub row: Option<usize>,
    /// Verdict JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Overlays the set flags on the config file's values.
fn merge<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Path>) -> AppResult<T> {
    let Some(path) = config else { return Ok(flags) };
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let file: Value = serde_json::from_slice(&bytes).map_err(|e| AppError::ConfigInvalid(format!("{}: {e}", path.display())))?;
    // rejects unknown keys and wrong types
    serde_json::from_value::<T>(file.clone()).map_err(|e| AppError::ConfigInvalid(format!("{}: {e}", path.display())))?;
    let Value::Object(mut merged) = file else {
        return Err(AppError::ConfigInvalid(format!("{}: expected a JSON object", path.display())));
    };
    let Value::Object(set) = serde_json::to_value(&flags).expect("serializable flags") else { unreachable!() };
    for (k, v) in set {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| AppError::ConfigInvalid(e.to_string()))
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::ConfigInvalid(msg.into())
}

fn require<T>(v: Option<T>, name: &str) -> AppResult<T> {
    v.ok_or_else(|| invalid(format!("--{} is required", name.replace('_', "-"))))
}

fn positive(v: usize, name: &str) -> AppResult<usize> {
    if v == 0 {
        return Err(invalid(format!("{name} must be positive")));
    }
    Ok(v)
}

fn check_tol(tol: f64) -> AppResult<f64> {
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(invalid(format!("tol must lie in (0, 0.01), got {tol}")));
    }
    Ok(tol)
}

fn check_m(m: usize) -> AppResult<usize> {
    if !(1..=MAX_SETTINGS).contains(&m) {
        return Err(invalid(format!("m must lie in 1..={MAX_SETTINGS}, got {m}")));
    }
    Ok(m)
}

fn feature_kind(s: Option<String>) -> AppResult<FeatureKind> {
    let s = s.unwrap_or_else(|| "f1".into());
    FeatureKind::parse(&s).ok_or_else(|| invalid(format!("unknown feature kind {s:?} (expected f1 or f2)")))
}

fn workers(v: Option<usize>) -> AppResult<usize> {
    match v {
        Some(0) => Err(invalid("workers must be at least 1")),
        Some(w) => Ok(w),
        None => default_workers(),
    }
}

fn manifest_path(explicit: Option<PathBuf>, primary: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| primary.with_extension("manifest.json"))
}

/// Rejects runs whose outputs would overwrite one of their inputs.
fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> AppResult<()> {
    for o in outputs {
        if inputs.iter().any(|i| i == o) {
            return Err(invalid(format!("output {} would overwrite an input", o.display())));
        }
    }
    for (i, a) in outputs.iter().enumerate() {
        if outputs[i + 1..].contains(a) {
            return Err(invalid(format!("output {} given twice", a.display())));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub steerkit: String,
    pub schema: u32,
    pub rng: String,
}

/// Record of one run: enough to repeat it and to check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub versions: Versions,
    pub workers: usize,
    pub wall_time_s: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

struct Run {
    command: &'static str,
    config: Value,
    seeds: Vec<u64>,
    workers: usize,
    manifest: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    started: Instant,
}

impl Run {
    fn new<C: Serialize>(command: &'static str, config: &C, seeds: Vec<u64>, workers: usize, manifest: PathBuf) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).expect("serializable config"),
            seeds,
            workers,
            manifest,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) -> AppResult<()> {
        let sha256 = io::file_checksum(path)?;
        self.inputs.push(FileDigest { path: path.into(), sha256 });
        Ok(())
    }

    fn output(&mut self, path: &Path, sha256: String) {
        self.outputs.push(FileDigest { path: path.into(), sha256 });
    }

    fn output_file(&mut self, path: &Path) -> AppResult<()> {
        let sha = io::file_checksum(path)?;
        self.output(path, sha);
        Ok(())
    }

    fn finish(self) -> AppResult<Manifest> {
        let m = Manifest {
            command: self.command.into(),
            config: self.config,
            seeds: self.seeds,
            versions: Versions { steerkit: env!("CARGO_PKG_VERSION").into(), schema: io::SCHEMA_VERSION, rng: rng::ALGORITHM.into() },
            workers: self.workers,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        io::write_json(&self.manifest, &m)?;
        Ok(m)
    }
}

// ---------------------------------------------------------------- gen-data

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Random,
    Accurate,
    Isotropic,
    Partial,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenDataConfig {
    pub source: Source,
    pub m: Option<usize>,
    pub pos: Option<usize>,
    pub neg: Option<usize>,
    pub per_class: Option<usize>,
    pub seed: u64,
    pub feature: FeatureKind,
    pub trials: Option<usize>,
    pub tol: f64,
    pub rank: Option<usize>,
    pub max_draws: Option<u64>,
    pub out: PathBuf,
    pub states: Option<PathBuf>,
    pub workers: usize,
    pub manifest: PathBuf,
}

/// Share of an SDP-labeled set re-labeled with fresh draws as a quality check.
const RELABEL_FRACTION: f64 = 0.01;
/// Draw limit of the random source when none is given.
const DRAWS_PER_TARGET: u64 = 100;

impl GenDataConfig {
    pub fn resolve(a: GenDataArgs) -> AppResult<Self> {
        let a = merge(GenDataArgs { config: None, ..a }, a.config.as_deref())?;
        let source = match a.source.as_deref().unwrap_or("random") {
            "random" => Source::Random,
            "accurate" => Source::Accurate,
            "isotropic" => Source::Isotropic,
            "partial" => Source::Partial,
            s => return Err(invalid(format!("unknown source {s:?} (expected random, accurate, isotropic or partial)"))),
        };
        let out = a.out.unwrap_or_else(|| "data.csv".into());
        let tol = check_tol(a.tol.unwrap_or(DEFAULT_TOL))?;
        let mut cfg = Self {
            source,
            m: None,
            pos: None,
            neg: None,
            per_class: None,
            seed: a.seed.unwrap_or(0),
            feature: feature_kind(a.feature)?,
            trials: None,
            tol,
            rank: None,
            max_draws: None,
            manifest: manifest_path(a.manifest, &out),
            out,
            states: a.states,
            workers: workers(a.workers)?,
        };
        let unused =
            |name: &str, set: bool| if set { Err(invalid(format!("--{name} does not apply to source {:?}", source))) } else { Ok(()) };
        match source {
            Source::Random => {
                unused("per-class", a.per_class.is_some())?;
                let pos = positive(require(a.pos, "pos")?, "pos")?;
                let neg = positive(require(a.neg, "neg")?, "neg")?;
                let rank = a.rank.unwrap_or(9);
                if !(1..=9).contains(&rank) {
                    return Err(invalid(format!("rank must lie in 1..=9, got {rank}")));
                }
                cfg.m = Some(check_m(a.m.unwrap_or(3))?);
                cfg.trials = Some(positive(a.trials.unwrap_or(DEFAULT_TRIALS), "trials")?);
                cfg.rank = Some(rank);
                cfg.max_draws = Some(a.max_draws.unwrap_or(DRAWS_PER_TARGET * (pos + neg) as u64));
                cfg.pos = Some(pos);
                cfg.neg = Some(neg);
            }
            Source::Accurate | Source::Isotropic | Source::Partial => {
                unused("pos", a.pos.is_some())?;
                unused("neg", a.neg.is_some())?;
                unused("rank", a.rank.is_some())?;
                cfg.per_class = Some(positive(require(a.per_class, "per_class")?, "per-class")?);
                if source == Source::Accurate {
                    cfg.m = Some(check_m(a.m.unwrap_or(3))?);
                    cfg.trials = Some(positive(a.trials.unwrap_or(25), "trials")?);
                } else {
                    unused("m", a.m.is_some())?;
                    unused("trials", a.trials.is_some())?;
                }
                if source == Source::Partial {
                    cfg.max_draws = a.max_draws;
                } else {
                    unused("max-draws", a.max_draws.is_some())?;
                }
            }
        }
        let mut outs = vec![cfg.out.as_path(), cfg.manifest.as_path()];
        outs.extend(cfg.states.as_deref());
        check_paths(&[], &outs)?;
        Ok(cfg)
    }
}

fn incomplete(what: &str, pos: usize, neg: usize, draws: u64) -> AppError {
    AppError::Core(steerkit_core::Error::ClassGenerationFailed(format!(
        "{what}: quotas unmet after {draws} draws ({pos} unsteerable, {neg} steerable); raise --max-draws or change --rank"
    )))
}

pub fn cmd_gen_data(cfg: &GenDataConfig) -> AppResult<Manifest> {
    let pool = Pool::new(cfg.workers)?;
    let mut run = Run::new("gen-data", cfg, vec![cfg.seed], cfg.workers, cfg.manifest.clone());
    let (set, werner): (StateSet, Option<WernerRanges>) = match cfg.source {
        Source::Random => {
            let mut rc = RandomSdpConfig::new(cfg.m.unwrap(), cfg.pos.unwrap(), cfg.neg.unwrap(), cfg.seed);
            rc.trials = cfg.trials.unwrap();
            rc.tol = cfg.tol;
            rc.rank = cfg.rank.unwrap();
            rc.max_draws = cfg.max_draws;
            let g = gen_random_sdp_states(&rc, &pool)?;
            if !g.complete {
                let (p, n) = g.set.counts();
                return Err(incomplete("random source", p, n, g.set.meta.draws));
            }
            let mut set = g.set;
            set.meta.relabel = Some(relabel_subsample(&set, RELABEL_FRACTION, cfg.seed, &pool)?);
            (set, None)
        }
        Source::Accurate => {
            let ac = AccurateConfig {
                master_seed: cfg.seed,
                per_class: cfg.per_class.unwrap(),
                random_m: cfg.m.unwrap(),
                random_trials: cfg.trials.unwrap(),
                tol: cfg.tol,
            };
            let (set, ranges) = gen_accurate_states(&ac, &pool)?;
            (set, Some(ranges))
        }
        Source::Isotropic => (gen_isotropic_states(cfg.per_class.unwrap(), cfg.seed, &pool)?, None),
        Source::Partial => {
            let g = gen_partial_states(cfg.per_class.unwrap(), cfg.seed, cfg.tol, cfg.max_draws, &pool)?;
            if !g.complete {
                let (p, n) = g.set.counts();
                return Err(incomplete("partial source", p, n, g.set.meta.draws));
            }
            (g.set, None)
        }
    };
    let ds = set.dataset(cfg.feature)?;
    let sha = io::save_dataset(&ds, &cfg.out)?;
    run.output(&cfg.out, sha);
    run.output_file(&io::sidecar_path(&cfg.out))?;
    if let Some(p) = &cfg.states {
        let sha = io::save_states(&set, werner.as_ref(), p)?;
        run.output(p, sha);
        run.output_file(&io::sidecar_path(p))?;
    }
    eprintln!(
        "wrote {} rows ({} unsteerable, {} steerable, {} excluded) to {}",
        ds.len(),
        ds.meta.positives,
        ds.meta.negatives,
        ds.meta.excluded,
        cfg.out.display()
    );
    run.finish()
}

// ---------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Svm,
    Ann,
    Boost,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub model: Family,
    pub seed: u64,
    pub folds: usize,
    pub holdout: bool,
    pub generalize: Vec<PathBuf>,
    pub svm: Option<SvmGrid>,
    pub ann: Option<AnnConfig>,
    pub boost: Option<BoostConfig>,
    pub out: PathBuf,
    pub report: PathBuf,
    pub workers: usize,
    pub manifest: PathBuf,
}

impl TrainConfig {
    pub fn resolve(a: TrainArgs) -> AppResult<Self> {
        let a = merge(TrainArgs { config: None, ..a }, a.config.as_deref())?;
        let data = require(a.data, "data")?;
        let model = match require(a.model, "model")?.as_str() {
            "svm" => Family::Svm,
            "ann" => Family::Ann,
            "boost" => Family::Boost,
            s => return Err(invalid(format!("unknown model {s:?} (expected svm, ann or boost)"))),
        };
        let folds = a.folds.unwrap_or(DEFAULT_FOLDS);
        if folds < 2 {
            return Err(invalid("folds must be at least 2"));
        }
        let wrong = |name: &str, set: bool| if set { Err(invalid(format!("--{name} does not apply to model {model:?}"))) } else { Ok(()) };
        let (mut svm, mut ann, mut boost) = (None, None, None);
        match model {
            Family::Svm => {
                wrong("hidden", a.hidden.is_some())?;
                wrong("epochs", a.epochs.is_some())?;
                wrong("lr", a.lr.is_some())?;
                wrong("stages", a.stages.is_some())?;
                wrong("depth", a.depth.is_some())?;
                let d = SvmGrid::default();
                let grid = SvmGrid { c: a.c_grid.unwrap_or(d.c), gamma: a.gamma_grid.unwrap_or(d.gamma) };
                if grid.c.is_empty() || grid.gamma.is_empty() || grid.c.iter().chain(&grid.gamma).any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(invalid("SVM grids must be non-empty lists of positive numbers"));
                }
                svm = Some(grid);
            }
            Family::Ann => {
                wrong("c-grid", a.c_grid.is_some())?;
                wrong("gamma-grid", a.gamma_grid.is_some())?;
                wrong("stages", a.stages.is_some())?;
                wrong("depth", a.depth.is_some())?;
                let mut c = AnnConfig::default();
                if let Some(h) = a.hidden {
                    let [h1, h2] = h[..] else { return Err(invalid("--hidden takes exactly two widths")) };
                    c.hidden = Some([positive(h1, "hidden width")?, positive(h2, "hidden width")?]);
                }
                c.epochs = positive(a.epochs.unwrap_or(c.epochs), "epochs")?;
                c.lr = a.lr.unwrap_or(c.lr);
                if !(c.lr > 0.0 && c.lr.is_finite()) {
                    return Err(invalid("lr must be positive"));
                }
                ann = Some(c);
            }
            Family::Boost => {
                wrong("c-grid", a.c_grid.is_some())?;
                wrong("gamma-grid", a.gamma_grid.is_some())?;
                wrong("hidden", a.hidden.is_some())?;
                wrong("epochs", a.epochs.is_some())?;
                wrong("lr", a.lr.is_some())?;
                let d = BoostConfig::default();
                boost = Some(BoostConfig {
                    stages: positive(a.stages.unwrap_or(d.stages), "stages")?,
                    max_depth: positive(a.depth.unwrap_or(d.max_depth), "depth")?,
                });
            }
        }
        let out = a.out.unwrap_or_else(|| "model.json".into());
        let report = a.report.unwrap_or_else(|| out.with_extension("report.json"));
        let cfg = Self {
            data,
            model,
            seed: a.seed.unwrap_or(0),
            folds,
            holdout: a.holdout.unwrap_or(false),
            generalize: a.generalize.unwrap_or_default(),
            svm,
            ann,
            boost,
            manifest: manifest_path(a.manifest, &out),
            out,
            report,
            workers: workers(a.workers)?,
        };
        let mut inputs = vec![cfg.data.as_path()];
        inputs.extend(cfg.generalize.iter().map(PathBuf::as_path));
        check_paths(&inputs, &[&cfg.out, &cfg.report, &cfg.manifest])?;
        Ok(cfg)
    }
}

fn file_label(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_train(cfg: &TrainConfig) -> AppResult<Manifest> {
    let pool = Pool::new(cfg.workers)?;
    let mut run = Run::new("train", cfg, vec![cfg.seed], cfg.workers, cfg.manifest.clone());
    // load and check every input before training
    let data = io::load_dataset(&cfg.data)?;
    run.input(&cfg.data)?;
    let mut extra = Vec::new();
    for p in &cfg.generalize {
        let ds = io::load_dataset(p)?;
        if ds.meta.feature_kind != data.meta.feature_kind {
            return Err(invalid(format!(
                "{} holds {} features, training data {}",
                p.display(),
                ds.meta.feature_kind.name(),
                data.meta.feature_kind.name()
            )));
        }
        run.input(p)?;
        extra.push((file_label(p), ds));
    }
    let (train, test) = if cfg.holdout {
        let (tr, te) = holdout_split(&data, cfg.seed)?;
        (tr, Some(te))
    } else {
        (data, None)
    };
    let (model, mut report): (Model, EvalReport) = match cfg.model {
        Family::Svm => {
            let (m, r) = train_svm(&train, cfg.svm.as_ref().unwrap(), cfg.folds, cfg.seed, &pool)?;
            (Model::Svm(m), r)
        }
        Family::Ann => {
            let (m, r) = train_ann(&train, cfg.ann.as_ref().unwrap(), cfg.folds, cfg.seed, &pool)?;
            (Model::Ann(m), r)
        }
        Family::Boost => {
            let (m, r) = train_boost(&train, cfg.boost.as_ref().unwrap(), cfg.folds, cfg.seed, &pool)?;
            (Model::Boost(m), r)
        }
    };
    if let Some(te) = &test {
        report.test = Some(evaluate(&model, te, "test")?);
    }
    for (name, ds) in &extra {
        report.generalization.push(evaluate(&model, ds, name)?);
    }
    let sha = io::save_model(&model, &cfg.out)?;
    run.output(&cfg.out, sha);
    io::write_json(&cfg.report, &report)?;
    run.output_file(&cfg.report)?;
    eprintln!(
        "cv {:.4}  train {:.4}{}",
        report.cv_accuracy,
        report.train.accuracy,
        report.test.as_ref().map_or_else(String::new, |t| format!("  test {:.4}", t.accuracy))
    );
    for ev in &report.generalization {
        eprintln!("{}: {:.4}", ev.name, ev.accuracy);
    }
    run.finish()
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, Serialize)]
pub struct EvalConfig {
    pub model: PathBuf,
    pub data: Vec<PathBuf>,
    pub report: PathBuf,
    pub workers: usize,
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub family: String,
    pub feature_kind: FeatureKind,
    pub evaluations: Vec<Evaluation>,
}

impl EvalConfig {
    pub fn resolve(a: EvalArgs) -> AppResult<Self> {
        let a = merge(EvalArgs { config: None, ..a }, a.config.as_deref())?;
        let model = require(a.model, "model")?;
        let data = require(a.data, "data")?;
        if data.is_empty() {
            return Err(invalid("--data needs at least one dataset"));
        }
        let report = a.report.unwrap_or_else(|| "eval.json".into());
        let cfg = Self { manifest: manifest_path(a.manifest, &report), model, data, report, workers: workers(a.workers)? };
        let mut inputs = vec![cfg.model.as_path()];
        inputs.extend(cfg.data.iter().map(PathBuf::as_path));
        check_paths(&inputs, &[&cfg.report, &cfg.manifest])?;
        Ok(cfg)
    }
}

pub fn cmd_eval(cfg: &EvalConfig) -> AppResult<Manifest> {
    let mut run = Run::new("eval", cfg, vec![], cfg.workers, cfg.manifest.clone());
    let model = io::load_model(&cfg.model)?;
    run.input(&cfg.model)?;
    let mut sets = Vec::new();
    for p in &cfg.data {
        sets.push((file_label(p), io::load_dataset(p)?));
        run.input(p)?;
    }
    let evaluations = sets.iter().map(|(name, ds)| evaluate(&model, ds, name)).collect::<Result<Vec<_>, _>>()?;
    for ev in &evaluations {
        eprintln!("{}: {:.4} ({} rows)", ev.name, ev.accuracy, ev.n);
    }
    let file = EvalFile { family: Method::of_model(&model).as_str().into(), feature_kind: model.feature_kind(), evaluations };
    io::write_json(&cfg.report, &file)?;
    run.output_file(&cfg.report)?;
    run.finish()
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    Isotropic,
    Partial,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSpec {
    pub m: usize,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub methods: Vec<Method>,
    pub models: Vec<ModelSpec>,
    pub ms: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub step: f64,
    pub window: usize,
    pub theta_points: usize,
    pub phi_points: usize,
    pub cutoff: f64,
    pub out: PathBuf,
    pub summary: PathBuf,
    pub workers: usize,
    pub manifest: PathBuf,
}

/// Sweep trials per grid point when none are given.
const SWEEP_TRIALS: usize = 20;
/// Setting count assigned to a model given without one.
const MODEL_M: usize = 3;

impl SweepConfig {
    pub fn resolve(a: SweepArgs) -> AppResult<Self> {
        let a = merge(SweepArgs { config: None, ..a }, a.config.as_deref())?;
        let family = match a.family.as_deref().unwrap_or("isotropic") {
            "isotropic" => SweepFamily::Isotropic,
            "partial" => SweepFamily::Partial,
            s => return Err(invalid(format!("unknown family {s:?} (expected isotropic or partial)"))),
        };
        let mut methods = Vec::new();
        for s in a.methods.unwrap_or_default() {
            let m = Method::parse(&s).filter(|m| matches!(m, Method::Sdp | Method::Sw | Method::Theory));
            let m = m.ok_or_else(|| invalid(format!("unknown method {s:?} (expected sdp, sw or theory; models go to --models)")))?;
            if m == Method::Sw && family == SweepFamily::Isotropic {
                return Err(invalid("the sw method applies to the partial family only"));
            }
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        let models = a
            .models
            .unwrap_or_default()
            .into_iter()
            .map(|s| match s.split_once('=') {
                Some((m, p)) => {
                    let m = m.trim().parse().map_err(|_| invalid(format!("bad setting count in {s:?}")))?;
                    Ok(ModelSpec { m, path: p.into() })
                }
                None => Ok(ModelSpec { m: MODEL_M, path: s.into() }),
            })
            .collect::<AppResult<Vec<_>>>()?;
        if methods.is_empty() && models.is_empty() {
            return Err(invalid("nothing to sweep: give --methods and/or --models"));
        }
        let ms = a.ms.unwrap_or_else(|| vec![3, 4, 5, 6, 7]);
        if ms.is_empty() || ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("--ms must be a non-empty increasing list"));
        }
        for &m in &ms {
            check_m(m)?;
        }
        let step = a.step.unwrap_or(bounds::DEFAULT_STEP);
        if !(step > 0.0 && step <= 0.5) {
            return Err(invalid(format!("step must lie in (0, 0.5], got {step}")));
        }
        let cutoff = a.cutoff.unwrap_or(PARTIAL_SW_CUTOFF);
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(invalid(format!("cutoff must lie in (0, 1), got {cutoff}")));
        }
        let out = a.out.unwrap_or_else(|| "bounds.csv".into());
        let summary = a.summary.unwrap_or_else(|| out.with_extension("summary.json"));
        let cfg = Self {
            family,
            methods,
            models,
            ms,
            trials: positive(a.trials.unwrap_or(SWEEP_TRIALS), "trials")?,
            seed: a.seed.unwrap_or(0),
            tol: check_tol(a.tol.unwrap_or(DEFAULT_TOL))?,
            step,
            window: positive(a.window.unwrap_or(bounds::DEFAULT_WINDOW), "window")?,
            theta_points: positive(a.theta_points.unwrap_or(5), "theta-points")?,
            phi_points: positive(a.phi_points.unwrap_or(5), "phi-points")?,
            cutoff,
            manifest: manifest_path(a.manifest, &out),
            out,
            summary,
            workers: workers(a.workers)?,
        };
        let inputs: Vec<&Path> = cfg.models.iter().map(|s| s.path.as_path()).collect();
        check_paths(&inputs, &[&cfg.out, &cfg.summary, &cfg.manifest])?;
        Ok(cfg)
    }

    fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        let axis = |n: usize, hi: f64| -> Vec<f64> {
            if n == 1 {
                vec![0.0]
            } else {
                (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
            }
        };
        (axis(self.theta_points, std::f64::consts::FRAC_PI_4), axis(self.phi_points, std::f64::consts::FRAC_PI_2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub curves: Vec<BoundCurve>,
    pub surfaces: Vec<BoundSurface>,
}

pub fn cmd_sweep(cfg: &SweepConfig) -> AppResult<Manifest> {
    let pool = Pool::new(cfg.workers)?;
    let mut run = Run::new("sweep", cfg, vec![cfg.seed], cfg.workers, cfg.manifest.clone());
    let mut models = Vec::new();
    for spec in &cfg.models {
        models.push((spec.m, io::load_model(&spec.path)?));
        run.input(&spec.path)?;
    }
    let mut curves = Vec::new();
    let mut surfaces = Vec::new();
    match cfg.family {
        SweepFamily::Isotropic => {
            for &method in &cfg.methods {
                curves.push(match method {
                    Method::Sdp => sweep_isotropic_sdp(&cfg.ms, cfg.trials, cfg.seed, cfg.tol, cfg.step, cfg.window, &pool)?,
                    _ => BoundCurve::theory(&cfg.ms),
                });
            }
            for (m, model) in &models {
                curves.push(sweep_isotropic(Method::of_model(model), &[(*m, model.clone())], cfg.step, cfg.window, &pool)?);
            }
        }
        SweepFamily::Partial => {
            let (theta, phi) = cfg.axes();
            for &method in &cfg.methods {
                match method {
                    Method::Sw => surfaces.push(sweep_partial_sw(&theta, &phi, cfg.step, cfg.cutoff, cfg.tol, &pool)?),
                    Method::Sdp => {
                        for &m in &cfg.ms {
                            let p = SdpPredictor { m, trials: cfg.trials, seed: cfg.seed, tol: cfg.tol };
                            surfaces.push(sweep_partial(Method::Sdp, &p, &theta, &phi, cfg.step, cfg.window, &pool)?);
                        }
                    }
                    _ => curves.push(BoundCurve::theory(&cfg.ms)),
                }
            }
            for (_, model) in &models {
                surfaces.push(sweep_partial(Method::of_model(model), model, &theta, &phi, cfg.step, cfg.window, &pool)?);
            }
        }
    }
    for c in &curves {
        for (i, &m) in c.grid.iter().enumerate() {
            if c.method != Method::Theory {
                eprintln!("{}: {:.4}{}", bounds::describe(c.method, Some(m)), c.bounds[i], if c.found[i] { "" } else { " (no flip)" });
            }
        }
    }
    for s in &surfaces {
        let found: Vec<f64> = s.bounds.iter().zip(&s.found).filter(|(_, &f)| f).map(|(&b, _)| b).collect();
        let min = found.iter().copied().fold(f64::INFINITY, f64::min);
        let cells = s.bounds.len();
        if found.is_empty() {
            eprintln!("{}: no flip in {cells} cells", bounds::describe(s.method, None));
        } else {
            eprintln!("{}: {} of {cells} cells flip, lowest bound {min:.4}", bounds::describe(s.method, None), found.len());
        }
    }
    let rows = plot_rows(&curves, &surfaces);
    let sha = io::save_plot(&rows, &cfg.out)?;
    run.output(&cfg.out, sha);
    io::write_json(&cfg.summary, &SweepSummary { curves, surfaces })?;
    run.output_file(&cfg.summary)?;
    run.finish()
}

// ---------------------------------------------------------------- detect

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectMethod {
    Sdp,
    Model,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectConfig {
    pub state: PathBuf,
    pub method: DetectMethod,
    pub model: Option<PathBuf>,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub row: Option<usize>,
    pub out: PathBuf,
    pub workers: usize,
    pub manifest: PathBuf,
}

impl DetectConfig {
    pub fn resolve(a: DetectArgs) -> AppResult<Self> {
        let a = merge(DetectArgs { config: None, ..a }, a.config.as_deref())?;
        let state = require(a.state, "state")?;
        let method = match a.method.as_deref().unwrap_or("sdp") {
            "sdp" => DetectMethod::Sdp,
            "model" | "svm" | "ann" | "boost" => DetectMethod::Model,
            s => return Err(invalid(format!("unknown method {s:?} (expected sdp or model)"))),
        };
        let model = match method {
            DetectMethod::Model => Some(require(a.model, "model")?),
            DetectMethod::Sdp if a.model.is_some() => return Err(invalid("--model applies to the model method only")),
            DetectMethod::Sdp => None,
        };
        let out = a.out.unwrap_or_else(|| "verdict.json".into());
        let cfg = Self {
            state,
            method,
            model,
            m: check_m(a.m.unwrap_or(3))?,
            trials: positive(a.trials.unwrap_or(DEFAULT_TRIALS), "trials")?,
            seed: a.seed.unwrap_or(0),
            tol: check_tol(a.tol.unwrap_or(DEFAULT_TOL))?,
            row: a.row,
            manifest: manifest_path(a.manifest, &out),
            out,
            workers: workers(a.workers)?,
        };
        let mut inputs = vec![cfg.state.as_path()];
        inputs.extend(cfg.model.as_deref());
        check_paths(&inputs, &[&cfg.out, &cfg.manifest])?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVerdict {
    pub row: usize,
    pub index: u64,
    pub family: String,
    /// `STEERABLE`, `NO_CERTIFICATE` (sdp) or `UNSTEERABLE` (model).
    pub verdict: String,
    pub label: i8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp: Option<LabelOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectFile {
    pub method: String,
    pub verdicts: Vec<StateVerdict>,
}

pub fn cmd_detect(cfg: &DetectConfig) -> AppResult<Manifest> {
    let pool = Pool::new(cfg.workers)?;
    let mut run = Run::new("detect", cfg, vec![cfg.seed], cfg.workers, cfg.manifest.clone());
    let (set, _) = io::load_states(&cfg.state)?;
    run.input(&cfg.state)?;
    let model = match &cfg.model {
        Some(p) => {
            let m = io::load_model(p)?;
            run.input(p)?;
            Some(m)
        }
        None => None,
    };
    let rows: Vec<usize> = match cfg.row {
        Some(r) if r < set.records.len() => vec![r],
        Some(r) => return Err(invalid(format!("row {r} out of range: the file has {} states", set.records.len()))),
        None => (0..set.records.len()).collect(),
    };
    use steerkit_core::exec::ParMap;
    let verdicts = pool
        .map(rows.len(), |i| -> AppResult<StateVerdict> {
            let row = rows[i];
            let rec = &set.records[row];
            let (label, sdp) = match &model {
                Some(model) => (model.predict(&extract(model.feature_kind(), &rec.state)?)?, None),
                None => {
                    let mut rng = Rng::stream(cfg.seed, domain::TRIALS, row as u64);
                    let out = sdp_label(&rec.state, cfg.m, cfg.trials, &mut rng, cfg.tol)?;
                    (out.label, Some(out))
                }
            };
            let verdict = match (label, model.is_some()) {
                (-1, _) => "STEERABLE",
                (_, false) => "NO_CERTIFICATE",
                (_, true) => "UNSTEERABLE",
            };
            Ok(StateVerdict { row, index: rec.index, family: rec.family.as_str().into(), verdict: verdict.into(), label, sdp })
        })
        .into_iter()
        .collect::<AppResult<Vec<_>>>()?;
    for v in &verdicts {
        let mut line = format!("row {}: {}", v.row, v.verdict);
        if let Some(w) = v.sdp.as_ref().and_then(|o| o.witness.as_ref()) {
            line += &format!(" (trial {}, witness value {:.3e}, {} solver iterations)", w.trial + 1, w.value, w.iterations);
        } else if let Some(o) = &v.sdp {
            line += &format!(" ({} trials, {} stalled)", o.trials_run, o.stalled);
        }
        println!("{line}");
    }
    let method = match &model {
        Some(m) => Method::of_model(m).as_str().to_string(),
        None => format!("SDP m={}", cfg.m),
    };
    io::write_json(&cfg.out, &DetectFile { method, verdicts })?;
    run.output_file(&cfg.out)?;
    run.finish()
}

/// Resolves, validates and runs one command.
pub fn run(cli: Cli) -> AppResult<Manifest> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&GenDataConfig::resolve(a)?),
        Command::Train(a) => cmd_train(&TrainConfig::resolve(a)?),
        Command::Eval(a) => cmd_eval(&EvalConfig::resolve(a)?),
        Command::Sweep(a) => cmd_sweep(&SweepConfig::resolve(a)?),
        Command::Detect(a) => cmd_detect(&DetectConfig::resolve(a)?),
    }
}
