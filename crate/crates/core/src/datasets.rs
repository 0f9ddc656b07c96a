//! Labeled state collections and the feature datasets derived from them.
//!
//! Every generator first produces a [`StateSet`] (density matrices with
//! labels and family parameters); [`StateSet::dataset`] then extracts one
//! feature encoding. F1 and F2 datasets built from the same state set share
//! labels.
//!
//! Seeding: item `i` of a generator draws its state from
//! `Rng::stream(seed, domain::STATE, i)` and its measurement trials from
//! `Rng::stream(seed, domain::TRIALS, i)`, so output is independent of the
//! executor's worker count.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::families::{
    isotropic, isotropic_threshold, partial_entangled, product_pure, pure_entangled, random_density, random_density_rank, separable_mixed,
    werner, PartialEntParam, SEPARABLE_TERMS, WERNER_SEPARABLE_MAX,
};
use crate::features::{extract, FeatureKind};
use crate::measure::{build_assemblage, measurement_from_direction, mub_measurements, sample_directions, Direction};
use crate::qcore::{hermitian_eig, partial_trace_b, DensityMatrix};
use crate::rng::{domain, Rng};
use crate::steersdp::{lhs_feasibility, sdp_label, steering_weight, DEFAULT_TOL};

/// Items evaluated per parallel batch by the quota-filling generators.
pub const BATCH: usize = 64;
/// Reference value below which partially entangled states must be unsteerable.
pub const PARTIAL_UNSTEERABLE_P: f64 = 0.4818;
/// Steering-weight cutoff for the partially entangled labels.
pub const PARTIAL_SW_CUTOFF: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Random,
    RandomLowRank,
    Isotropic,
    Werner,
    PureEntangled,
    ProductPure,
    SeparableMixed,
    PartialEntangled,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Random,
        Family::RandomLowRank,
        Family::Isotropic,
        Family::Werner,
        Family::PureEntangled,
        Family::ProductPure,
        Family::SeparableMixed,
        Family::PartialEntangled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Random => "random",
            Family::RandomLowRank => "random_low_rank",
            Family::Isotropic => "isotropic",
            Family::Werner => "werner",
            Family::PureEntangled => "pure_entangled",
            Family::ProductPure => "product_pure",
            Family::SeparableMixed => "separable_mixed",
            Family::PartialEntangled => "partial_entangled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

/// One labeled state. `params` holds the family parameters:
/// isotropic `[eta]`, Werner `[p]`, partially entangled `[p, theta, phi]`,
/// SDP-labeled random `[rank, m, trials_run]`, others empty-padded zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct StateRecord {
    pub family: Family,
    pub params: [f64; 3],
    pub index: u64,
    pub label: i8,
    pub state: DensityMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    /// `random-sdp`, `accurate`, `isotropic` or `partial`.
    pub source: String,
    pub rule: String,
    pub master_seed: u64,
    pub m: Option<usize>,
    pub trials: Option<usize>,
    pub tol: f64,
    /// Items drawn, including discarded ones.
    pub draws: u64,
    pub stalled: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel: Option<RelabelStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    pub meta: SetMeta,
    pub records: Vec<StateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_kind: FeatureKind,
    pub k: usize,
    #[serde(flatten)]
    pub set: SetMeta,
    pub positives: usize,
    pub negatives: usize,
    /// States dropped because the feature is undefined for them.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub meta: DatasetMeta,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
}

impl SetMeta {
    /// Metadata for rows that do not come from an SDP labeler.
    pub fn new(source: &str, rule: &str, master_seed: u64) -> Self {
        Self { source: source.into(), rule: rule.into(), master_seed, m: None, trials: None, tol: 0.0, draws: 0, stalled: 0, relabel: None }
    }
}

impl LabeledDataset {
    /// Dataset with tallies filled in from `labels`.
    pub fn new(kind: FeatureKind, features: Vec<Vec<f64>>, labels: Vec<i8>, set: SetMeta) -> Result<Self> {
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let ds = Self {
            meta: DatasetMeta { feature_kind: kind, k: kind.len(), set, positives, negatives: labels.len() - positives, excluded: 0 },
            features,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    /// Checks row shapes, label values and metadata tallies.
    pub fn validate(&self) -> Result<()> {
        let k = self.meta.feature_kind.len();
        if self.meta.k != k {
            return Err(Error::ShapeMismatch(format!("metadata k = {} for {}", self.meta.k, self.meta.feature_kind.name())));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::ShapeMismatch("feature and label counts differ".into()));
        }
        if let Some(row) = self.features.iter().find(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!("row of length {} in a {k}-feature dataset", row.len())));
        }
        if self.labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::InvalidState("labels must be -1 or 1".into()));
        }
        if self.counts() != (self.meta.positives, self.meta.negatives) {
            return Err(Error::InvalidState("class counts disagree with metadata".into()));
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        let features: Vec<Vec<f64>> = rows.iter().map(|&r| self.features[r].clone()).collect();
        let labels: Vec<i8> = rows.iter().map(|&r| self.labels[r]).collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        let mut meta = self.meta.clone();
        meta.positives = pos;
        meta.negatives = labels.len() - pos;
        LabeledDataset { meta, features, labels }
    }
}

fn evenly_spaced(count: usize, keep: usize) -> Vec<usize> {
    // `keep` of `0..count`, spread uniformly, in increasing order
    (0..keep).map(|r| r * count / keep).collect()
}

impl StateSet {
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.records.iter().filter(|r| r.label == 1).count();
        (pos, self.records.len() - pos)
    }

    /// Feature dataset of this set. States for which the encoding is
    /// undefined are excluded; if that unbalances a balanced set, the
    /// majority class is thinned evenly (in record order) back to balance.
    pub fn dataset(&self, kind: FeatureKind) -> Result<LabeledDataset> {
        let balanced = {
            let (p, n) = self.counts();
            p == n
        };
        let mut rows = Vec::with_capacity(self.records.len());
        let mut excluded = 0;
        for r in &self.records {
            match extract(kind, &r.state) {
                Ok(fv) => rows.push((fv.values, r.label)),
                Err(Error::FilterSingular(_)) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
        if balanced && excluded > 0 {
            let pos: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 == 1).collect();
            let neg: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 == -1).collect();
            let keep = pos.len().min(neg.len());
            let mut chosen: Vec<usize> = evenly_spaced(pos.len(), keep)
                .into_iter()
                .map(|r| pos[r])
                .chain(evenly_spaced(neg.len(), keep).into_iter().map(|r| neg[r]))
                .collect();
            chosen.sort_unstable();
            excluded += rows.len() - chosen.len();
            rows = chosen.into_iter().map(|i| core::mem::take(&mut rows[i])).collect();
        }
        let (features, labels): (Vec<Vec<f64>>, Vec<i8>) = rows.into_iter().unzip();
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let ds = LabeledDataset {
            meta: DatasetMeta {
                feature_kind: kind,
                k: kind.len(),
                set: self.meta.clone(),
                positives,
                negatives: labels.len() - positives,
                excluded,
            },
            features,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Settings of the SDP-labeled random-state generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSdpConfig {
    pub m: usize,
    pub positives: usize,
    pub negatives: usize,
    pub master_seed: u64,
    pub trials: usize,
    pub tol: f64,
    /// Environment dimension of the induced measure; 9 gives full-rank states.
    pub rank: usize,
    /// Stop after this many draws even if the quotas are unmet.
    pub max_draws: Option<u64>,
}

impl RandomSdpConfig {
    pub fn new(m: usize, positives: usize, negatives: usize, master_seed: u64) -> Self {
        Self { m, positives, negatives, master_seed, trials: crate::steersdp::DEFAULT_TRIALS, tol: DEFAULT_TOL, rank: 9, max_draws: None }
    }

    pub fn rule(&self) -> String {
        format!("sdp-spin-m{}-t{}-rank{}", self.m, self.trials, self.rank)
    }
}

/// Result of a quota-filling generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub set: StateSet,
    /// Whether both class quotas were met.
    pub complete: bool,
    /// Labels observed over all draws, before quota discards.
    pub seen_positive: u64,
    pub seen_negative: u64,
}

/// Evaluates items in fixed-size batches and accepts them in index order
/// until both quotas are filled.
fn fill_quotas<E: ParMap>(
    exec: &E,
    positives: usize,
    negatives: usize,
    max_draws: Option<u64>,
    item: impl Fn(u64) -> Result<(StateRecord, bool)> + Sync + Send,
) -> Result<(Vec<StateRecord>, u64, u64, u64, u64, bool)> {
    let mut records = Vec::with_capacity(positives + negatives);
    let (mut pos, mut neg) = (0usize, 0usize);
    let (mut seen_pos, mut seen_neg, mut stalled) = (0u64, 0u64, 0u64);
    let mut next = 0u64;
    loop {
        if pos >= positives && neg >= negatives {
            return Ok((records, next, seen_pos, seen_neg, stalled, true));
        }
        let mut batch = BATCH as u64;
        if let Some(cap) = max_draws {
            if next >= cap {
                return Ok((records, next, seen_pos, seen_neg, stalled, false));
            }
            batch = batch.min(cap - next);
        }
        let start = next;
        let results = exec.map(batch as usize, |i| item(start + i as u64));
        for res in results {
            let (rec, stall) = res?;
            next += 1;
            stalled += stall as u64;
            if rec.label == 1 {
                seen_pos += 1;
                if pos < positives {
                    pos += 1;
                    records.push(rec);
                }
            } else {
                seen_neg += 1;
                if neg < negatives {
                    neg += 1;
                    records.push(rec);
                }
            }
            if pos >= positives && neg >= negatives {
                return Ok((records, next, seen_pos, seen_neg, stalled, true));
            }
        }
    }
}

/// Random states labeled by [`sdp_label`] with `m` random spin settings.
pub fn gen_random_sdp_states<E: ParMap>(cfg: &RandomSdpConfig, exec: &E) -> Result<Generated> {
    if !(1..=crate::steersdp::MAX_SETTINGS).contains(&cfg.m) {
        return Err(Error::TooManySettings(cfg.m));
    }
    if cfg.positives == 0 || cfg.negatives == 0 || cfg.trials == 0 {
        return Err(Error::ParamOutOfRange("class targets and trials must be positive".into()));
    }
    let item = |index: u64| -> Result<(StateRecord, bool)> {
        let mut srng = Rng::stream(cfg.master_seed, domain::STATE, index);
        let state = if cfg.rank == 9 { random_density(&mut srng) } else { random_density_rank(&mut srng, cfg.rank)? };
        let mut trng = Rng::stream(cfg.master_seed, domain::TRIALS, index);
        let out = sdp_label(&state, cfg.m, cfg.trials, &mut trng, cfg.tol)?;
        Ok((
            StateRecord {
                family: Family::Random,
                params: [cfg.rank as f64, cfg.m as f64, out.trials_run as f64],
                index,
                label: out.label,
                state,
            },
            out.stalled > 0,
        ))
    };
    let (records, draws, seen_positive, seen_negative, stalled, complete) =
        fill_quotas(exec, cfg.positives, cfg.negatives, cfg.max_draws, item)?;
    Ok(Generated {
        set: StateSet {
            meta: SetMeta {
                source: "random-sdp".into(),
                rule: cfg.rule(),
                master_seed: cfg.master_seed,
                m: Some(cfg.m),
                trials: Some(cfg.trials),
                tol: cfg.tol,
                draws,
                stalled,
                relabel: None,
            },
            records,
        },
        complete,
        seen_positive,
        seen_negative,
    })
}

/// Outcome of re-labeling a subsample of an SDP-labeled set with fresh
/// measurement draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelStats {
    pub fraction: f64,
    pub seed: u64,
    pub sampled: usize,
    /// Stored -1 rows whose certificate could not be reproduced. Always 0
    /// for a sound labeler.
    pub steerable_lost: usize,
    /// Stored -1 rows for which the fresh draws alone found no certificate.
    pub fresh_misses: usize,
    /// Stored +1 rows for which the fresh draws found a certificate.
    pub unsteerable_flipped: usize,
}

/// Re-labels `max(1, round(fraction·n))` rows chosen by `seed`. A stored -1
/// keeps its label when either its original draws or the fresh ones yield
/// a certificate.
pub fn relabel_subsample<E: ParMap>(set: &StateSet, fraction: f64, seed: u64, exec: &E) -> Result<RelabelStats> {
    let (Some(m), Some(trials)) = (set.meta.m, set.meta.trials) else {
        return Err(Error::ParamOutOfRange("re-labeling needs an SDP-labeled set".into()));
    };
    if !(fraction > 0.0 && fraction <= 1.0) || set.records.is_empty() {
        return Err(Error::ParamOutOfRange("fraction must lie in (0, 1] and the set must be non-empty".into()));
    }
    let n = set.records.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::stream(seed, domain::RELABEL, u64::MAX);
    for i in 0..k {
        let j = i + rng.below(n - i);
        order.swap(i, j);
    }
    let mut sample = order[..k].to_vec();
    sample.sort_unstable();
    let tol = set.meta.tol;
    let results = exec.map(k, |i| -> Result<(i8, i8, bool)> {
        let rec = &set.records[sample[i]];
        let mut fresh = Rng::stream(seed, domain::RELABEL, rec.index);
        let fresh_label = sdp_label(&rec.state, m, trials, &mut fresh, tol)?.label;
        let reproduced = rec.label == -1 && {
            let mut orig = Rng::stream(set.meta.master_seed, domain::TRIALS, rec.index);
            sdp_label(&rec.state, m, trials, &mut orig, tol)?.label == -1
        };
        Ok((rec.label, fresh_label, reproduced))
    });
    let mut stats = RelabelStats { fraction, seed, sampled: k, steerable_lost: 0, fresh_misses: 0, unsteerable_flipped: 0 };
    for r in results {
        let (stored, fresh, reproduced) = r?;
        match (stored, fresh) {
            (-1, 1) => {
                stats.fresh_misses += 1;
                if !reproduced {
                    stats.steerable_lost += 1;
                }
            }
            (1, -1) => stats.unsteerable_flipped += 1,
            _ => {}
        }
    }
    Ok(stats)
}

/// [`gen_random_sdp_states`] followed by feature extraction.
pub fn gen_random_sdp<E: ParMap>(cfg: &RandomSdpConfig, kind: FeatureKind, exec: &E) -> Result<LabeledDataset> {
    gen_random_sdp_states(cfg, exec)?.set.dataset(kind)
}

/// Validated Werner parameter ranges (antisymmetric weight `p`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WernerRanges {
    /// Separable, hence unsteerable: `[0, unsteerable_max]`.
    pub unsteerable_max: f64,
    /// Certified steerable: `[steerable_min, 1]`.
    pub steerable_min: f64,
    /// Spin directions under which `steerable_min` carries a certificate.
    pub directions: Vec<Direction>,
}

/// Number of spin settings used to certify Werner steerability.
pub const WERNER_SETTINGS: usize = 5;
const WERNER_SEARCH_DRAWS: u64 = 200;
const WERNER_BISECTIONS: usize = 20;

fn werner_certified(p: f64, directions: &[Direction], tol: f64) -> Result<bool> {
    let ms = directions.iter().map(measurement_from_direction).collect::<Result<Vec<_>>>()?;
    let asm = build_assemblage(&werner(p)?, &ms)?;
    match lhs_feasibility(&asm, tol) {
        Ok(v) => Ok(v.is_steerable()),
        Err(Error::SolverStalled { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Finds spin settings certifying the fully antisymmetric Werner state,
/// then bisects for the smallest certified `p` under those settings.
///
/// The family is affine in `p` and LHS-feasible at `p = 1/3`, so for fixed
/// measurements the LHS-feasible set of `p` is an interval containing `1/3`:
/// a certificate at `p` certifies every larger `p` as well.
pub fn validate_werner_ranges(master_seed: u64, tol: f64) -> Result<WernerRanges> {
    let mut found = None;
    for draw in 0..WERNER_SEARCH_DRAWS {
        let mut rng = Rng::stream(master_seed, domain::PARAMS, draw);
        let dirs = sample_directions(&mut rng, WERNER_SETTINGS);
        if werner_certified(1.0, &dirs, tol)? {
            found = Some(dirs);
            break;
        }
    }
    let directions = found.ok_or_else(|| Error::ClassGenerationFailed("no certificate for the antisymmetric Werner state".into()))?;
    let (mut lo, mut hi) = (WERNER_SEPARABLE_MAX, 1.0);
    for _ in 0..WERNER_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if werner_certified(mid, &directions, tol)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if !(hi > WERNER_SEPARABLE_MAX) {
        return Err(Error::ClassGenerationFailed("empty steerable Werner range".into()));
    }
    Ok(WernerRanges { unsteerable_max: WERNER_SEPARABLE_MAX, steerable_min: hi, directions })
}

/// Settings of the accurately labeled generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccurateConfig {
    pub master_seed: u64,
    pub per_class: usize,
    /// Settings and trials used to certify the random steerable class.
    pub random_m: usize,
    pub random_trials: usize,
    pub tol: f64,
}

impl AccurateConfig {
    pub fn new(master_seed: u64, per_class: usize) -> Self {
        Self { master_seed, per_class, random_m: 3, random_trials: 25, tol: DEFAULT_TOL }
    }
}

pub const ACCURATE_RULE: &str = "theory-v1";
/// Induced-measure ranks drawn for the certified random steerable class.
pub const LOW_RANKS: [usize; 3] = [2, 3, 4];
const LOW_RANK_ATTEMPTS: usize = 1000;

/// The eight accurately labeled classes, in generation order.
pub const ACCURATE_CLASSES: [(Family, i8); 8] = [
    (Family::PureEntangled, -1),
    (Family::Isotropic, -1),
    (Family::Werner, -1),
    (Family::RandomLowRank, -1),
    (Family::ProductPure, 1),
    (Family::SeparableMixed, 1),
    (Family::Werner, 1),
    (Family::Isotropic, 1),
];

fn accurate_item(cfg: &AccurateConfig, werner_ranges: &WernerRanges, class: usize, index: u64) -> Result<StateRecord> {
    let (family, label) = ACCURATE_CLASSES[class];
    let mut rng = Rng::stream(cfg.master_seed, domain::STATE, index);
    let threshold = isotropic_threshold();
    let (state, params) = match (family, label) {
        (Family::PureEntangled, _) => {
            let s = pure_entangled(&mut rng);
            let purity = partial_trace_b(&s)?.purity();
            (s, [purity, 0.0, 0.0])
        }
        (Family::Isotropic, -1) => {
            let eta = rng.uniform_left_open(threshold, 1.0);
            (isotropic(eta)?, [eta, 0.0, 0.0])
        }
        (Family::Isotropic, _) => {
            let eta = rng.uniform(0.0, 1.0) * threshold;
            (isotropic(eta)?, [eta, 0.0, 0.0])
        }
        (Family::Werner, -1) => {
            let p = werner_ranges.steerable_min + rng.uniform(0.0, 1.0) * (1.0 - werner_ranges.steerable_min);
            (werner(p)?, [p, 0.0, 0.0])
        }
        (Family::Werner, _) => {
            let p = rng.uniform(0.0, 1.0) * werner_ranges.unsteerable_max;
            (werner(p)?, [p, 0.0, 0.0])
        }
        (Family::RandomLowRank, _) => {
            let mut trng = Rng::stream(cfg.master_seed, domain::TRIALS, index);
            let mut accepted = None;
            for _ in 0..LOW_RANK_ATTEMPTS {
                let rank = LOW_RANKS[rng.below(LOW_RANKS.len())];
                let s = random_density_rank(&mut rng, rank)?;
                let out = sdp_label(&s, cfg.random_m, cfg.random_trials, &mut trng, cfg.tol)?;
                if out.label == -1 {
                    accepted = Some((s, [rank as f64, cfg.random_m as f64, out.trials_run as f64]));
                    break;
                }
            }
            accepted.ok_or_else(|| Error::ClassGenerationFailed("no certified random steerable state".into()))?
        }
        (Family::ProductPure, _) => (product_pure(&mut rng), [0.0; 3]),
        (Family::SeparableMixed, _) => (separable_mixed(&mut rng, SEPARABLE_TERMS)?, [SEPARABLE_TERMS as f64, 0.0, 0.0]),
        _ => unreachable!("not an accurate class"),
    };
    Ok(StateRecord { family, params, index, label, state })
}

/// Eight classes of `per_class` states each with labels known from theory or
/// from SDP certificates.
pub fn gen_accurate_states<E: ParMap>(cfg: &AccurateConfig, exec: &E) -> Result<(StateSet, WernerRanges)> {
    if cfg.per_class == 0 {
        return Err(Error::ParamOutOfRange("per_class must be positive".into()));
    }
    let ranges = validate_werner_ranges(cfg.master_seed, cfg.tol)?;
    let n = ACCURATE_CLASSES.len() * cfg.per_class;
    let records = exec
        .map(n, |i| {
            let class = i / cfg.per_class;
            let index = ((class as u64) << 32) | (i % cfg.per_class) as u64;
            accurate_item(cfg, &ranges, class, index)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let meta = SetMeta {
        source: "accurate".into(),
        rule: ACCURATE_RULE.into(),
        master_seed: cfg.master_seed,
        m: None,
        trials: Some(cfg.random_trials),
        tol: cfg.tol,
        draws: n as u64,
        stalled: 0,
        relabel: None,
    };
    Ok((StateSet { meta, records }, ranges))
}

pub fn gen_accurate<E: ParMap>(cfg: &AccurateConfig, kind: FeatureKind, exec: &E) -> Result<LabeledDataset> {
    gen_accurate_states(cfg, exec)?.0.dataset(kind)
}

/// Re-derives the label of an accurate-set record from its family
/// parameters and the state itself. Returns the derived label.
pub fn audit_label(rec: &StateRecord, ranges: &WernerRanges, cfg: &AccurateConfig) -> Result<i8> {
    let threshold = isotropic_threshold();
    let label = match rec.family {
        Family::Isotropic => {
            if isotropic(rec.params[0])? != rec.state {
                return Err(Error::InvalidState("isotropic parameters do not reproduce the state".into()));
            }
            if rec.params[0] > threshold {
                -1
            } else {
                1
            }
        }
        Family::Werner => {
            if werner(rec.params[0])? != rec.state {
                return Err(Error::InvalidState("Werner parameters do not reproduce the state".into()));
            }
            let p = rec.params[0];
            if p >= ranges.steerable_min {
                -1
            } else if p <= ranges.unsteerable_max {
                1
            } else {
                return Err(Error::InvalidState(format!("Werner p = {p} lies in the unvalidated gap")));
            }
        }
        Family::PureEntangled => {
            if rec.state.purity() < 1.0 - 1e-10 {
                return Err(Error::InvalidState("entangled-pure record is not pure".into()));
            }
            if partial_trace_b(&rec.state)?.purity() < 1.0 - 1e-8 {
                -1
            } else {
                1
            }
        }
        Family::ProductPure | Family::SeparableMixed | Family::Random => {
            // separable states have a positive partial transpose
            let pt = rec.state.partial_transpose_b()?;
            if hermitian_eig(&pt)?.0[0] >= -1e-10 {
                1
            } else {
                -1
            }
        }
        Family::RandomLowRank => {
            let mut trng = Rng::stream(cfg.master_seed, domain::TRIALS, rec.index);
            sdp_label(&rec.state, cfg.random_m, cfg.random_trials * LOW_RANK_ATTEMPTS, &mut trng, cfg.tol)?.label
        }
        Family::PartialEntangled => partial_label(&PartialEntParam::new(rec.params[0], rec.params[1], rec.params[2])?, cfg.tol)?,
    };
    Ok(label)
}

/// `n_each` isotropic states per class: `eta` uniform on `[0, 5/12]` (+1)
/// and on `(5/12, 1]` (-1).
pub fn gen_isotropic_states<E: ParMap>(n_each: usize, master_seed: u64, exec: &E) -> Result<StateSet> {
    if n_each == 0 {
        return Err(Error::ParamOutOfRange("n_each must be positive".into()));
    }
    let threshold = isotropic_threshold();
    let records = exec
        .map(2 * n_each, |i| {
            let index = i as u64;
            let mut rng = Rng::stream(master_seed, domain::STATE, index);
            let (eta, label) =
                if i < n_each { (rng.uniform(0.0, 1.0) * threshold, 1) } else { (rng.uniform_left_open(threshold, 1.0), -1) };
            isotropic(eta).map(|state| StateRecord { family: Family::Isotropic, params: [eta, 0.0, 0.0], index, label, state })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(StateSet {
        meta: SetMeta {
            source: "isotropic".into(),
            rule: "isotropic-threshold".into(),
            master_seed,
            m: None,
            trials: None,
            tol: 0.0,
            draws: 2 * n_each as u64,
            stalled: 0,
            relabel: None,
        },
        records,
    })
}

pub fn gen_isotropic_testset<E: ParMap>(n_each: usize, master_seed: u64, kind: FeatureKind, exec: &E) -> Result<LabeledDataset> {
    gen_isotropic_states(n_each, master_seed, exec)?.dataset(kind)
}

/// Label of a partially entangled state: -1 iff its steering weight under
/// the four MUB settings exceeds [`PARTIAL_SW_CUTOFF`].
pub fn partial_label(param: &PartialEntParam, tol: f64) -> Result<i8> {
    let state = partial_entangled(param)?;
    let asm = build_assemblage(&state, &mub_measurements())?;
    let sw = match steering_weight(&asm, tol) {
        Ok(sw) => sw,
        // fall back on the certified feasibility verdict
        Err(Error::SolverStalled { .. }) => {
            if lhs_feasibility(&asm, tol)?.is_steerable() {
                1.0
            } else {
                0.0
            }
        }
        Err(e) => return Err(e),
    };
    Ok(if sw > PARTIAL_SW_CUTOFF { -1 } else { 1 })
}

/// Partially entangled states with `(p, theta, phi)` uniform on
/// `[0,1] x [0,π/4] x [0,π/2]`, accepted in draw order until each class
/// holds `n_each` states.
pub fn gen_partial_states<E: ParMap>(n_each: usize, master_seed: u64, tol: f64, max_draws: Option<u64>, exec: &E) -> Result<Generated> {
    if n_each == 0 {
        return Err(Error::ParamOutOfRange("n_each must be positive".into()));
    }
    let item = |index: u64| -> Result<(StateRecord, bool)> {
        let mut rng = Rng::stream(master_seed, domain::STATE, index);
        let p = rng.uniform(0.0, 1.0);
        let theta = rng.uniform(0.0, core::f64::consts::FRAC_PI_4);
        let phi = rng.uniform(0.0, core::f64::consts::FRAC_PI_2);
        let param = PartialEntParam::new(p, theta, phi)?;
        let label = partial_label(&param, tol)?;
        if p < PARTIAL_UNSTEERABLE_P && label == -1 {
            return Err(Error::InvalidState(format!("partially entangled state with p = {p} < {PARTIAL_UNSTEERABLE_P} labeled steerable")));
        }
        Ok((
            StateRecord { family: Family::PartialEntangled, params: [p, theta, phi], index, label, state: partial_entangled(&param)? },
            false,
        ))
    };
    let (records, draws, seen_positive, seen_negative, stalled, complete) = fill_quotas(exec, n_each, n_each, max_draws, item)?;
    Ok(Generated {
        set: StateSet {
            meta: SetMeta {
                source: "partial".into(),
                rule: "partial-sw-mub4".into(),
                master_seed,
                m: Some(4),
                trials: None,
                tol,
                draws,
                stalled,
                relabel: None,
            },
            records,
        },
        complete,
        seen_positive,
        seen_negative,
    })
}

pub fn gen_partial_testset<E: ParMap>(n_each: usize, master_seed: u64, kind: FeatureKind, exec: &E) -> Result<LabeledDataset> {
    gen_partial_states(n_each, master_seed, DEFAULT_TOL, None, exec)?.set.dataset(kind)
}

/// Label statistics of a family of records (used in reports).
pub fn family_counts(set: &StateSet) -> Vec<(String, i8, usize)> {
    let mut out: Vec<(String, i8, usize)> = Vec::new();
    for r in &set.records {
        let name = r.family.as_str().to_string();
        match out.iter_mut().find(|(f, l, _)| *f == name && *l == r.label) {
            Some(entry) => entry.2 += 1,
            None => out.push((name, r.label, 1)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    #[test]
    fn random_sdp_is_deterministic_and_balanced() {
        let mut cfg = RandomSdpConfig::new(3, 2, 2, 7);
        cfg.rank = 3;
        cfg.trials = 10;
        let a = gen_random_sdp_states(&cfg, &Sequential).unwrap();
        let b = gen_random_sdp_states(&cfg, &Sequential).unwrap();
        assert!(a.complete);
        assert_eq!(a.set, b.set);
        assert_eq!(a.set.counts(), (2, 2));
        let ds = a.set.dataset(FeatureKind::F2).unwrap();
        assert_eq!(ds.len(), 4);
        ds.validate().unwrap();
    }

    #[test]
    fn relabeling_never_loses_a_certificate() {
        let mut cfg = RandomSdpConfig::new(3, 4, 4, 21);
        cfg.rank = 4;
        cfg.trials = 10;
        let g = gen_random_sdp_states(&cfg, &Sequential).unwrap();
        let stats = relabel_subsample(&g.set, 1.0, 5, &Sequential).unwrap();
        assert_eq!(stats.sampled, 8);
        assert_eq!(stats.steerable_lost, 0);
        assert!(stats.fresh_misses <= 4 && stats.unsteerable_flipped <= 4);
        assert_eq!(relabel_subsample(&g.set, 0.01, 5, &Sequential).unwrap().sampled, 1);
        let iso = gen_isotropic_states(2, 1, &Sequential).unwrap();
        assert!(relabel_subsample(&iso, 0.5, 5, &Sequential).is_err());
    }

    #[test]
    fn draw_budget_stops_generation() {
        let mut cfg = RandomSdpConfig::new(3, 5, 5, 1);
        cfg.trials = 2;
        cfg.max_draws = Some(10);
        let g = gen_random_sdp_states(&cfg, &Sequential).unwrap();
        assert!(!g.complete);
        assert_eq!(g.set.meta.draws, 10);
    }

    #[test]
    fn werner_ranges_are_certified() {
        let r = validate_werner_ranges(1, DEFAULT_TOL).unwrap();
        assert!(r.steerable_min > WERNER_SEPARABLE_MAX && r.steerable_min < 1.0);
        assert!(werner_certified(r.steerable_min, &r.directions, DEFAULT_TOL).unwrap());
        std::println!("werner steerable from p = {}", r.steerable_min);
    }

    #[test]
    fn isotropic_testset_labels() {
        let set = gen_isotropic_states(20, 3, &Sequential).unwrap();
        let t = isotropic_threshold();
        for r in &set.records {
            assert_eq!(r.label == -1, r.params[0] > t);
        }
        assert_eq!(set.counts(), (20, 20));
    }

    #[test]
    fn accurate_set_audits() {
        let cfg = AccurateConfig::new(5, 3);
        let (set, ranges) = gen_accurate_states(&cfg, &Sequential).unwrap();
        assert_eq!(set.counts(), (12, 12));
        for r in &set.records {
            assert_eq!(audit_label(r, &ranges, &cfg).unwrap(), r.label, "{:?}", r.family);
        }
        let f2 = set.dataset(FeatureKind::F2).unwrap();
        // product pure states have no F2; the set is rebalanced
        assert_eq!(f2.counts(), (9, 9));
        assert_eq!(f2.meta.excluded, 6);
    }

    #[test]
    fn partial_labels_respect_reference_region() {
        let g = gen_partial_states(3, 4, DEFAULT_TOL, None, &Sequential).unwrap();
        assert!(g.complete);
        for r in &g.set.records {
            if r.params[0] < PARTIAL_UNSTEERABLE_P {
                assert_eq!(r.label, 1);
            }
        }
    }
}
