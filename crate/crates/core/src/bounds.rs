//! Steerability bounds along one-parameter state families.
//!
//! A predictor is scanned along an ascending parameter grid; the bound is the
//! first grid value from which it predicts "steerable" (-1) for `window`
//! consecutive points. When that never happens the bound is the sentinel
//! `1.0` and the cell is marked not found.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::families::{isotropic, isotropic_threshold, partial_entangled, PartialEntParam};
use crate::features::extract;
use crate::learn::Model;
use crate::measure::{build_assemblage, mub_measurements};
use crate::qcore::DensityMatrix;
use crate::rng::{domain, Rng};
use crate::steersdp::{lhs_feasibility, sdp_label, steering_weight};

pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 3;
/// Bound reported when the predictor never flips.
pub const NO_FLIP: f64 = 1.0;
/// Grid points evaluated per parallel batch by the SDP scan.
const SCAN_BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Svm,
    Ann,
    Boost,
    Sdp,
    Sw,
    Theory,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Svm, Method::Ann, Method::Boost, Method::Sdp, Method::Sw, Method::Theory];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Svm => "SVM",
            Method::Ann => "ANN",
            Method::Boost => "BOOST",
            Method::Sdp => "SDP",
            Method::Sw => "SW",
            Method::Theory => "THEORY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    pub fn of_model(model: &Model) -> Self {
        match model {
            Model::Svm(_) => Method::Svm,
            Model::Ann(_) => Method::Ann,
            Model::Boost(_) => Method::Boost,
        }
    }
}

/// Anything that labels a state `-1` (steerable) or `+1`.
pub trait Predictor: Sync {
    fn predict_state(&self, rho: &DensityMatrix, index: u64) -> Result<i8>;
}

impl Predictor for Model {
    fn predict_state(&self, rho: &DensityMatrix, _index: u64) -> Result<i8> {
        self.predict(&extract(self.feature_kind(), rho)?)
    }
}

/// Wraps a closure as a [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F: Fn(&DensityMatrix) -> Result<i8> + Sync> Predictor for FnPredictor<F> {
    fn predict_state(&self, rho: &DensityMatrix, _index: u64) -> Result<i8> {
        (self.0)(rho)
    }
}

/// [`sdp_label`] with `m` random spin settings; grid point `index` draws its
/// settings from its own stream.
#[derive(Clone, Debug)]
pub struct SdpPredictor {
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Predictor for SdpPredictor {
    fn predict_state(&self, rho: &DensityMatrix, index: u64) -> Result<i8> {
        let mut rng = Rng::stream(self.seed, domain::SWEEP, ((self.m as u64) << 32) | index);
        Ok(sdp_label(rho, self.m, self.trials, &mut rng, self.tol)?.label)
    }
}

/// `0, step, 2·step, …` up to 1 inclusive.
pub fn unit_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::ParamOutOfRange("grid step must lie in (0, 1]".into()));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

/// First grid value starting a run of `window` steerable labels.
pub fn first_flip(grid: &[f64], labels: &[i8], window: usize) -> Option<f64> {
    let w = window.max(1);
    (0..labels.len()).find(|&i| i + w <= labels.len() && labels[i..i + w].iter().all(|&l| l == -1)).map(|i| grid[i])
}

/// Scans `family(grid[i])` in ascending order, evaluating batches in
/// parallel and stopping at the first sustained flip.
fn scan<E: ParMap, P: Predictor + ?Sized>(
    grid: &[f64],
    window: usize,
    exec: &E,
    predictor: &P,
    family: impl Fn(f64) -> Result<DensityMatrix> + Sync + Send,
) -> Result<Option<f64>> {
    let mut labels: Vec<i8> = Vec::with_capacity(grid.len());
    while labels.len() < grid.len() {
        let start = labels.len();
        let n = SCAN_BATCH.max(exec.workers()).min(grid.len() - start);
        let batch = exec.map(n, |i| family(grid[start + i]).and_then(|rho| predictor.predict_state(&rho, (start + i) as u64)));
        for l in batch {
            labels.push(l?);
        }
        if let Some(b) = first_flip(grid, &labels, window) {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Bound of one predictor per setting count (or one per model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub method: Method,
    /// Setting counts `m`, strictly increasing.
    pub grid: Vec<usize>,
    pub bounds: Vec<f64>,
    pub found: Vec<bool>,
    pub step: f64,
    pub window: usize,
}

impl BoundCurve {
    /// The exact isotropic threshold, constant in `m`.
    pub fn theory(ms: &[usize]) -> Self {
        Self {
            method: Method::Theory,
            grid: ms.to_vec(),
            bounds: alloc::vec![isotropic_threshold(); ms.len()],
            found: alloc::vec![true; ms.len()],
            step: 0.0,
            window: 0,
        }
    }
}

/// Isotropic bound of a single predictor.
pub fn isotropic_bound<E: ParMap, P: Predictor + ?Sized>(predictor: &P, step: f64, window: usize, exec: &E) -> Result<(f64, bool)> {
    let grid = unit_grid(step)?;
    let b = scan(&grid, window, exec, predictor, isotropic)?;
    Ok((b.unwrap_or(NO_FLIP), b.is_some()))
}

/// One curve over `m` from per-`m` predictors.
pub fn sweep_isotropic<E: ParMap, P: Predictor>(
    method: Method,
    predictors: &[(usize, P)],
    step: f64,
    window: usize,
    exec: &E,
) -> Result<BoundCurve> {
    if predictors.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::ParamOutOfRange("setting counts must be strictly increasing".into()));
    }
    let mut curve = BoundCurve { method, grid: Vec::new(), bounds: Vec::new(), found: Vec::new(), step, window };
    for (m, p) in predictors {
        let (b, found) = isotropic_bound(p, step, window, exec)?;
        curve.grid.push(*m);
        curve.bounds.push(b);
        curve.found.push(found);
    }
    Ok(curve)
}

/// SDP curve over `ms` with `trials` random spin draws per grid point.
pub fn sweep_isotropic_sdp<E: ParMap>(
    ms: &[usize],
    trials: usize,
    seed: u64,
    tol: f64,
    step: f64,
    window: usize,
    exec: &E,
) -> Result<BoundCurve> {
    let predictors: Vec<(usize, SdpPredictor)> = ms.iter().map(|&m| (m, SdpPredictor { m, trials, seed, tol })).collect();
    sweep_isotropic(Method::Sdp, &predictors, step, window, exec)
}

/// Bound surface over `(θ, φ)` for the partially entangled family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSurface {
    pub method: Method,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Row-major `theta × phi`.
    pub bounds: Vec<f64>,
    pub found: Vec<bool>,
    pub p_step: f64,
}

impl BoundSurface {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.bounds[i * self.phi.len() + j]
    }
}

fn check_axes(theta: &[f64], phi: &[f64]) -> Result<()> {
    if theta.is_empty() || phi.is_empty() {
        return Err(Error::ParamOutOfRange("empty angle grid".into()));
    }
    Ok(())
}

/// Scans `p` per cell for a sustained steerable prediction.
pub fn sweep_partial<E: ParMap, P: Predictor + ?Sized>(
    method: Method,
    predictor: &P,
    theta: &[f64],
    phi: &[f64],
    p_step: f64,
    window: usize,
    exec: &E,
) -> Result<BoundSurface> {
    check_axes(theta, phi)?;
    let grid = unit_grid(p_step)?;
    let cells = exec.map(theta.len() * phi.len(), |c| -> Result<Option<f64>> {
        let (t, f) = (theta[c / phi.len()], phi[c % phi.len()]);
        let labels = grid
            .iter()
            .map(|&p| predictor.predict_state(&partial_entangled(&PartialEntParam::new(p, t, f)?)?, 0))
            .collect::<Result<Vec<_>>>()?;
        Ok(first_flip(&grid, &labels, window))
    });
    surface(method, theta, phi, p_step, cells)
}

fn surface(method: Method, theta: &[f64], phi: &[f64], p_step: f64, cells: Vec<Result<Option<f64>>>) -> Result<BoundSurface> {
    let mut bounds = Vec::with_capacity(cells.len());
    let mut found = Vec::with_capacity(cells.len());
    for c in cells {
        let b = c?;
        bounds.push(b.unwrap_or(NO_FLIP));
        found.push(b.is_some());
    }
    Ok(BoundSurface { method, theta: theta.to_vec(), phi: phi.to_vec(), bounds, found, p_step })
}

/// Whether the partially entangled state has steering weight above `cutoff`
/// under the four MUB settings.
pub fn partial_sw_steerable(p: f64, theta: f64, phi: f64, cutoff: f64, tol: f64) -> Result<bool> {
    let rho = partial_entangled(&PartialEntParam::new(p, theta, phi)?)?;
    let asm = build_assemblage(&rho, &mub_measurements())?;
    match steering_weight(&asm, tol) {
        Ok(sw) => Ok(sw > cutoff),
        Err(Error::SolverStalled { .. }) => Ok(lhs_feasibility(&asm, tol)?.is_steerable()),
        Err(e) => Err(e),
    }
}

/// Steering-weight reference surface. For fixed angles the family is affine
/// in `p` and unsteerable at `p = 0`, so the steerable `p` form an interval
/// ending at 1 and each cell is bisected to `p_step`.
pub fn sweep_partial_sw<E: ParMap>(theta: &[f64], phi: &[f64], p_step: f64, cutoff: f64, tol: f64, exec: &E) -> Result<BoundSurface> {
    check_axes(theta, phi)?;
    if !(p_step > 0.0 && p_step <= 1.0) {
        return Err(Error::ParamOutOfRange("p_step must lie in (0, 1]".into()));
    }
    let cells = exec.map(theta.len() * phi.len(), |c| -> Result<Option<f64>> {
        let (t, f) = (theta[c / phi.len()], phi[c % phi.len()]);
        if !partial_sw_steerable(1.0, t, f, cutoff, tol)? {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > p_step {
            let mid = 0.5 * (lo + hi);
            if partial_sw_steerable(mid, t, f, cutoff, tol)? {
                hi = mid
            } else {
                lo = mid
            }
        }
        Ok(Some(hi))
    });
    surface(Method::Sw, theta, phi, p_step, cells)
}

/// One row of plot data: a curve point keyed by `m`, a surface cell keyed by
/// `(θ, φ)`, or the theory row with no key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub method: Method,
    pub m: Option<usize>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub bound: f64,
}

/// Flattens curves and surfaces in the given order. A theory curve
/// contributes a single unkeyed row.
pub fn plot_rows(curves: &[BoundCurve], surfaces: &[BoundSurface]) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for c in curves {
        if c.method == Method::Theory {
            rows.push(PlotRow { method: c.method, m: None, theta: None, phi: None, bound: isotropic_threshold() });
            continue;
        }
        for (&m, &b) in c.grid.iter().zip(&c.bounds) {
            rows.push(PlotRow { method: c.method, m: Some(m), theta: None, phi: None, bound: b });
        }
    }
    for s in surfaces {
        for (i, &t) in s.theta.iter().enumerate() {
            for (j, &f) in s.phi.iter().enumerate() {
                rows.push(PlotRow { method: s.method, m: None, theta: Some(t), phi: Some(f), bound: s.get(i, j) });
            }
        }
    }
    rows
}

/// Human-readable name of a curve, e.g. `SDP m=3`.
pub fn describe(method: Method, m: Option<usize>) -> String {
    match m {
        Some(m) => alloc::format!("{} m={m}", method.as_str()),
        None => String::from(method.as_str()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::steersdp::DEFAULT_TOL;

    #[test]
    fn flip_needs_a_full_window() {
        let grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(first_flip(&grid, &[1, -1, 1, -1, -1, -1], 3), Some(0.3));
        assert_eq!(first_flip(&grid, &[1, 1, 1, 1, -1, -1], 3), None);
        assert_eq!(first_flip(&grid, &[1, 1, 1, 1, -1, -1], 1), Some(0.4));
    }

    #[test]
    fn grid_includes_one() {
        let g = unit_grid(0.01).unwrap();
        assert_eq!(g.len(), 101);
        assert!((g[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_predictor_finds_exact_threshold() {
        let t = isotropic_threshold();
        // isotropic purity is eta^2 + (1 - eta^2) / 9
        let oracle = FnPredictor(|rho: &DensityMatrix| {
            let eta = ((9.0 * rho.purity() - 1.0) / 8.0).sqrt();
            Ok(if eta > t { -1 } else { 1 })
        });
        let (b, found) = isotropic_bound(&oracle, DEFAULT_STEP, DEFAULT_WINDOW, &Sequential).unwrap();
        assert!(found);
        assert!((b - t).abs() <= DEFAULT_STEP + 1e-12, "{b}");
    }

    #[test]
    fn never_steerable_predictor_reports_sentinel() {
        let p = FnPredictor(|_: &DensityMatrix| Ok(1));
        assert_eq!(isotropic_bound(&p, 0.1, 3, &Sequential).unwrap(), (NO_FLIP, false));
    }

    #[test]
    fn theory_is_a_single_row() {
        let rows = plot_rows(&[BoundCurve::theory(&[3, 4, 5])], &[]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bound, 5.0 / 12.0);
    }

    #[test]
    fn sw_surface_on_maximally_entangled_direction() {
        let phi = (1.0 / 3f64.sqrt()).acos();
        let s = sweep_partial_sw(&[core::f64::consts::FRAC_PI_4], &[phi], 0.01, 1e-6, DEFAULT_TOL, &Sequential).unwrap();
        // the maximally entangled direction reproduces the 4-MUB isotropic threshold
        assert!((s.bounds[0] - 0.4818).abs() < 0.01, "{}", s.bounds[0]);
        assert!(s.bounds[0] < 0.55);
    }

    #[test]
    fn figure_shaped_run_has_one_row_per_curve_point() {
        let ms = [3, 4, 5, 6, 7];
        let t = isotropic_threshold();
        let mut curves = alloc::vec![BoundCurve::theory(&ms)];
        for (method, shift) in [(Method::Svm, 0.05), (Method::Ann, 0.1), (Method::Boost, 0.0), (Method::Sdp, 0.02)] {
            let preds: Vec<_> = ms
                .iter()
                .map(|&m| {
                    let cut = t + shift + 0.01 * m as f64;
                    (m, FnPredictor(move |rho: &DensityMatrix| Ok(if (9.0 * rho.purity() - 1.0) / 8.0 > cut * cut { -1 } else { 1 })))
                })
                .collect();
            curves.push(sweep_isotropic(method, &preds, 0.05, 2, &Sequential).unwrap());
        }
        let rows = plot_rows(&curves, &[]);
        assert_eq!(rows.len(), 21);
        assert!(rows[1..].iter().all(|r| r.m.is_some() && r.bound >= t));
        assert!(plot_rows(&[], &[]).is_empty());
    }

    #[test]
    fn surface_has_grid_shape() {
        let always = FnPredictor(|_: &DensityMatrix| Ok(-1));
        let s = sweep_partial(Method::Svm, &always, &[0.0, 0.3, 0.6], &[0.0, 1.0], 0.1, 3, &Sequential).unwrap();
        assert_eq!((s.theta.len(), s.phi.len(), s.bounds.len()), (3, 2, 6));
        assert!(s.bounds.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn p_zero_is_never_steerable() {
        for (t, f) in [(0.0, 0.0), (0.4, 0.9), (core::f64::consts::FRAC_PI_4, 1.2)] {
            assert!(!partial_sw_steerable(0.0, t, f, 1e-6, DEFAULT_TOL).unwrap());
        }
    }

    #[test]
    fn sdp_bound_is_sound_and_stable_under_refinement() {
        let t = isotropic_threshold();
        let coarse = sweep_isotropic_sdp(&[2, 3], 4, 3, DEFAULT_TOL, 0.04, 3, &Sequential).unwrap();
        let fine = sweep_isotropic_sdp(&[2, 3], 4, 3, DEFAULT_TOL, 0.02, 3, &Sequential).unwrap();
        for i in 0..2 {
            assert!(coarse.bounds[i] >= t - 0.04 && fine.bounds[i] >= t - 0.02, "{coarse:?} {fine:?}");
            assert!(fine.bounds[i] >= coarse.bounds[i] - 0.04, "{coarse:?} {fine:?}");
        }
    }
}
