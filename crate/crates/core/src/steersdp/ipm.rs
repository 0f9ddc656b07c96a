//! Primal-dual interior-point solver for SDPs whose variables are many 3x3
//! Hermitian PSD blocks plus a few nonnegative scalars.
//!
//! Standard form: minimize `Σ_j <C_j, X_j> + Σ_s c_s x_s` subject to
//! `Σ_{j ∈ g} X_j + Σ_s x_s · A_{s,g} = B_g` for every constraint group `g`,
//! `X_j ⪰ 0`, `x_s ≥ 0`. Each group constrains a full 3x3 Hermitian matrix
//! (nine real equations). The dual is: maximize `Σ_g <B_g, Y_g>` subject to
//! `S_j = C_j - Σ_{g ∋ j} Y_g ⪰ 0` and `z_s = c_s - Σ_g <A_{s,g}, Y_g> ≥ 0`.
//!
//! Search direction: HKM with Mehrotra predictor-corrector, separate primal
//! and dual step lengths.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::qcore::{c, Mat3};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
const STEP_FRACTION: f64 = 0.95;

/// Real coordinates `Re tr(E_k P)` of a 3x3 matrix in an orthonormal basis
/// `E_0..E_8` of the Hermitian matrices: three diagonal units, three
/// symmetric and three antisymmetric off-diagonal pairs.
pub(crate) fn coords(p: &Mat3) -> [f64; 9] {
    let mut v = [0.0; 9];
    for k in 0..3 {
        v[k] = p[(k, k)].re;
    }
    for (n, &(i, j)) in PAIRS.iter().enumerate() {
        v[3 + n] = (p[(i, j)].re + p[(j, i)].re) / SQRT_2;
        v[6 + n] = (p[(i, j)].im - p[(j, i)].im) / SQRT_2;
    }
    v
}

/// Inverse of [`coords`] on Hermitian matrices.
pub(crate) fn from_coords(v: &[f64]) -> Mat3 {
    let mut h = Mat3::zeros();
    for k in 0..3 {
        h[(k, k)] = c(v[k], 0.0);
    }
    for (n, &(i, j)) in PAIRS.iter().enumerate() {
        let z = c(v[3 + n], v[6 + n]) / SQRT_2;
        h[(i, j)] = z;
        h[(j, i)] = z.conj();
    }
    h
}

fn basis() -> [Mat3; 9] {
    core::array::from_fn(|k| {
        let mut v = [0.0; 9];
        v[k] = 1.0;
        from_coords(&v)
    })
}

fn herm(p: &Mat3) -> Mat3 {
    (p + p.adjoint()) * c(0.5, 0.0)
}

fn inner(a: &Mat3, b: &Mat3) -> f64 {
    // Re tr(a b) for Hermitian a, b
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

fn frob2(a: &Mat3) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Minimum eigenvalue of a 3x3 Hermitian matrix from its characteristic
/// polynomial (trigonometric form).
pub(crate) fn min_eig_herm3(h: &Mat3) -> f64 {
    let a = h[(0, 0)].re;
    let b = h[(1, 1)].re;
    let d = h[(2, 2)].re;
    let p1 = h[(0, 1)].norm_sqr() + h[(0, 2)].norm_sqr() + h[(1, 2)].norm_sqr();
    let q = (a + b + d) / 3.0;
    if p1 == 0.0 {
        return a.min(b).min(d);
    }
    let p2 = (a - q).powi(2) + (b - q).powi(2) + (d - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let shifted = (h - Mat3::identity() * c(q, 0.0)) / c(p, 0.0);
    let r = (shifted.determinant().re / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * (phi + 2.0 * core::f64::consts::PI / 3.0).cos()
}

/// Block-structured SDP in standard form.
#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub groups: usize,
    /// CSR list of the groups each block belongs to.
    pub member_offsets: Vec<usize>,
    pub members: Vec<u32>,
    pub block_cost: Vec<Mat3>,
    /// Per scalar: coordinates of `A_{s,g}` for all groups (length `9 * groups`).
    pub scalar_coef: Vec<Vec<f64>>,
    pub scalar_cost: Vec<f64>,
    /// Coordinates of `B_g` (length `9 * groups`).
    pub rhs: Vec<f64>,
}

impl Problem {
    pub fn blocks(&self) -> usize {
        self.block_cost.len()
    }

    pub fn groups_of(&self, j: usize) -> &[u32] {
        &self.members[self.member_offsets[j]..self.member_offsets[j + 1]]
    }

    /// Group-wise sums of block coordinates (scalars excluded).
    fn apply_blocks(&self, blocks: &[Mat3]) -> Vec<f64> {
        let mut out = vec![0.0; 9 * self.groups];
        for (j, p) in blocks.iter().enumerate() {
            let v = coords(p);
            for &g in self.groups_of(j) {
                let dst = &mut out[9 * g as usize..9 * g as usize + 9];
                for k in 0..9 {
                    dst[k] += v[k];
                }
            }
        }
        out
    }

    fn adjoint_block(&self, ymats: &[Mat3], j: usize) -> Mat3 {
        self.groups_of(j).iter().fold(Mat3::zeros(), |acc, &g| acc + ymats[g as usize])
    }

    fn group_mats(&self, y: &[f64]) -> Vec<Mat3> {
        (0..self.groups).map(|g| from_coords(&y[9 * g..9 * g + 9])).collect()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Iterate {
    pub x: Vec<Mat3>,
    pub s: Vec<Mat3>,
    pub xs: Vec<f64>,
    pub zs: Vec<f64>,
    pub y: Vec<f64>,
}

impl Iterate {
    /// `X = S = scale·I`, unit scalars, `y = 0`.
    pub fn standard(p: &Problem, scale: f64) -> Self {
        let id = Mat3::identity() * c(scale, 0.0);
        Self {
            x: vec![id; p.blocks()],
            s: vec![id; p.blocks()],
            xs: vec![scale; p.scalar_cost.len()],
            zs: vec![scale; p.scalar_cost.len()],
            y: vec![0.0; 9 * p.groups],
        }
    }
}

/// Progress measures of an iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `‖B - A(X)‖ / (1 + ‖B‖)`.
    pub primal_infeasibility: f64,
    /// `‖C - A^T y - S‖ / (1 + ‖C‖)`.
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-9 }
    }
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<Mat3>,
    rds: Vec<f64>,
    stats: SolverStats,
    mu: f64,
}

struct Direction {
    dx: Vec<Mat3>,
    ds: Vec<Mat3>,
    dxs: Vec<f64>,
    dzs: Vec<f64>,
    dy: Vec<f64>,
}

enum SchurFactor {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let rhs = DVector::from_column_slice(b);
        let sol = match self {
            SchurFactor::Cholesky(ch) => Some(ch.solve(&rhs)),
            SchurFactor::Lu(lu) => lu.solve(&rhs),
        }?;
        if sol.iter().all(|v| v.is_finite()) {
            Some(sol.iter().copied().collect())
        } else {
            None
        }
    }
}

fn residuals(p: &Problem, it: &Iterate) -> Residuals {
    let mut rp = p.apply_blocks(&it.x);
    for (s, coef) in p.scalar_coef.iter().enumerate() {
        for (r, a) in rp.iter_mut().zip(coef) {
            *r += a * it.xs[s];
        }
    }
    for (r, b) in rp.iter_mut().zip(&p.rhs) {
        *r = b - *r;
    }
    let ymats = p.group_mats(&it.y);
    let rd: Vec<Mat3> = (0..p.blocks()).map(|j| p.block_cost[j] - p.adjoint_block(&ymats, j) - it.s[j]).collect();
    let rds: Vec<f64> = (0..p.scalar_cost.len())
        .map(|s| {
            let aty: f64 = p.scalar_coef[s].iter().zip(&it.y).map(|(a, y)| a * y).sum();
            p.scalar_cost[s] - aty - it.zs[s]
        })
        .collect();

    let pobj: f64 = (0..p.blocks()).map(|j| inner(&p.block_cost[j], &it.x[j])).sum::<f64>()
        + p.scalar_cost.iter().zip(&it.xs).map(|(c, x)| c * x).sum::<f64>();
    let dobj: f64 = p.rhs.iter().zip(&it.y).map(|(b, y)| b * y).sum();
    let comp: f64 =
        (0..p.blocks()).map(|j| inner(&it.x[j], &it.s[j])).sum::<f64>() + it.xs.iter().zip(&it.zs).map(|(x, z)| x * z).sum::<f64>();
    let n = (3 * p.blocks() + p.scalar_cost.len()) as f64;

    let norm_b = p.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_c = (p.block_cost.iter().map(frob2).sum::<f64>() + p.scalar_cost.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + norm_b);
    let dinf = (rd.iter().map(frob2).sum::<f64>() + rds.iter().map(|v| v * v).sum::<f64>()).sqrt() / (1.0 + norm_c);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Residuals {
        rp,
        rd,
        rds,
        stats: SolverStats {
            iterations: 0,
            primal_objective: pobj,
            dual_objective: dobj,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            relative_gap: gap,
            converged: false,
        },
        mu: comp / n,
    }
}

/// Largest `α ≤ 1/STEP_FRACTION`-scaled step keeping `m + α d ⪰ 0`, given the
/// inverse Cholesky factor of `m`.
fn max_step_block(linv: &Mat3, d: &Mat3) -> f64 {
    let scaled = linv * d * linv.adjoint();
    let lam = min_eig_herm3(&herm(&scaled));
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

fn max_step_scalar(x: f64, d: f64) -> f64 {
    if d < 0.0 {
        -x / d
    } else {
        f64::INFINITY
    }
}

fn chol_inverse(m: &Mat3) -> Option<Mat3> {
    // inverse of the lower Cholesky factor
    let ch = Cholesky::new(*m)?;
    ch.l().try_inverse()
}

/// Runs the solver from `start`. `stop` is consulted after each residual
/// evaluation and may end the run early (e.g. once a certificate is in hand).
pub(crate) fn solve(
    p: &Problem,
    start: Iterate,
    settings: Settings,
    mut stop: impl FnMut(&Iterate, &SolverStats) -> bool,
) -> (Iterate, SolverStats) {
    let nb = p.blocks();
    let ns = p.scalar_cost.len();
    let dim = 9 * p.groups;
    let basis = basis();
    let mut it = start;
    let mut last = residuals(p, &it).stats;

    for iter in 0..settings.max_iterations {
        let res = residuals(p, &it);
        let mut stats = res.stats;
        stats.iterations = iter;
        last = stats;
        if stats.primal_infeasibility < settings.tolerance
            && stats.dual_infeasibility < settings.tolerance
            && stats.relative_gap < settings.tolerance
        {
            last.converged = true;
            return (it, last);
        }
        if stop(&it, &stats) {
            return (it, last);
        }

        // Factorizations of the current blocks.
        let mut sinv = Vec::with_capacity(nb);
        let mut lx_inv = Vec::with_capacity(nb);
        let mut ls_inv = Vec::with_capacity(nb);
        let mut ok = true;
        for j in 0..nb {
            match (chol_inverse(&it.x[j]), chol_inverse(&it.s[j])) {
                (Some(lx), Some(ls)) => {
                    sinv.push(ls.adjoint() * ls);
                    lx_inv.push(lx);
                    ls_inv.push(ls);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        // Schur complement.
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..nb {
            let mut w = [[0.0f64; 9]; 9];
            let xj = &it.x[j];
            for (l, el) in basis.iter().enumerate() {
                let col = coords(&(xj * el * sinv[j]));
                for k in 0..9 {
                    w[k][l] = col[k];
                }
            }
            let gs = p.groups_of(j);
            for &g in gs {
                for &h in gs {
                    let (g0, h0) = (9 * g as usize, 9 * h as usize);
                    for k in 0..9 {
                        for l in 0..9 {
                            m[(g0 + k, h0 + l)] += w[k][l];
                        }
                    }
                }
            }
        }
        for s in 0..ns {
            let ratio = it.xs[s] / it.zs[s];
            let a = &p.scalar_coef[s];
            for r in 0..dim {
                if a[r] == 0.0 {
                    continue;
                }
                for q in 0..dim {
                    m[(r, q)] += ratio * a[r] * a[q];
                }
            }
        }
        let m = (&m + m.transpose()) * 0.5;
        let factor = match Cholesky::new(m.clone()) {
            Some(ch) => SchurFactor::Cholesky(ch),
            None => SchurFactor::Lu(m.lu()),
        };

        let direction = |k: &[Mat3], ks: &[f64]| -> Option<Direction> {
            let corr: Vec<Mat3> = (0..nb).map(|j| k[j] - it.x[j] * res.rd[j] * sinv[j]).collect();
            let mut rhs = p.apply_blocks(&corr);
            for s in 0..ns {
                let t = ks[s] - it.xs[s] / it.zs[s] * res.rds[s];
                for (r, a) in rhs.iter_mut().zip(&p.scalar_coef[s]) {
                    *r += a * t;
                }
            }
            for (r, rp) in rhs.iter_mut().zip(&res.rp) {
                *r = rp - *r;
            }
            let dy = factor.solve(&rhs)?;
            let dymats = p.group_mats(&dy);
            let ds: Vec<Mat3> = (0..nb).map(|j| res.rd[j] - p.adjoint_block(&dymats, j)).collect();
            let dx: Vec<Mat3> = (0..nb).map(|j| herm(&(k[j] - it.x[j] * ds[j] * sinv[j]))).collect();
            let dzs: Vec<f64> = (0..ns).map(|s| res.rds[s] - p.scalar_coef[s].iter().zip(&dy).map(|(a, v)| a * v).sum::<f64>()).collect();
            let dxs: Vec<f64> = (0..ns).map(|s| ks[s] - it.xs[s] / it.zs[s] * dzs[s]).collect();
            Some(Direction { dx, ds, dxs, dzs, dy })
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for j in 0..nb {
                ap = ap.min(max_step_block(&lx_inv[j], &d.dx[j]));
                ad = ad.min(max_step_block(&ls_inv[j], &d.ds[j]));
            }
            for s in 0..ns {
                ap = ap.min(max_step_scalar(it.xs[s], d.dxs[s]));
                ad = ad.min(max_step_scalar(it.zs[s], d.dzs[s]));
            }
            (ap, ad)
        };

        // Predictor.
        let k_aff: Vec<Mat3> = it.x.iter().map(|x| -x).collect();
        let ks_aff: Vec<f64> = it.xs.iter().map(|x| -x).collect();
        let Some(aff) = direction(&k_aff, &ks_aff) else { break };
        let (ap, ad) = steps(&aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut comp_aff = 0.0;
        for j in 0..nb {
            comp_aff += inner(&(it.x[j] + aff.dx[j] * c(ap, 0.0)), &(it.s[j] + aff.ds[j] * c(ad, 0.0)));
        }
        for s in 0..ns {
            comp_aff += (it.xs[s] + ap * aff.dxs[s]) * (it.zs[s] + ad * aff.dzs[s]);
        }
        let n = (3 * nb + ns) as f64;
        let mu = res.mu;
        let sigma = ((comp_aff / n) / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let smu = c(sigma * mu, 0.0);
        let k: Vec<Mat3> = (0..nb).map(|j| sinv[j] * smu - it.x[j] - aff.dx[j] * aff.ds[j] * sinv[j]).collect();
        let ks: Vec<f64> = (0..ns).map(|s| (sigma * mu - it.xs[s] * it.zs[s] - aff.dxs[s] * aff.dzs[s]) / it.zs[s]).collect();
        let Some(d) = direction(&k, &ks) else { break };
        let (ap, ad) = steps(&d);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        if !(ap > 1e-12 && ad > 1e-12) {
            break;
        }
        let (cap, cad) = (c(ap, 0.0), c(ad, 0.0));
        for j in 0..nb {
            it.x[j] = herm(&(it.x[j] + d.dx[j] * cap));
            it.s[j] = herm(&(it.s[j] + d.ds[j] * cad));
        }
        for s in 0..ns {
            it.xs[s] += ap * d.dxs[s];
            it.zs[s] += ad * d.dzs[s];
        }
        for (y, dy) in it.y.iter_mut().zip(&d.dy) {
            *y += ad * dy;
        }
    }
    let mut stats = residuals(p, &it).stats;
    stats.iterations = last.iterations + 1;
    stats.converged = stats.primal_infeasibility < settings.tolerance
        && stats.dual_infeasibility < settings.tolerance
        && stats.relative_gap < settings.tolerance;
    (it, stats)
}
