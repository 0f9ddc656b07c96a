//! Complex linear algebra and two-qutrit state algebra.
//!
//! Index convention for the 9-dimensional space: basis state `|i, j>` (Alice
//! `i`, Bob `j`) sits at row `3 * i + j`.
//!
//! Gell-Mann ordering used throughout (indices 1..=8, index 0 is the 3x3
//! identity): three symmetric off-diagonal matrices for the pairs (0,1),
//! (0,2), (1,2); the three antisymmetric ones for the same pairs; then
//! `diag(1,-1,0)` and `diag(1,1,-2)/sqrt(3)`. Every `a'`, `b`, `T` component
//! in this crate refers to this order.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
/// Dense complex matrix, any shape.
pub type ComplexMatrix = DMatrix<C64>;
/// Fixed 3x3 complex matrix (single-qutrit operators).
pub type Mat3 = Matrix3<C64>;
/// Real 8x8 matrix (Gell-Mann correlation tensors).
pub type Real8 = SMatrix<f64, 8, 8>;
pub type Vec8 = SVector<f64, 8>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
/// Default eigenvalue cutoff for [`inv_sqrt_psd`].
pub const SINGULAR_EPS: f64 = 1e-8;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entrywise modulus of `m - m^dagger`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(m + m^dagger) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

fn sorted_eigen(eig: SymmetricEigen<C64, nalgebra::Dyn>) -> (Vec<f64>, ComplexMatrix) {
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, unit
/// eigenvectors in the matching columns.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if h.nrows() != h.ncols() {
        return Err(Error::ShapeMismatch(format!("eigendecomposition of a {}x{} matrix", h.nrows(), h.ncols())));
    }
    let dev = hermitian_deviation(h);
    if !(dev <= 1e-10) {
        return Err(Error::NonHermitian(dev));
    }
    let eig =
        SymmetricEigen::try_new(hermitian_part(h), EIG_EPS, EIG_MAX_ITER).ok_or(Error::NoConvergence("hermitian eigendecomposition"))?;
    Ok(sorted_eigen(eig))
}

pub(crate) fn eigenvalues_unchecked(h: &ComplexMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues (ascending) and eigenvectors of a 3x3 Hermitian matrix; the
/// input is assumed Hermitian.
pub fn eig3(h: &Mat3) -> ([f64; 3], Mat3) {
    let eig = SymmetricEigen::new((h + h.adjoint()) * c(0.5, 0.0));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]];
    let vecs = Mat3::from_fn(|r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

/// Smallest eigenvalue of a 3x3 Hermitian matrix.
pub fn min_eig3(h: &Mat3) -> f64 {
    let vals = ((h + h.adjoint()) * c(0.5, 0.0)).symmetric_eigenvalues();
    vals.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Thin SVD of a real 8x8 matrix, `a = o1 * diag(s) * o2^T`.
///
/// Singular values come back descending. Sign convention: each column of
/// `o1` has its largest-magnitude entry positive (ties go to the lowest row
/// index); the matching column of `o2` is flipped along with it.
pub fn svd_real(a: &Real8) -> Result<(Real8, Vec8, Real8)> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidState("non-finite entry in SVD input".into()));
    }
    let svd = SVD::try_new(*a, true, true, f64::EPSILON, EIG_MAX_ITER).ok_or(Error::NoConvergence("real SVD"))?;
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut order: [usize; 8] = core::array::from_fn(|k| k);
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));

    let mut o1 = Real8::zeros();
    let mut o2 = Real8::zeros();
    let mut s = Vec8::zeros();
    for (k, &src) in order.iter().enumerate() {
        s[k] = svd.singular_values[src];
        let col_u = u.column(src);
        let mut pivot = 0;
        for r in 1..8 {
            if col_u[r].abs() > col_u[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if col_u[pivot] < 0.0 { -1.0 } else { 1.0 };
        o1.set_column(k, &(col_u * sign));
        o2.set_column(k, &(v.column(src) * sign));
    }
    Ok((o1, s, o2))
}

/// Inverse square root of a full-rank single-qutrit state: `X` with
/// `X rho X = I`.
pub fn inv_sqrt_psd(rho: &DensityMatrix, eps: f64) -> Result<ComplexMatrix> {
    let (vals, vecs) = hermitian_eig(rho.matrix())?;
    if vals[0] <= eps {
        return Err(Error::NearSingular(vals[0]));
    }
    let n = vals.len();
    let scaled = ComplexMatrix::from_fn(n, n, |r, k| vecs[(r, k)] / vals[k].sqrt());
    Ok(hermitian_part(&(&scaled * vecs.adjoint())))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `|v><v|` for a column vector.
pub fn outer(v: &nalgebra::DVector<C64>) -> ComplexMatrix {
    v * v.adjoint()
}

pub(crate) fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().fold(ZERO, |acc, z| acc + z)
}

/// A validated density matrix of one qutrit (`dim = 3`) or a qutrit pair
/// (`dim = 9`).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace, positivity and finiteness.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n || (n != 3 && n != 9) {
            return Err(Error::ShapeMismatch(format!("density matrix must be 3x3 or 9x9, got {}x{}", n, mat.ncols())));
        }
        if !is_finite(&mat) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let dev = hermitian_deviation(&mat);
        if dev > HERMITIAN_TOL {
            return Err(Error::NonHermitian(dev));
        }
        let tr = trace(&mat);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {} != 1", tr)));
        }
        let min = eigenvalues_unchecked(&mat)[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("min eigenvalue {min:e} < 0")));
        }
        Ok(Self { mat })
    }

    /// Hermitian-symmetrizes and trace-normalizes a positive operator, then
    /// validates.
    pub fn from_positive(h: &ComplexMatrix) -> Result<Self> {
        let herm = hermitian_part(h);
        let tr = trace(&herm).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(herm / c(tr, 0.0))
    }

    pub fn from_pure(psi: &nalgebra::DVector<C64>) -> Result<Self> {
        Self::from_positive(&outer(psi))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(ComplexMatrix::identity(dim, dim) / c(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigenvalues_unchecked(&self.mat)[0]
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim() != 3 || other.dim() != 3 {
            return Err(Error::ShapeMismatch("tensor expects two qutrit states".into()));
        }
        DensityMatrix::new(kron(&self.mat, &other.mat))
    }

    /// Conjugation by a unitary of matching dimension.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::ShapeMismatch("unitary dimension".into()));
        }
        DensityMatrix::new(hermitian_part(&(u * &self.mat * u.adjoint())))
    }

    /// Exchanges Alice and Bob.
    pub fn swap_parties(&self) -> Result<DensityMatrix> {
        self.require_pair()?;
        let m = ComplexMatrix::from_fn(9, 9, |r, col| self.mat[(swap_index(r), swap_index(col))]);
        DensityMatrix::new(m)
    }

    /// Partial transpose on Bob's factor (used only as a separability oracle).
    pub fn partial_transpose_b(&self) -> Result<ComplexMatrix> {
        self.require_pair()?;
        Ok(ComplexMatrix::from_fn(9, 9, |r, col| {
            let (i, j) = (r / 3, r % 3);
            let (k, l) = (col / 3, col % 3);
            self.mat[(3 * i + l, 3 * k + j)]
        }))
    }

    fn require_pair(&self) -> Result<()> {
        if self.dim() != 9 {
            return Err(Error::ShapeMismatch("operation needs a two-qutrit state".into()));
        }
        Ok(())
    }
}

fn swap_index(r: usize) -> usize {
    3 * (r % 3) + r / 3
}

/// Bob's reduced state `tr_A rho`.
pub fn partial_trace_a(rho: &DensityMatrix) -> Result<DensityMatrix> {
    rho.require_pair()?;
    let m = rho.matrix();
    let out = ComplexMatrix::from_fn(3, 3, |j, l| (0..3).map(|i| m[(3 * i + j, 3 * i + l)]).sum());
    DensityMatrix::from_positive(&out)
}

/// Alice's reduced state `tr_B rho`.
pub fn partial_trace_b(rho: &DensityMatrix) -> Result<DensityMatrix> {
    rho.require_pair()?;
    let m = rho.matrix();
    let out = ComplexMatrix::from_fn(3, 3, |i, k| (0..3).map(|j| m[(3 * i + j, 3 * k + j)]).sum());
    DensityMatrix::from_positive(&out)
}

/// The identity plus the eight Gell-Mann matrices, `Tr(d_i d_j) = 2 δ_ij`.
#[derive(Clone, Debug)]
pub struct GellMannBasis {
    delta: [Mat3; 9],
}

pub(crate) const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

impl GellMannBasis {
    pub fn new() -> Self {
        let mut delta = [Mat3::zeros(); 9];
        delta[0] = Mat3::identity();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            delta[1 + k][(i, j)] = ONE;
            delta[1 + k][(j, i)] = ONE;
            delta[4 + k][(i, j)] = -I;
            delta[4 + k][(j, i)] = I;
        }
        delta[7][(0, 0)] = ONE;
        delta[7][(1, 1)] = -ONE;
        let s = 1.0 / 3.0f64.sqrt();
        delta[8][(0, 0)] = c(s, 0.0);
        delta[8][(1, 1)] = c(s, 0.0);
        delta[8][(2, 2)] = c(-2.0 * s, 0.0);
        Self { delta }
    }

    /// `index` 0 is the identity, 1..=8 the Gell-Mann matrices.
    pub fn get(&self, index: usize) -> &Mat3 {
        &self.delta[index]
    }

    /// Dense 3x3 copy of element `index`.
    pub fn dense(&self, index: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(3, 3, |r, col| self.delta[index][(r, col)])
    }
}

impl Default for GellMannBasis {
    fn default() -> Self {
        Self::new()
    }
}

/// Bloch representation of a two-qutrit state in the Gell-Mann basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochRep {
    pub a: Vec8,
    pub b: Vec8,
    pub t: Real8,
}

/// `Tr(rho (x ⊗ y))` for 3x3 factors, without forming the 9x9 product.
pub(crate) fn trace_against(rho: &ComplexMatrix, x: &Mat3, y: &Mat3) -> C64 {
    let mut acc = ZERO;
    for p in 0..3 {
        for q in 0..3 {
            let xqp = x[(q, p)];
            if xqp == ZERO {
                continue;
            }
            for r in 0..3 {
                for s in 0..3 {
                    let ysr = y[(s, r)];
                    if ysr == ZERO {
                        continue;
                    }
                    acc += rho[(3 * p + r, 3 * q + s)] * xqp * ysr;
                }
            }
        }
    }
    acc
}

/// `a_i = Tr(rho d_i⊗I)`, `b_j = Tr(rho I⊗d_j)`, `T_ij = Tr(rho d_i⊗d_j)`.
pub fn bloch_decompose(rho: &DensityMatrix) -> Result<BlochRep> {
    rho.require_pair()?;
    let basis = GellMannBasis::new();
    let m = rho.matrix();
    let mut a = Vec8::zeros();
    let mut b = Vec8::zeros();
    let mut t = Real8::zeros();
    for i in 1..9 {
        a[i - 1] = trace_against(m, basis.get(i), basis.get(0)).re;
        b[i - 1] = trace_against(m, basis.get(0), basis.get(i)).re;
        for j in 1..9 {
            t[(i - 1, j - 1)] = trace_against(m, basis.get(i), basis.get(j)).re;
        }
    }
    Ok(BlochRep { a, b, t })
}

impl BlochRep {
    /// `I/9 + (a·d ⊗ I + I ⊗ b·d)/6 + Σ T_ij d_i⊗d_j / 4`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let basis = GellMannBasis::new();
        let id = basis.dense(0);
        let mut out = ComplexMatrix::identity(9, 9) / c(9.0, 0.0);
        for i in 1..9 {
            let di = basis.dense(i);
            out += kron(&di, &id) * c(self.a[i - 1] / 6.0, 0.0);
            out += kron(&id, &di) * c(self.b[i - 1] / 6.0, 0.0);
            for j in 1..9 {
                let tij = self.t[(i - 1, j - 1)];
                if tij != 0.0 {
                    out += kron(&di, &basis.dense(j)) * c(tij / 4.0, 0.0);
                }
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) fn to_mat3(m: &ComplexMatrix) -> Mat3 {
    Mat3::from_fn(|r, col| m[(r, col)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{random_density, random_unitary};
    use crate::rng::Rng;
    use approx_eq::*;

    mod approx_eq {
        use super::*;
        pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
            (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
        }
    }

    fn random_hermitian(rng: &mut Rng, n: usize) -> ComplexMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let g = ComplexMatrix::from_fn(n, n, |_, _| c(StandardNormal.sample(rng), StandardNormal.sample(rng)));
        hermitian_part(&g)
    }

    #[test]
    fn eig_of_diagonal() {
        let h = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![ONE, ZERO, -ONE]));
        let (vals, vecs) = hermitian_eig(&h).unwrap();
        assert_eq!(vals.len(), 3);
        assert!((vals[0] + 1.0).abs() < 1e-14 && vals[1].abs() < 1e-14 && (vals[2] - 1.0).abs() < 1e-14);
        assert!((vecs[(2, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((vecs[(0, 2)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = Rng::new(11);
        for n in [3, 9] {
            let h = random_hermitian(&mut rng, n);
            let (vals, v) = hermitian_eig(&h).unwrap();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let lam = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, vals.iter().map(|&x| c(x, 0.0))));
            assert!(max_abs_diff(&(&v * lam * v.adjoint()), &h) < 1e-10);
            assert!(max_abs_diff(&(v.adjoint() * &v), &ComplexMatrix::identity(n, n)) < 1e-10);
            for k in 0..n {
                let col = v.column(k);
                let lhs = &h * col;
                let rhs = col * c(vals[k], 0.0);
                assert!((lhs - rhs).iter().all(|z| z.norm() < 1e-10));
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(3, 3);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(hermitian_eig(&m), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn eig_spectrum_invariant_under_unitary_conjugation() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let h = random_hermitian(&mut rng, 9);
            let u = random_unitary(&mut rng, 9);
            let (a, _) = hermitian_eig(&h).unwrap();
            let (b, _) = hermitian_eig(&hermitian_part(&(&u * &h * u.adjoint()))).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn svd_identity_and_sign_convention() {
        let (o1, s, o2) = svd_real(&Real8::identity()).unwrap();
        assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        assert!((o1 * Real8::from_diagonal(&s) * o2.transpose() - Real8::identity()).abs().max() < 1e-12);
        for k in 0..8 {
            let col = o1.column(k);
            let pivot = (0..8).fold(0, |p, r| if col[r].abs() > col[p].abs() { r } else { p });
            assert!(col[pivot] > 0.0);
        }
    }

    #[test]
    fn svd_reconstructs_and_is_orthogonally_invariant() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let a = Real8::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let (o1, s, o2) = svd_real(&a).unwrap();
            assert!((&o1 * Real8::from_diagonal(&s) * o2.transpose() - a).abs().max() < 1e-10);
            assert!(s.iter().zip(s.iter().skip(1)).all(|(x, y)| x >= y));
            assert!((o1.transpose() * o1 - Real8::identity()).abs().max() < 1e-10);
            let q = nalgebra::QR::new(Real8::from_fn(|_, _| StandardNormal.sample(&mut rng))).q();
            let (_, s2, _) = svd_real(&(a * q)).unwrap();
            let (_, s3, _) = svd_real(&(q.transpose() * a)).unwrap();
            assert!((s - s2).abs().max() < 1e-9);
            assert!((s - s3).abs().max() < 1e-9);
        }
    }

    #[test]
    fn inv_sqrt_cases() {
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        let x = inv_sqrt_psd(&mixed, SINGULAR_EPS).unwrap();
        assert!(max_abs_diff(&x, &(ComplexMatrix::identity(3, 3) * c(3f64.sqrt(), 0.0))) < 1e-12);

        let d = DensityMatrix::new(ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![
            c(0.5, 0.0),
            c(0.25, 0.0),
            c(0.25, 0.0)
        ])))
        .unwrap();
        let x = inv_sqrt_psd(&d, SINGULAR_EPS).unwrap();
        let want = [2f64.sqrt(), 2.0, 2.0];
        for k in 0..3 {
            assert!((x[(k, k)] - c(want[k], 0.0)).norm() < 1e-12);
        }

        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let rho_b = partial_trace_a(&random_density(&mut rng)).unwrap();
            let x = inv_sqrt_psd(&rho_b, SINGULAR_EPS).unwrap();
            let id = &x * rho_b.matrix() * &x;
            assert!(max_abs_diff(&id, &ComplexMatrix::identity(3, 3)) < 1e-8);
            assert!(hermitian_deviation(&x) < 1e-12);
        }
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let mut m = ComplexMatrix::zeros(3, 3);
        m[(0, 0)] = ONE;
        let pure = DensityMatrix::new(m).unwrap();
        assert!(matches!(inv_sqrt_psd(&pure, SINGULAR_EPS), Err(Error::NearSingular(_))));
    }

    #[test]
    fn partial_traces_of_product_and_mixed() {
        let mut rng = Rng::new(8);
        let ra = partial_trace_a(&random_density(&mut rng)).unwrap();
        let rb = partial_trace_b(&random_density(&mut rng)).unwrap();
        let prod = ra.tensor(&rb).unwrap();
        assert!(max_abs_diff(partial_trace_a(&prod).unwrap().matrix(), rb.matrix()) < 1e-15);
        assert!(max_abs_diff(partial_trace_b(&prod).unwrap().matrix(), ra.matrix()) < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(9).unwrap();
        let third = ComplexMatrix::identity(3, 3) / c(3.0, 0.0);
        assert!(max_abs_diff(partial_trace_a(&mixed).unwrap().matrix(), &third) < 1e-15);
    }

    #[test]
    fn gell_mann_orthonormality() {
        let basis = GellMannBasis::new();
        for i in 1..9 {
            assert!(basis.get(i).trace().norm() < 1e-15);
            for j in 1..9 {
                let t = (basis.get(i) * basis.get(j)).trace();
                let want = if i == j { 2.0 } else { 0.0 };
                assert!((t - c(want, 0.0)).norm() < 1e-14, "{i} {j}");
            }
        }
    }

    #[test]
    fn bloch_of_maximally_mixed_is_zero() {
        let rep = bloch_decompose(&DensityMatrix::maximally_mixed(9).unwrap()).unwrap();
        assert!(rep.a.abs().max() < 1e-15 && rep.b.abs().max() < 1e-15 && rep.t.abs().max() < 1e-15);
    }

    #[test]
    fn bloch_of_product_state_is_rank_one() {
        let mut rng = Rng::new(9);
        let ra = partial_trace_a(&random_density(&mut rng)).unwrap();
        let rb = partial_trace_a(&random_density(&mut rng)).unwrap();
        let rep = bloch_decompose(&ra.tensor(&rb).unwrap()).unwrap();
        assert!((rep.t - rep.a * rep.b.transpose()).abs().max() < 1e-10);
    }

    #[test]
    fn bloch_round_trip() {
        let mut rng = Rng::new(10);
        for _ in 0..50 {
            let rho = random_density(&mut rng);
            let rep = bloch_decompose(&rho).unwrap();
            assert!(max_abs_diff(&rep.reconstruct(), rho.matrix()) < 1e-10);
        }
    }

    #[test]
    fn density_validation_errors() {
        let mut m = ComplexMatrix::identity(9, 9) / c(9.0, 0.0);
        m[(0, 0)] = c(0.5, 0.0);
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidState(_))));
        let mut m = ComplexMatrix::identity(3, 3) / c(3.0, 0.0);
        m[(0, 1)] = c(0.0, 0.1);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NonHermitian(_))));
        let m = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![c(1.5, 0.0), c(-0.5, 0.0), ZERO]));
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidState(_))));
        assert!(matches!(DensityMatrix::new(ComplexMatrix::identity(4, 4) / c(4.0, 0.0)), Err(Error::ShapeMismatch(_))));
    }
}
