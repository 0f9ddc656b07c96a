//! Constructors and samplers for the two-qutrit state families.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, kron, partial_trace_b, ComplexMatrix, DensityMatrix, C64, ONE, ZERO};
pub use crate::rng::Rng;

/// Default number of product terms in [`separable_mixed`].
pub const SEPARABLE_TERMS: usize = 10;

/// Antisymmetric weight up to which qutrit Werner states are separable.
pub const WERNER_SEPARABLE_MAX: f64 = 0.5;

/// `(H_3 - 1) / 2` with `H_3 = 1 + 1/2 + 1/3`: isotropic qutrit states are
/// steerable iff `eta` exceeds this value.
pub fn isotropic_threshold() -> f64 {
    // H_3 - 1 = (3 + 2) / 6 over a common denominator, so the result is 5/12 exactly
    (3.0 + 2.0) / 12.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicParam {
    eta: f64,
}

impl IsotropicParam {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::ParamOutOfRange(format!("isotropic eta = {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Parameters of `p |psi><psi| + (1 - p) rho_A ⊗ I/3` with
/// `|psi> = cos(theta) sin(phi) |00> + sin(theta) sin(phi) |11> + cos(phi) |22>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialEntParam {
    pub p: f64,
    pub theta: f64,
    pub phi: f64,
}

impl PartialEntParam {
    pub fn new(p: f64, theta: f64, phi: f64) -> Result<Self> {
        let eps = 1e-12;
        if !(0.0..=1.0).contains(&p)
            || !(-eps..=core::f64::consts::FRAC_PI_4 + eps).contains(&theta)
            || !(-eps..=core::f64::consts::FRAC_PI_2 + eps).contains(&phi)
        {
            return Err(Error::ParamOutOfRange(format!("partial entangled (p, theta, phi) = ({p}, {theta}, {phi})")));
        }
        Ok(Self { p, theta, phi })
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.theta.cos() * self.phi.sin(), self.theta.sin() * self.phi.sin(), self.phi.cos()]
    }
}

/// `|psi_+> = (|00> + |11> + |22>) / sqrt(3)`.
pub fn psi_plus() -> DVector<C64> {
    schmidt_vector(&[1.0 / 3f64.sqrt(); 3])
}

fn schmidt_vector(coeffs: &[f64; 3]) -> DVector<C64> {
    let mut v = DVector::from_element(9, ZERO);
    for (i, &ci) in coeffs.iter().enumerate() {
        v[4 * i] = c(ci, 0.0);
    }
    v
}

fn normal_complex(rng: &mut Rng) -> C64 {
    c(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// `H / Tr(H)` with `H = (M + iN)(M + iN)^dagger`, `M`, `N` i.i.d. standard
/// normal 9x9.
pub fn random_density(rng: &mut Rng) -> DensityMatrix {
    loop {
        let g = ComplexMatrix::from_fn(9, 9, |_, _| normal_complex(rng));
        let h = &g * g.adjoint();
        if let Ok(rho) = DensityMatrix::from_positive(&h) {
            return rho;
        }
    }
}

/// `H / Tr(H)` with `H = G G^dagger` for a 9 x `rank` complex Ginibre `G`
/// (the induced measure with environment dimension `rank`).
pub fn random_density_rank(rng: &mut Rng, rank: usize) -> Result<DensityMatrix> {
    if !(1..=9).contains(&rank) {
        return Err(Error::ParamOutOfRange(format!("induced-measure rank {rank}")));
    }
    loop {
        let g = ComplexMatrix::from_fn(9, rank, |_, _| normal_complex(rng));
        let h = &g * g.adjoint();
        if let Ok(rho) = DensityMatrix::from_positive(&h) {
            return Ok(rho);
        }
    }
}

/// Haar-random unit vector in `C^n`.
pub fn random_pure_vector(rng: &mut Rng, n: usize) -> DVector<C64> {
    loop {
        let v = DVector::from_fn(n, |_, _| normal_complex(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / c(norm, 0.0);
        }
    }
}

/// Haar-random unitary via QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal absorbed into `Q`.
pub fn random_unitary(rng: &mut Rng, n: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| normal_complex(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / c(d.norm(), 0.0) } else { ONE };
        for row in 0..n {
            q[(row, k)] *= phase;
        }
    }
    q
}

/// `eta |psi_+><psi_+| + (1 - eta) I/9`.
pub fn isotropic(eta: f64) -> Result<DensityMatrix> {
    let eta = IsotropicParam::new(eta)?.eta();
    let psi = psi_plus();
    let m = (&psi * psi.adjoint()) * c(eta, 0.0) + ComplexMatrix::identity(9, 9) * c((1.0 - eta) / 9.0, 0.0);
    DensityMatrix::from_positive(&m)
}

/// Swap operator on `C^3 ⊗ C^3`.
pub fn swap_operator() -> ComplexMatrix {
    ComplexMatrix::from_fn(9, 9, |r, col| if col == 3 * (r % 3) + r / 3 { ONE } else { ZERO })
}

/// Werner state with antisymmetric weight `p`:
/// `p · Π₋/3 + (1 - p) · Π₊/6` where `Π± = (I ± SWAP)/2` (`Π₋` has rank 3, `Π₊` rank 6).
///
/// `p = 1/3` is the maximally mixed state; the family is separable for
/// `p <= 1/2`. Steerable ranges are never taken from a formula; see
/// `datasets::validate_werner_ranges`.
pub fn werner(p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ParamOutOfRange(format!("werner p = {p}")));
    }
    let id = ComplexMatrix::identity(9, 9);
    let swap = swap_operator();
    let anti = (&id - &swap) * c(0.5, 0.0);
    let sym = (&id + &swap) * c(0.5, 0.0);
    DensityMatrix::from_positive(&(anti * c(p / 3.0, 0.0) + sym * c((1.0 - p) / 6.0, 0.0)))
}

/// Haar-random pure state whose marginal purity is below `1 - 1e-8`
/// (i.e. entangled).
pub fn pure_entangled(rng: &mut Rng) -> DensityMatrix {
    loop {
        let psi = random_pure_vector(rng, 9);
        let rho = DensityMatrix::from_pure(&psi).expect("normalized pure state");
        let marginal = partial_trace_b(&rho).expect("two-qutrit state");
        if marginal.purity() < 1.0 - 1e-8 {
            return rho;
        }
    }
}

/// `|a><a| ⊗ |b><b|` for Haar-random qutrit vectors.
pub fn product_pure(rng: &mut Rng) -> DensityMatrix {
    let a = random_pure_vector(rng, 3);
    let b = random_pure_vector(rng, 3);
    DensityMatrix::from_pure(&a.kronecker(&b)).expect("normalized product state")
}

/// Convex mixture of `terms` random product pure states with flat-Dirichlet
/// weights.
pub fn separable_mixed(rng: &mut Rng, terms: usize) -> Result<DensityMatrix> {
    if terms == 0 {
        return Err(Error::ParamOutOfRange("separable_mixed needs at least one term".into()));
    }
    let weights: Vec<f64> = (0..terms).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = ComplexMatrix::zeros(9, 9);
    for w in weights {
        let prod = product_pure(rng);
        acc += prod.matrix() * c(w / total, 0.0);
    }
    DensityMatrix::from_positive(&acc)
}

/// `p |psi><psi| + (1 - p) rho_A ⊗ I/3`, `rho_A` Alice's marginal of `|psi>`.
pub fn partial_entangled(param: &PartialEntParam) -> Result<DensityMatrix> {
    let param = PartialEntParam::new(param.p, param.theta, param.phi)?;
    let psi = schmidt_vector(&param.coefficients());
    let pure = &psi * psi.adjoint();
    let rho_a = ComplexMatrix::from_fn(3, 3, |i, k| (0..3).map(|j| pure[(3 * i + j, 3 * k + j)]).sum());
    let mixed = kron(&rho_a, &(ComplexMatrix::identity(3, 3) / c(3.0, 0.0)));
    DensityMatrix::from_positive(&(pure * c(param.p, 0.0) + mixed * c(1.0 - param.p, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{bloch_decompose, hermitian_eig, partial_trace_a};

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn threshold_is_five_twelfths() {
        let t = isotropic_threshold();
        assert!((t - 5.0 / 12.0).abs() < 1e-15);
        assert!(t > 1.0 / 3.0 && t < 0.5);
        let rho = isotropic(t).unwrap();
        let third = ComplexMatrix::identity(3, 3) / c(3.0, 0.0);
        assert!(max_abs_diff(partial_trace_a(&rho).unwrap().matrix(), &third) < 1e-14);
    }

    #[test]
    fn random_density_is_deterministic_and_valid() {
        let a = random_density(&mut Rng::new(42));
        let b = random_density(&mut Rng::new(42));
        assert_eq!(a, b);
        assert!(DensityMatrix::new(a.into_matrix()).is_ok());
    }

    #[test]
    fn isotropic_endpoints() {
        let zero = isotropic(0.0).unwrap();
        assert!(max_abs_diff(zero.matrix(), DensityMatrix::maximally_mixed(9).unwrap().matrix()) < 1e-15);
        let one = isotropic(1.0).unwrap();
        let psi = psi_plus();
        assert!(max_abs_diff(one.matrix(), &(&psi * psi.adjoint())) < 1e-15);
        assert!(isotropic(1.2).is_err());
    }

    #[test]
    fn isotropic_is_swap_symmetric() {
        for eta in [0.0, 0.3, 0.7, 1.0] {
            let rho = isotropic(eta).unwrap();
            assert!(max_abs_diff(rho.matrix(), rho.swap_parties().unwrap().matrix()) < 1e-12);
        }
    }

    #[test]
    fn partial_entangled_max_direction_is_psi_plus() {
        let param = PartialEntParam::new(1.0, core::f64::consts::FRAC_PI_4, (1.0 / 3f64.sqrt()).acos()).unwrap();
        for ci in param.coefficients() {
            assert!((ci - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
        let rho = partial_entangled(&param).unwrap();
        assert!(max_abs_diff(rho.matrix(), isotropic(1.0).unwrap().matrix()) < 1e-12);
    }

    #[test]
    fn partial_entangled_p_zero_is_product() {
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let param =
                PartialEntParam::new(0.0, rng.uniform(0.0, core::f64::consts::FRAC_PI_4), rng.uniform(0.0, core::f64::consts::FRAC_PI_2))
                    .unwrap();
            let rep = bloch_decompose(&partial_entangled(&param).unwrap()).unwrap();
            assert!((rep.t - rep.a * rep.b.transpose()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn separable_mixture_is_ppt() {
        let mut rng = Rng::new(13);
        for _ in 0..20 {
            let rho = separable_mixed(&mut rng, 4).unwrap();
            let (vals, _) = hermitian_eig(&rho.partial_transpose_b().unwrap()).unwrap();
            assert!(vals[0] > -1e-12);
        }
    }

    #[test]
    fn werner_family_landmarks() {
        let mixed = werner(1.0 / 3.0).unwrap();
        assert!(max_abs_diff(mixed.matrix(), DensityMatrix::maximally_mixed(9).unwrap().matrix()) < 1e-14);
        // entangled Werner states are NPT, separable ones PPT
        let min_pt = |p: f64| hermitian_eig(&werner(p).unwrap().partial_transpose_b().unwrap()).unwrap().0[0];
        assert!(min_pt(0.5) > -1e-12);
        assert!(min_pt(0.55) < -1e-3);
        assert!(werner(-0.1).is_err());
    }

    #[test]
    fn pure_entangled_has_mixed_marginal() {
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let rho = pure_entangled(&mut rng);
            assert!((rho.purity() - 1.0).abs() < 1e-12);
            assert!(partial_trace_b(&rho).unwrap().purity() < 1.0 - 1e-8);
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let u = random_unitary(&mut Rng::new(1), 9);
        assert!(max_abs_diff(&(u.adjoint() * &u), &ComplexMatrix::identity(9, 9)) < 1e-12);
    }

    #[test]
    fn constructors_produce_valid_states() {
        let mut rng = Rng::new(77);
        for _ in 0..200 {
            let eta = rng.uniform(0.0, 1.0);
            for rho in [
                random_density(&mut rng),
                isotropic(eta).unwrap(),
                werner(eta).unwrap(),
                pure_entangled(&mut rng),
                product_pure(&mut rng),
                separable_mixed(&mut rng, SEPARABLE_TERMS).unwrap(),
                partial_entangled(
                    &PartialEntParam::new(
                        eta,
                        rng.uniform(0.0, core::f64::consts::FRAC_PI_4),
                        rng.uniform(0.0, core::f64::consts::FRAC_PI_2),
                    )
                    .unwrap(),
                )
                .unwrap(),
            ] {
                assert!(DensityMatrix::new(rho.into_matrix()).is_ok());
            }
        }
    }
}
