//! Alice's measurements and the assemblages they steer on Bob's side.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, eig3, min_eig3, DensityMatrix, Mat3, C64, I, ONE, ZERO};
use crate::rng::Rng;

const PROJECTOR_TOL: f64 = 1e-10;
const ASSEMBLAGE_TOL: f64 = 1e-10;

/// Measurement axis on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=core::f64::consts::PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::ParamOutOfRange(format!("direction ({theta}, {phi})")));
        }
        Ok(Self { theta, phi: phi.rem_euclid(core::f64::consts::TAU) })
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        [self.theta.sin() * self.phi.cos(), self.theta.sin() * self.phi.sin(), self.theta.cos()]
    }

    /// The antipodal axis.
    pub fn negated(&self) -> Self {
        Self::new(core::f64::consts::PI - self.theta, self.phi + core::f64::consts::PI).expect("antipode of a valid direction")
    }
}

/// A rank-1 projective measurement with three outcomes. For spin
/// observables, outcome indices 0, 1, 2 carry eigenvalues -1, 0, +1.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    projectors: [Mat3; 3],
}

impl Measurement {
    pub fn new(projectors: [Mat3; 3]) -> Result<Self> {
        let mut sum = Mat3::zeros();
        for (a, p) in projectors.iter().enumerate() {
            if (p - p.adjoint()).iter().any(|z| z.norm() > PROJECTOR_TOL)
                || (p * p - p).iter().any(|z| z.norm() > PROJECTOR_TOL)
                || (p.trace() - ONE).norm() > PROJECTOR_TOL
            {
                return Err(Error::InvalidState(format!("outcome {a} is not a rank-1 projector")));
            }
            for q in projectors.iter().skip(a + 1) {
                if (p * q).iter().any(|z| z.norm() > PROJECTOR_TOL) {
                    return Err(Error::InvalidState("projectors are not orthogonal".into()));
                }
            }
            sum += p;
        }
        if (sum - Mat3::identity()).iter().any(|z| z.norm() > PROJECTOR_TOL) {
            return Err(Error::InvalidState("projectors do not sum to the identity".into()));
        }
        Ok(Self { projectors })
    }

    /// Projective measurement onto the columns of a unitary.
    pub fn from_basis(basis: &Mat3) -> Result<Self> {
        Self::new(core::array::from_fn(|k| {
            let v = basis.column(k);
            v * v.adjoint()
        }))
    }

    pub fn projector(&self, outcome: usize) -> &Mat3 {
        &self.projectors[outcome]
    }

    pub fn projectors(&self) -> &[Mat3; 3] {
        &self.projectors
    }
}

/// `(S_x, S_y, S_z)` for spin 1.
pub fn spin_operators() -> [Mat3; 3] {
    let s = 1.0 / 2f64.sqrt();
    let r = c(s, 0.0);
    let im = I * s;
    let sx = Mat3::new(ZERO, r, ZERO, r, ZERO, r, ZERO, r, ZERO);
    let sy = Mat3::new(ZERO, -im, ZERO, im, ZERO, -im, ZERO, im, ZERO);
    let sz = Mat3::from_diagonal(&nalgebra::Vector3::new(ONE, ZERO, -ONE));
    [sx, sy, sz]
}

/// Eigenprojectors of `n·S` for eigenvalues -1, 0, +1 (outcome indices
/// 0, 1, 2).
pub fn measurement_from_direction(d: &Direction) -> Result<Measurement> {
    let n = d.unit_vector();
    let [sx, sy, sz] = spin_operators();
    let obs = sx * c(n[0], 0.0) + sy * c(n[1], 0.0) + sz * c(n[2], 0.0);
    let (vals, vecs) = eig3(&obs);
    if vals[1] - vals[0] < 1e-6 || vals[2] - vals[1] < 1e-6 {
        return Err(Error::DegenerateSpectrum);
    }
    Measurement::from_basis(&vecs)
}

/// `m` directions uniform on the sphere: `cos(theta)` uniform in [-1, 1],
/// `phi` uniform in [0, 2π).
pub fn sample_directions(rng: &mut Rng, m: usize) -> Vec<Direction> {
    (0..m)
        .map(|_| {
            let cos_t = rng.uniform(-1.0, 1.0);
            let phi = rng.uniform(0.0, core::f64::consts::TAU);
            Direction::new(cos_t.clamp(-1.0, 1.0).acos(), phi).expect("sampled direction")
        })
        .collect()
}

/// Random spin measurements along `m` uniformly drawn axes.
pub fn random_spin_measurements(rng: &mut Rng, m: usize) -> Vec<Measurement> {
    sample_directions(rng, m).iter().map(|d| measurement_from_direction(d).expect("unit axes are non-degenerate")).collect()
}

/// The four qutrit MUBs: the computational basis and, for `b = 0, 1, 2`,
/// `|e_j^b> = Σ_k ω^(jk + b k²) |k> / sqrt(3)` with `ω = e^(2πi/3)`.
pub fn mub_measurements() -> [Measurement; 4] {
    let omega = |power: usize| {
        let angle = core::f64::consts::TAU * (power % 3) as f64 / 3.0;
        C64::new(angle.cos(), angle.sin())
    };
    let norm = c(1.0 / 3f64.sqrt(), 0.0);
    core::array::from_fn(|basis| {
        if basis == 0 {
            Measurement::from_basis(&Mat3::identity()).expect("computational basis")
        } else {
            let b = basis - 1;
            let u = Mat3::from_fn(|k, j| omega(j * k + b * k * k) * norm);
            Measurement::from_basis(&u).expect("Fourier-type basis")
        }
    })
}

/// Conditional states `σ[x][a]` on Bob's side.
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage {
    members: Vec<[Mat3; 3]>,
}

impl Assemblage {
    /// Checks consistency, normalization and positivity before wrapping.
    pub fn new(members: Vec<[Mat3; 3]>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::ShapeMismatch("assemblage needs at least one setting".into()));
        }
        let asm = Self { members };
        asm.validate()?;
        Ok(asm)
    }

    pub fn validate(&self) -> Result<()> {
        let marginal = self.marginal_of(0);
        let tr = marginal.trace();
        if (tr - ONE).norm() > ASSEMBLAGE_TOL {
            return Err(Error::InvalidState(format!("assemblage trace {tr}")));
        }
        for x in 0..self.settings() {
            let dev = (self.marginal_of(x) - marginal).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if dev > ASSEMBLAGE_TOL {
                return Err(Error::InvalidState(format!("setting {x} violates no-signalling by {dev:e}")));
            }
            for a in 0..3 {
                let min = min_eig3(&self.members[x][a]);
                if min < -ASSEMBLAGE_TOL {
                    return Err(Error::InvalidState(format!("member ({a}|{x}) has eigenvalue {min:e}")));
                }
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> usize {
        self.members.len()
    }

    /// `σ_{a|x}`.
    pub fn get(&self, a: usize, x: usize) -> &Mat3 {
        &self.members[x][a]
    }

    pub fn members(&self) -> &[[Mat3; 3]] {
        &self.members
    }

    fn marginal_of(&self, x: usize) -> Mat3 {
        self.members[x].iter().fold(Mat3::zeros(), |acc, s| acc + s)
    }

    /// Bob's reduced state, averaged over settings.
    pub fn bob_marginal(&self) -> Mat3 {
        let total = (0..self.settings()).fold(Mat3::zeros(), |acc, x| acc + self.marginal_of(x));
        total / c(self.settings() as f64, 0.0)
    }

    /// The assemblage restricted to the listed settings.
    pub fn restrict(&self, settings: &[usize]) -> Result<Self> {
        if settings.iter().any(|&x| x >= self.settings()) {
            return Err(Error::ShapeMismatch("setting index out of range".into()));
        }
        Self::new(settings.iter().map(|&x| self.members[x]).collect())
    }
}

/// `σ_{a|x} = tr_A[(P_{a|x} ⊗ I) rho]`.
pub fn build_assemblage(rho: &DensityMatrix, ms: &[Measurement]) -> Result<Assemblage> {
    if rho.dim() != 9 {
        return Err(Error::ShapeMismatch("assemblage needs a two-qutrit state".into()));
    }
    let m = rho.matrix();
    let members = ms
        .iter()
        .map(|meas| {
            core::array::from_fn(|a| {
                let p = meas.projector(a);
                let mut out = Mat3::zeros();
                for j in 0..3 {
                    for l in 0..3 {
                        let mut acc = ZERO;
                        for i in 0..3 {
                            for k in 0..3 {
                                acc += p[(i, k)] * m[(3 * k + j, 3 * i + l)];
                            }
                        }
                        out[(j, l)] = acc;
                    }
                }
                (out + out.adjoint()) * c(0.5, 0.0)
            })
        })
        .collect();
    Assemblage::new(members)
}
