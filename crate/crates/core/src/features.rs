//! Feature encodings of two-qutrit states.
//!
//! * F1 (80 values): the first eight diagonal entries, then `Re`, `Im` of the
//!   36 strictly-lower entries `(i, j)`, `i > j`, in row-major order.
//! * F2 (16 values): Bob's marginal is flattened by the filter
//!   `(I ⊗ ρ_B^{-1/2}) ρ (I ⊗ ρ_B^{-1/2}) / 3`; the filtered correlation tensor
//!   is diagonalized by a real SVD `T̃ = O1 diag(s) O2^T`. Values are the
//!   squared singular values (descending) followed by Alice's filtered Bloch
//!   vector in the rotated frame, `a' = O1^T ã` (the frame in which the
//!   rotated tensor `O1^T T̃ O2` is diagonal).

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    bloch_decompose, c, inv_sqrt_psd, kron, partial_trace_a, svd_real, BlochRep, ComplexMatrix, DensityMatrix, Real8, Vec8, SINGULAR_EPS,
};

pub const F1_LEN: usize = 80;
pub const F2_LEN: usize = 16;

/// Tolerance on the filtered state's Bob Bloch vector.
const FILTER_MARGINAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    F1,
    F2,
}

impl FeatureKind {
    pub fn len(self) -> usize {
        match self {
            FeatureKind::F1 => F1_LEN,
            FeatureKind::F2 => F2_LEN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::F1 => "f1",
            FeatureKind::F2 => "f2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Some(FeatureKind::F1),
            "f2" => Some(FeatureKind::F2),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.len() {
            return Err(Error::ShapeMismatch(format!("{} expects {} values, got {}", kind.name(), kind.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite feature value".into()));
        }
        Ok(Self { kind, values })
    }
}

pub fn extract(kind: FeatureKind, rho: &DensityMatrix) -> Result<FeatureVector> {
    match kind {
        FeatureKind::F1 => extract_f1(rho),
        FeatureKind::F2 => extract_f2(rho),
    }
}

fn require_pair(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 9 {
        return Err(Error::ShapeMismatch("features need a two-qutrit state".into()));
    }
    Ok(())
}

pub fn extract_f1(rho: &DensityMatrix) -> Result<FeatureVector> {
    require_pair(rho)?;
    let m = rho.matrix();
    let mut values = Vec::with_capacity(F1_LEN);
    values.extend((0..8).map(|i| m[(i, i)].re));
    for i in 1..9 {
        for j in 0..i {
            values.push(m[(i, j)].re);
            values.push(m[(i, j)].im);
        }
    }
    FeatureVector::new(FeatureKind::F1, values)
}

/// Inverse of [`extract_f1`]; the last diagonal entry is `1 - Σ` of the others.
pub fn reconstruct_f1(fv: &FeatureVector) -> Result<DensityMatrix> {
    if fv.kind != FeatureKind::F1 {
        return Err(Error::FeatureKindMismatch { expected: "f1", found: fv.kind.name() });
    }
    let v = &fv.values;
    let mut m = ComplexMatrix::zeros(9, 9);
    for i in 0..8 {
        m[(i, i)] = c(v[i], 0.0);
    }
    m[(8, 8)] = c(1.0 - v[..8].iter().sum::<f64>(), 0.0);
    let mut k = 8;
    for i in 1..9 {
        for j in 0..i {
            let z = c(v[k], v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    DensityMatrix::new(m)
}

/// `(I ⊗ ρ_B^{-1/2}) ρ (I ⊗ ρ_B^{-1/2}) / 3`, whose Bob marginal is `I/3`.
pub fn filter_state(rho: &DensityMatrix) -> Result<DensityMatrix> {
    require_pair(rho)?;
    let rho_b = partial_trace_a(rho)?;
    let min = rho_b.min_eigenvalue();
    if min <= SINGULAR_EPS {
        return Err(Error::FilterSingular(min));
    }
    let x = inv_sqrt_psd(&rho_b, SINGULAR_EPS).map_err(|_| Error::FilterSingular(min))?;
    let f = kron(&ComplexMatrix::identity(3, 3), &x);
    let filtered = &f * rho.matrix() * &f;
    let tr: f64 = filtered.diagonal().iter().map(|z| z.re).sum();
    DensityMatrix::from_positive(&(filtered / c(tr, 0.0)))
}

/// Filtered Bloch data and its SVD frame, exposed for diagnostics and tests.
#[derive(Clone, Debug)]
pub struct F2Frame {
    pub bloch: BlochRep,
    pub o1: Real8,
    pub singular: Vec8,
    pub o2: Real8,
}

pub fn f2_frame(rho: &DensityMatrix) -> Result<F2Frame> {
    let filtered = filter_state(rho)?;
    let bloch = bloch_decompose(&filtered)?;
    let dev = bloch.b.amax();
    if dev > FILTER_MARGINAL_TOL {
        return Err(Error::InvalidState(format!("filtered Bob marginal deviates by {dev:e}")));
    }
    let (o1, singular, o2) = svd_real(&bloch.t)?;
    Ok(F2Frame { bloch, o1, singular, o2 })
}

pub fn extract_f2(rho: &DensityMatrix) -> Result<FeatureVector> {
    require_pair(rho)?;
    let frame = f2_frame(rho)?;
    let a_rot = frame.o1.transpose() * frame.bloch.a;
    let mut values = Vec::with_capacity(F2_LEN);
    values.extend(frame.singular.iter().map(|s| s * s));
    values.extend(a_rot.iter().copied());
    FeatureVector::new(FeatureKind::F2, values)
}
