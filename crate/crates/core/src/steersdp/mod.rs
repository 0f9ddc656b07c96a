//! Steerability detection by semidefinite programming.
//!
//! An assemblage `σ_{a|x}` admits a local-hidden-state model iff there are
//! PSD `σ_λ`, one per deterministic strategy, with
//! `Σ_λ D(a|x,λ) σ_λ = σ_{a|x}`. [`lhs_feasibility`] solves
//! `max τ s.t. σ_λ ⪰ τ I` under those equalities and turns the solver output
//! into one of two certificates, each re-checked by [`verify_certificate`]
//! before it is reported:
//!
//! * an explicit decomposition `{σ_λ}` (no steering for these measurements);
//! * a witness `{F_{a|x}}` with `Σ_x F_{λ_x|x} ⪰ 0` for every strategy and
//!   `Σ tr(F_{a|x} σ_{a|x}) < 0` (steering).
//!
//! Witnesses are normalized so that `Σ_λ tr(Σ_x F_{λ_x|x}) = 3^m`; with this
//! scaling the witness value equals the optimal `τ` (in units where
//! `σ_λ` is multiplied by `3^m`).

mod ipm;
mod strategy;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{build_assemblage, measurement_from_direction, sample_directions, Assemblage, Direction};
use crate::qcore::{c, min_eig3, DensityMatrix, Mat3};
use crate::rng::Rng;

pub use ipm::SolverStats;
pub use strategy::{enumerate_strategies, StrategyTable, MAX_SETTINGS, OUTCOMES};

use ipm::{coords, from_coords, Iterate, Problem, Settings};

/// Default tolerance on equality residuals and eigenvalue slack.
pub const DEFAULT_TOL: f64 = 1e-7;
/// A witness value must lie below `-STEERING_GUARD` to count as steering.
pub const STEERING_GUARD: f64 = 1e-6;
/// Default number of measurement draws per state in [`sdp_label`].
pub const DEFAULT_TRIALS: usize = 100;

/// Margin on `τ` at which the solver may stop early.
const EARLY_STOP_MARGIN: f64 = 1e-3;
const EARLY_STOP_INFEASIBILITY: f64 = 1e-11;

/// `σ_λ` for every strategy, in strategy-table order.
#[derive(Clone, Debug, PartialEq)]
pub struct LhsDecomposition {
    pub sigma: Vec<Mat3>,
}

/// Witness operators `f[x][a]` and the value `Σ tr(F_{a|x} σ_{a|x})`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualCertificate {
    pub f: Vec<[Mat3; 3]>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Steerable(DualCertificate),
    NoCertificate(LhsDecomposition),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVerdict {
    pub verdict: Verdict,
    /// Optimal `τ` estimate (scaled by `3^m`).
    pub tau: f64,
    pub stats: SolverStats,
}

impl SteeringVerdict {
    pub fn is_steerable(&self) -> bool {
        matches!(self.verdict, Verdict::Steerable(_))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Certificate<'a> {
    Dual(&'a DualCertificate),
    Lhs(&'a LhsDecomposition),
}

fn check_shapes(asm: &Assemblage, table: &StrategyTable) -> Result<()> {
    if asm.settings() != table.settings() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "assemblage has {} settings, strategy table {}",
            asm.settings(),
            table.settings()
        )));
    }
    Ok(())
}

fn max_hermitian_deviation(m: &Mat3) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn strategy_sum(f: &[[Mat3; 3]], row: &[u8]) -> Mat3 {
    row.iter().enumerate().fold(Mat3::zeros(), |acc, (x, &a)| acc + f[x][a as usize])
}

fn witness_value(f: &[[Mat3; 3]], asm: &Assemblage) -> f64 {
    let mut v = 0.0;
    for (x, fx) in f.iter().enumerate() {
        for (a, fa) in fx.iter().enumerate() {
            v += (fa * asm.get(a, x)).trace().re;
        }
    }
    v
}

/// Independent check of a certificate against an assemblage, using fresh
/// eigenvalue and trace evaluations.
pub fn verify_certificate(cert: Certificate<'_>, asm: &Assemblage, table: &StrategyTable, tol: f64) -> Result<bool> {
    check_shapes(asm, table)?;
    let m = table.settings();
    match cert {
        Certificate::Dual(w) => {
            if w.f.len() != m {
                return Err(Error::ShapeMismatch(alloc::format!("witness has {} settings, expected {m}", w.f.len())));
            }
            if w.f.iter().flatten().any(|f| max_hermitian_deviation(f) > tol) {
                return Ok(false);
            }
            let mut total_trace = 0.0;
            for lambda in 0..table.len() {
                let g = strategy_sum(&w.f, table.row(lambda));
                if min_eig3(&g) < -tol {
                    return Ok(false);
                }
                total_trace += g.trace().re;
            }
            let n = table.len() as f64;
            if (total_trace - n).abs() > tol * n {
                return Ok(false);
            }
            let v = witness_value(&w.f, asm);
            Ok(v.is_finite() && (v - w.value).abs() <= tol && v < -tol)
        }
        Certificate::Lhs(d) => {
            if d.sigma.len() != table.len() {
                return Err(Error::ShapeMismatch(alloc::format!("decomposition has {} members, expected {}", d.sigma.len(), table.len())));
            }
            for s in &d.sigma {
                if max_hermitian_deviation(s) > tol || min_eig3(s) < -tol {
                    return Ok(false);
                }
            }
            let mut sums = vec![[Mat3::zeros(); 3]; m];
            for (lambda, s) in d.sigma.iter().enumerate() {
                for (x, &a) in table.row(lambda).iter().enumerate() {
                    sums[x][a as usize] += s;
                }
            }
            for x in 0..m {
                for a in 0..OUTCOMES {
                    let dev = (sums[x][a] - asm.get(a, x)).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    if !(dev <= tol) {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}

/// Feasibility problem in the solver's standard form.
///
/// Variables: `Z_λ = 3^m σ_λ - τ I ⪰ 0` and `u = τ - τ_lo ≥ 0`. Only the
/// independent equalities are imposed: outcomes 0 and 1 of every setting
/// (group `2x + a`) and the total `Σ_λ σ_λ = ρ_B` (group `2m`).
struct Feasibility {
    problem: Problem,
    tau_lo: f64,
    targets: Vec<Mat3>,
    start: Iterate,
}

fn outcome_group(x: usize, a: usize) -> Option<usize> {
    (a < 2).then_some(2 * x + a)
}

fn feasibility_problem(asm: &Assemblage, table: &StrategyTable) -> Feasibility {
    let m = table.settings();
    let n = table.len();
    let groups = 2 * m + 1;
    let total = 2 * m;
    let rho_b = asm.bob_marginal();

    let mut targets = vec![Mat3::zeros(); groups];
    for x in 0..m {
        for a in 0..2 {
            targets[2 * x + a] = *asm.get(a, x);
        }
    }
    targets[total] = rho_b;

    let mut offsets = Vec::with_capacity(n + 1);
    let mut members = Vec::with_capacity(n * (m + 1));
    let mut counts = vec![0usize; groups];
    offsets.push(0);
    let mut tau0 = f64::INFINITY;
    let mut particular = Vec::with_capacity(n);
    for lambda in 0..n {
        let row = table.row(lambda);
        let mut p = rho_b * c(-(m as f64 - 1.0), 0.0);
        for (x, &a) in row.iter().enumerate() {
            p += asm.get(a as usize, x) * c(3.0, 0.0);
            if let Some(g) = outcome_group(x, a as usize) {
                members.push(g as u32);
                counts[g] += 1;
            }
        }
        members.push(total as u32);
        counts[total] += 1;
        offsets.push(members.len());
        tau0 = tau0.min(min_eig3(&p));
        particular.push(p);
    }

    // Strictly feasible primal start: Z_λ = particular_λ - (τ_lo + u0) I ⪰ u0 I.
    let u0 = 0.5;
    let tau_lo = tau0 - 2.0 * u0;
    let nf = n as f64;
    let mut rhs = Vec::with_capacity(9 * groups);
    let mut scalar = vec![0.0; 9 * groups];
    for g in 0..groups {
        let b = targets[g] * c(nf, 0.0) - Mat3::identity() * c(counts[g] as f64 * tau_lo, 0.0);
        rhs.extend_from_slice(&coords(&b));
        for k in 0..3 {
            scalar[9 * g + k] = counts[g] as f64;
        }
    }
    let shift = Mat3::identity() * c(tau_lo + u0, 0.0);
    let x: Vec<Mat3> = particular.iter().map(|p| p - shift).collect();

    // Strictly feasible dual start: Y_g = -α I, so S_λ = α·|groups(λ)|·I and
    // z_u = 3α Σ_g counts_g - 1.
    let weight: f64 = counts.iter().map(|&k| k as f64).sum();
    let alpha = 2.0 / (3.0 * weight);
    let mut y = vec![0.0; 9 * groups];
    for g in 0..groups {
        for k in 0..3 {
            y[9 * g + k] = -alpha;
        }
    }
    let s: Vec<Mat3> = (0..n).map(|j| Mat3::identity() * c(alpha * (offsets[j + 1] - offsets[j]) as f64, 0.0)).collect();
    let start = Iterate { x, s, xs: vec![u0], zs: vec![3.0 * alpha * weight - 1.0], y };

    let problem = Problem {
        groups,
        member_offsets: offsets,
        members,
        block_cost: vec![Mat3::zeros(); n],
        scalar_coef: vec![scalar],
        scalar_cost: vec![-1.0],
        rhs,
    };
    Feasibility { problem, tau_lo, targets, start }
}

/// Decomposition `σ_λ = (Z_λ + τ I) / 3^m`, with the equality residual
/// removed by the least-norm correction `σ_λ += Σ_{g ∋ λ} C_g`.
fn build_lhs(f: &Feasibility, it: &Iterate, table: &StrategyTable) -> LhsDecomposition {
    let n = table.len() as f64;
    let p = &f.problem;
    let tau = f.tau_lo + it.xs[0];
    let shift = Mat3::identity() * c(tau, 0.0);
    let mut sigma: Vec<Mat3> = it.x.iter().map(|z| (z + shift) / c(n, 0.0)).collect();

    let groups = p.groups;
    let mut overlap = DMatrix::<f64>::zeros(groups, groups);
    let mut residual = f.targets.clone();
    for (j, s) in sigma.iter().enumerate() {
        let gs = p.groups_of(j);
        for &g in gs {
            residual[g as usize] -= s;
            for &h in gs {
                overlap[(g as usize, h as usize)] += 1.0;
            }
        }
    }
    if let Some(ch) = overlap.cholesky() {
        let mut rhs = DMatrix::<f64>::zeros(groups, 9);
        for g in 0..groups {
            for (k, v) in coords(&residual[g]).iter().enumerate() {
                rhs[(g, k)] = *v;
            }
        }
        let sol = ch.solve(&rhs);
        let corr: Vec<Mat3> = (0..groups).map(|g| from_coords(&sol.row(g).iter().copied().collect::<Vec<_>>())).collect();
        for (j, s) in sigma.iter_mut().enumerate() {
            for &g in p.groups_of(j) {
                *s += corr[g as usize];
            }
        }
    }
    LhsDecomposition { sigma }
}

/// Witness from the dual variables: `F_{a|x} = -Y_{(a,x)} - Y_tot/m` for
/// `a < 2` and `F_{2|x} = -Y_tot/m`, so that `Σ_x F_{λ_x|x} = S_λ`.
fn build_witness(it: &Iterate, asm: &Assemblage, table: &StrategyTable) -> Option<DualCertificate> {
    let m = table.settings();
    let ymat = |g: usize| from_coords(&it.y[9 * g..9 * g + 9]);
    let ytot = ymat(2 * m) / c(m as f64, 0.0);
    let mut w: Vec<[Mat3; 3]> = (0..m)
        .map(|x| {
            core::array::from_fn(|a| match outcome_group(x, a) {
                Some(g) => -ymat(g) - ytot,
                None => -ytot,
            })
        })
        .collect();

    let min = (0..table.len()).map(|lambda| min_eig3(&strategy_sum(&w, table.row(lambda)))).fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        let shift = Mat3::identity() * c(-min / m as f64, 0.0);
        for fa in w.iter_mut().flatten() {
            *fa += shift;
        }
    }
    let per = table.per_outcome() as f64;
    let total: f64 = w.iter().flatten().map(|fa| per * fa.trace().re).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let scale = c(table.len() as f64 / total, 0.0);
    for fa in w.iter_mut().flatten() {
        *fa = (*fa + fa.adjoint()) * (scale * c(0.5, 0.0));
    }
    let value = witness_value(&w, asm);
    Some(DualCertificate { f: w, value })
}

/// Decides whether the assemblage admits an LHS model, returning a verified
/// certificate either way.
pub fn lhs_feasibility(asm: &Assemblage, tol: f64) -> Result<SteeringVerdict> {
    let table = enumerate_strategies(asm.settings())?;
    lhs_feasibility_with(asm, &table, tol)
}

fn lhs_feasibility_with(asm: &Assemblage, table: &StrategyTable, tol: f64) -> Result<SteeringVerdict> {
    check_shapes(asm, table)?;
    let feas = feasibility_problem(asm, table);
    let tau_lo = feas.tau_lo;
    let mut iterations = 0;

    for early in [true, false] {
        let (it, stats) = ipm::solve(&feas.problem, feas.start.clone(), Settings::default(), |it, st| {
            early
                && ((st.primal_infeasibility < EARLY_STOP_INFEASIBILITY && tau_lo + it.xs[0] > EARLY_STOP_MARGIN)
                    || (st.dual_infeasibility < EARLY_STOP_INFEASIBILITY && tau_lo - st.dual_objective < -EARLY_STOP_MARGIN))
        });
        iterations += stats.iterations;
        let tau = tau_lo + it.xs[0];
        let dual_first = tau < 0.0;
        for try_dual in [dual_first, !dual_first] {
            if try_dual {
                if let Some(w) = build_witness(&it, asm, table) {
                    if w.value < -STEERING_GUARD && verify_certificate(Certificate::Dual(&w), asm, table, tol)? {
                        return Ok(SteeringVerdict { verdict: Verdict::Steerable(w), tau, stats });
                    }
                }
            } else {
                let d = build_lhs(&feas, &it, table);
                if verify_certificate(Certificate::Lhs(&d), asm, table, tol)? {
                    return Ok(SteeringVerdict { verdict: Verdict::NoCertificate(d), tau, stats });
                }
            }
        }
        if stats.converged {
            break;
        }
    }
    Err(Error::SolverStalled { iterations })
}

/// Steering weight `1 - max Σ_λ tr σ̃_λ` over `σ̃_λ ⪰ 0` with
/// `Σ_λ D(a|x,λ) σ̃_λ ⪯ σ_{a|x}`; zero iff an LHS model exists.
pub fn steering_weight(asm: &Assemblage, tol: f64) -> Result<f64> {
    let table = enumerate_strategies(asm.settings())?;
    let m = table.settings();
    let n = table.len();
    let groups = OUTCOMES * m;
    let nf = n as f64;

    // Blocks: 3^m scaled strategy states, then one slack per (a, x).
    let mut offsets = Vec::with_capacity(n + groups + 1);
    let mut members = Vec::with_capacity(n * m + groups);
    offsets.push(0);
    for lambda in 0..n {
        for (x, &a) in table.row(lambda).iter().enumerate() {
            members.push((OUTCOMES * x + a as usize) as u32);
        }
        offsets.push(members.len());
    }
    for g in 0..groups {
        members.push(g as u32);
        offsets.push(members.len());
    }
    let mut block_cost = vec![-Mat3::identity(); n];
    block_cost.extend(core::iter::repeat_n(Mat3::zeros(), groups));
    let mut rhs = Vec::with_capacity(9 * groups);
    for x in 0..m {
        for a in 0..OUTCOMES {
            rhs.extend_from_slice(&coords(&(asm.get(a, x) * c(nf, 0.0))));
        }
    }
    let problem = Problem { groups, member_offsets: offsets, members, block_cost, scalar_coef: vec![], scalar_cost: vec![], rhs };
    let start = Iterate::standard(&problem, 1.0);
    let (_, stats) = ipm::solve(&problem, start, Settings::default(), |_, _| false);
    let accurate = stats.primal_infeasibility < tol && stats.dual_infeasibility < tol && stats.relative_gap < tol;
    if !(stats.converged || accurate) {
        return Err(Error::SolverStalled { iterations: stats.iterations });
    }
    let value = 1.0 + (stats.primal_objective + stats.dual_objective) / (2.0 * nf);
    Ok(if value < tol { 0.0 } else { value.min(1.0) })
}

/// Outcome of [`sdp_label`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    /// `-1`: a verified steering certificate was found; `+1`: none was.
    pub label: i8,
    pub trials_run: usize,
    pub stalled: usize,
    /// Directions of the successful draw and its witness value.
    pub witness: Option<WitnessSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub trial: usize,
    pub directions: Vec<Direction>,
    pub value: f64,
    pub iterations: usize,
}

/// Draws `trials` sets of `m` random spin directions and returns `-1` on the
/// first verified steering certificate, `+1` otherwise. Stalled solves count
/// as "no certificate".
pub fn sdp_label(rho: &DensityMatrix, m: usize, trials: usize, rng: &mut Rng, tol: f64) -> Result<LabelOutcome> {
    if trials == 0 {
        return Err(Error::ParamOutOfRange("sdp_label needs at least one trial".into()));
    }
    let table = enumerate_strategies(m)?;
    let mut stalled = 0;
    for trial in 0..trials {
        let directions = sample_directions(rng, m);
        let ms = directions.iter().map(measurement_from_direction).collect::<Result<Vec<_>>>()?;
        let asm = build_assemblage(rho, &ms)?;
        match lhs_feasibility_with(&asm, &table, tol) {
            Ok(SteeringVerdict { verdict: Verdict::Steerable(w), stats, .. }) => {
                return Ok(LabelOutcome {
                    label: -1,
                    trials_run: trial + 1,
                    stalled,
                    witness: Some(WitnessSummary { trial, directions, value: w.value, iterations: stats.iterations }),
                });
            }
            Ok(_) => {}
            Err(Error::SolverStalled { .. }) => stalled += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(LabelOutcome { label: 1, trials_run: trials, stalled, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{isotropic, random_density};
    use crate::measure::{mub_measurements, random_spin_measurements};

    fn mub_assemblage(rho: &DensityMatrix, m: usize) -> Assemblage {
        let mubs = mub_measurements();
        build_assemblage(rho, &mubs[..m]).unwrap()
    }

    #[test]
    fn maximally_mixed_has_lhs() {
        let rho = DensityMatrix::maximally_mixed(9).unwrap();
        let mut rng = Rng::new(1);
        let ms = random_spin_measurements(&mut rng, 3);
        let asm = build_assemblage(&rho, &ms).unwrap();
        let v = lhs_feasibility(&asm, DEFAULT_TOL).unwrap();
        assert!(!v.is_steerable(), "{v:?}");
    }

    #[test]
    fn maximally_entangled_is_steerable_with_mubs() {
        let rho = isotropic(1.0).unwrap();
        for m in 2..=4 {
            let asm = mub_assemblage(&rho, m);
            let v = lhs_feasibility(&asm, DEFAULT_TOL).unwrap();
            let table = enumerate_strategies(m).unwrap();
            let Verdict::Steerable(w) = &v.verdict else { panic!("m={m}: {v:?}") };
            assert!(verify_certificate(Certificate::Dual(w), &asm, &table, DEFAULT_TOL).unwrap());
            std::println!("m={m} tau={} iters={}", v.tau, v.stats.iterations);
        }
    }

    #[test]
    fn single_setting_always_has_lhs() {
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let rho = random_density(&mut rng);
            let ms = random_spin_measurements(&mut rng, 1);
            let asm = build_assemblage(&rho, &ms).unwrap();
            assert!(!lhs_feasibility(&asm, DEFAULT_TOL).unwrap().is_steerable());
        }
    }

    #[test]
    fn tampered_certificates_fail() {
        let rho = isotropic(1.0).unwrap();
        let asm = mub_assemblage(&rho, 3);
        let table = enumerate_strategies(3).unwrap();
        let Verdict::Steerable(mut w) = lhs_feasibility(&asm, DEFAULT_TOL).unwrap().verdict else { panic!() };
        w.f[1][2] = -w.f[1][2];
        assert!(!verify_certificate(Certificate::Dual(&w), &asm, &table, DEFAULT_TOL).unwrap());

        let mixed = isotropic(0.2).unwrap();
        let asm = mub_assemblage(&mixed, 3);
        let Verdict::NoCertificate(mut d) = lhs_feasibility(&asm, DEFAULT_TOL).unwrap().verdict else { panic!() };
        assert!(verify_certificate(Certificate::Lhs(&d), &asm, &table, DEFAULT_TOL).unwrap());
        d.sigma[4] = Mat3::zeros();
        assert!(!verify_certificate(Certificate::Lhs(&d), &asm, &table, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn steering_weight_of_isotropic_with_mubs() {
        let mut prev = 0.0;
        for eta in [0.3, 0.47, 0.49, 0.7, 1.0] {
            let asm = mub_assemblage(&isotropic(eta).unwrap(), 4);
            let sw = steering_weight(&asm, DEFAULT_TOL).unwrap();
            let steerable = lhs_feasibility(&asm, DEFAULT_TOL).unwrap().is_steerable();
            // both routes agree on which side of the 4-MUB threshold eta lies
            assert_eq!(sw > 1e-6, steerable, "eta={eta} sw={sw}");
            assert!(sw >= prev);
            prev = sw;
        }
        // pure-state conditionals are rank one and distinct MUB projectors
        // share no support, so no LHS part survives at eta = 1
        assert!((prev - 1.0).abs() < 1e-6);
    }

    #[test]
    fn maximally_entangled_gets_steerable_label() {
        let rho = isotropic(1.0).unwrap();
        let mut rng = Rng::new(3);
        let out = sdp_label(&rho, 3, 5, &mut rng, DEFAULT_TOL).unwrap();
        assert_eq!(out.label, -1);
        assert_eq!(out.trials_run, 1);
        assert!(out.witness.unwrap().value < -STEERING_GUARD);
    }

    #[test]
    fn no_steerable_labels_below_lhs_region() {
        // isotropic states with eta <= 1/2 admit LHS models for all projective measurements
        let mut rng = Rng::new(11);
        for m in 2..=4 {
            for eta in [0.0, 0.25, 0.5] {
                let out = sdp_label(&isotropic(eta).unwrap(), m, 4, &mut rng, DEFAULT_TOL).unwrap();
                assert_eq!(out.label, 1, "m={m} eta={eta}");
            }
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let rho = isotropic(1.0).unwrap();
        assert!(matches!(sdp_label(&rho, 2, 0, &mut Rng::new(1), DEFAULT_TOL), Err(Error::ParamOutOfRange(_))));
    }
}
