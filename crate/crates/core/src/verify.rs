//! Numerical checks of the algebraic identities behind the protocols:
//! unitarity, Weyl commutation, Bell-basis orthonormality, the
//! `U ⊗ U*` eigenstate property, mutual unbiasedness of the protocol bases,
//! the λ↔q round trip, and agreement of exact projections with the analytic
//! error vectors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::channels::{lambda_from_q, q_from_lambda, BellSpectrum};
use crate::error::Result;
use crate::qudit_algebra::{
    bell_state, commutator_phase, protocol_bases, weyl_operator, Basis, ComplexMatrix, Dim, Family,
    ProtocolSpec, StateVector, WeylIndex,
};
use crate::simulator::{difference_marginal, joint_outcome_distribution};

pub const UNITARY_TOL: f64 = 1e-12;
pub const COMMUTATION_TOL: f64 = 1e-12;
pub const ORTHONORMAL_TOL: f64 = 1e-10;
pub const EIGENSTATE_TOL: f64 = 1e-10;
pub const MUB_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-12;
pub const PROJECTION_TOL: f64 = 1e-10;

/// Largest d for the two-qudit checks (Bell eigenstates, exact projections).
pub const MAX_TWO_QUDIT_DIM: usize = 7;
const COMMUTATION_SAMPLES: usize = 256;
const ROUND_TRIP_SAMPLES: usize = 100;
const PROJECTION_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub d: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, d: usize, max_error: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            d,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

/// Deliberate defects for exercising the failure path of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Perturbs one entry of every Weyl operator by `1e-6`.
    PerturbWeyl,
}

fn weyl(dim: Dim, idx: WeylIndex, fault: Fault) -> ComplexMatrix {
    let mut u = weyl_operator(dim, idx);
    if fault == Fault::PerturbWeyl {
        u[(0, 0)] += Complex64::new(1e-6, 0.0);
    }
    u
}

fn all_indices(d: usize) -> impl Iterator<Item = WeylIndex> {
    (0..d).flat_map(move |j| (0..d).map(move |k| WeylIndex { j, k }))
}

fn max_entry(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn check_unitarity(dim: Dim, fault: Fault) -> CheckResult {
    let d = dim.get();
    let id = ComplexMatrix::identity(d, d);
    let err = all_indices(d)
        .map(|idx| {
            let u = weyl(dim, idx, fault);
            max_entry(&(u.adjoint() * &u - &id))
        })
        .fold(0.0, f64::max);
    CheckResult::new("unitarity", d, err, UNITARY_TOL)
}

/// `U_a U_b = ω^{phase} U_b U_a`; exhaustive for small d, seeded sample above.
pub fn check_commutation(dim: Dim, fault: Fault) -> CheckResult {
    let d = dim.get();
    let pairs: Vec<(WeylIndex, WeylIndex)> = if d <= MAX_TWO_QUDIT_DIM {
        all_indices(d)
            .flat_map(|a| all_indices(d).map(move |b| (a, b)))
            .collect()
    } else {
        let mut rng = ChaCha20Rng::seed_from_u64(d as u64);
        (0..COMMUTATION_SAMPLES)
            .map(|_| {
                let mut idx = || WeylIndex { j: rng.gen_range(0..d), k: rng.gen_range(0..d) };
                (idx(), idx())
            })
            .collect()
    };
    let err = pairs
        .into_iter()
        .map(|(a, b)| {
            let (ua, ub) = (weyl(dim, a, fault), weyl(dim, b, fault));
            let phase = dim.omega_pow(commutator_phase(dim, a, b) as i64);
            max_entry(&(&ua * &ub - (&ub * &ua) * phase))
        })
        .fold(0.0, f64::max);
    CheckResult::new("weyl_commutation", d, err, COMMUTATION_TOL)
}

fn gram_error(vectors: &[StateVector]) -> f64 {
    let n = vectors.len();
    let m = DMatrix::from_fn(vectors[0].len(), n, |r, c| vectors[c][r]);
    let gram = m.adjoint() * &m;
    max_entry(&(gram - ComplexMatrix::identity(n, n)))
}

pub fn check_bell_orthonormality(dim: Dim) -> CheckResult {
    let d = dim.get();
    let states: Vec<StateVector> = all_indices(d).map(|i| bell_state(dim, i)).collect();
    CheckResult::new("bell_orthonormality", d, gram_error(&states), ORTHONORMAL_TOL)
}

/// `(A ⊗ B)|v⟩` via the reshaped product `A V Bᵀ`.
fn apply_product(dim: Dim, a: &ComplexMatrix, b: &ComplexMatrix, v: &StateVector) -> StateVector {
    let d = dim.get();
    let vm = ComplexMatrix::from_fn(d, d, |x, y| v[x * d + y]);
    let out = a * vm * b.transpose();
    StateVector::from_fn(d * d, |i, _| out[(i / d, i % d)])
}

/// Every Bell state is an eigenvector of every `U_jk ⊗ U*_jk`.
pub fn check_bell_eigenstates(dim: Dim, fault: Fault) -> CheckResult {
    let d = dim.get();
    let states: Vec<StateVector> = all_indices(d).map(|i| bell_state(dim, i)).collect();
    let mut err: f64 = 0.0;
    for idx in all_indices(d) {
        let u = weyl(dim, idx, fault);
        let uc = u.map(|z| z.conj());
        for phi in &states {
            let w = apply_product(dim, &u, &uc, phi);
            let phase = phi.dotc(&w);
            err = err.max((&w - phi * phase).norm()).max((phase.norm() - 1.0).abs());
        }
    }
    CheckResult::new("bell_eigenstates", d, err, EIGENSTATE_TOL)
}

/// `(U ⊗ U*)|Φ_00⟩ = |Φ_00⟩` for every Weyl operator.
pub fn check_phi00_invariance(dim: Dim, fault: Fault) -> CheckResult {
    let d = dim.get();
    let phi = bell_state(dim, WeylIndex { j: 0, k: 0 });
    let err = all_indices(d)
        .map(|idx| {
            let u = weyl(dim, idx, fault);
            let w = apply_product(dim, &u, &u.map(|z| z.conj()), &phi);
            (w - &phi).norm()
        })
        .fold(0.0, f64::max);
    CheckResult::new("phi00_invariance", d, err, EIGENSTATE_TOL)
}

/// Protocol bases of the largest family available at this d.
fn verification_spec(dim: Dim) -> Result<ProtocolSpec> {
    let family = if dim.is_prime() { Family::DPlusOneBasis } else { Family::TwoBasis };
    ProtocolSpec::new(family, dim)
}

fn mub_error(bases: &[Basis]) -> f64 {
    let d = bases[0].dim() as f64;
    let mut err: f64 = 0.0;
    for (i, e) in bases.iter().enumerate() {
        err = err.max(gram_error(&e.vectors));
        for f in &bases[i + 1..] {
            for u in &e.vectors {
                for v in &f.vectors {
                    err = err.max((u.dotc(v).norm_sqr() - 1.0 / d).abs());
                }
            }
        }
    }
    err
}

/// Pairwise unbiasedness (and orthonormality) of the protocol bases.
pub fn check_mub(dim: Dim, fault: Fault) -> Result<CheckResult> {
    let spec = verification_spec(dim)?;
    let mut bases = protocol_bases(&spec)?;
    if fault == Fault::PerturbWeyl {
        bases[0].vectors[0][0] += Complex64::new(1e-6, 0.0);
    }
    Ok(CheckResult::new("mub_overlaps", dim.get(), mub_error(&bases), MUB_TOL))
}

/// Closed-form eigenvectors carry their labelled eigenvalues.
pub fn check_eigenbases(dim: Dim, fault: Fault) -> Result<CheckResult> {
    let spec = verification_spec(dim)?;
    let mut err: f64 = 0.0;
    for b in protocol_bases(&spec)? {
        let mut u = b.operator(dim);
        if fault == Fault::PerturbWeyl {
            u[(0, 0)] += Complex64::new(1e-6, 0.0);
        }
        for (a, v) in b.vectors.iter().enumerate() {
            err = err.max((&u * v - v * b.eigenvalue(dim, a)).norm());
        }
    }
    Ok(CheckResult::new("eigenbasis_labels", dim.get(), err, EIGENSTATE_TOL))
}

fn random_spectrum(dim: Dim, rng: &mut ChaCha20Rng) -> Result<BellSpectrum> {
    let n = dim.get() * dim.get();
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let s: f64 = w.iter().sum();
    BellSpectrum::new(dim, w.into_iter().map(|x| x / s).collect())
}

/// λ → q → λ over seeded random spectra (prime d only).
pub fn check_round_trip(dim: Dim, samples: usize, seed: u64) -> Result<CheckResult> {
    let spec = ProtocolSpec::new(Family::DPlusOneBasis, dim)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let lam = random_spectrum(dim, &mut rng)?;
        let back = lambda_from_q(dim, &q_from_lambda(&spec, &lam)?)?;
        for (a, b) in lam.as_slice().iter().zip(back.as_slice()) {
            err = err.max((a - b).abs());
        }
    }
    Ok(CheckResult::new("lambda_q_round_trip", dim.get(), err, ROUND_TRIP_TOL))
}

/// Difference marginals of exact two-qudit projections against the analytic
/// error vectors, over seeded random spectra.
pub fn check_projection_statistics(dim: Dim, samples: usize, seed: u64) -> Result<CheckResult> {
    let spec = verification_spec(dim)?;
    let bases = protocol_bases(&spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..samples {
        let lam = random_spectrum(dim, &mut rng)?;
        let analytic = q_from_lambda(&spec, &lam)?;
        for (basis, e) in bases.iter().zip(&analytic) {
            let table = joint_outcome_distribution(dim, &lam, basis)?;
            let q = difference_marginal(dim, &table);
            for (x, y) in q.iter().zip(e.q.as_slice()) {
                err = err.max((x - y).abs());
            }
        }
    }
    Ok(CheckResult::new("projection_statistics", dim.get(), err, PROJECTION_TOL))
}

/// Full suite at one dimension. Two-qudit checks run only for `d ≤ 7`, the
/// round trip only for prime d.
pub fn verify_dim(dim: Dim, fault: Fault) -> Result<Vec<CheckResult>> {
    let d = dim.get();
    let mut out = vec![
        check_unitarity(dim, fault),
        check_commutation(dim, fault),
        check_eigenbases(dim, fault)?,
        check_mub(dim, fault)?,
    ];
    if d <= MAX_TWO_QUDIT_DIM {
        out.push(check_bell_orthonormality(dim));
        out.push(check_bell_eigenstates(dim, fault));
        out.push(check_phi00_invariance(dim, fault));
        out.push(check_projection_statistics(dim, PROJECTION_SAMPLES, 7 * d as u64)?);
    }
    if dim.is_prime() {
        out.push(check_round_trip(dim, ROUND_TRIP_SAMPLES, d as u64)?);
    }
    Ok(out)
}
