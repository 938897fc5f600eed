//! Bell-diagonal spectra, error vectors and the linear maps between them.
//!
//! With `λ_jk` the weight of `|Φ_jk⟩`, the outcome difference `t = a − b` in
//! the basis of `U_01` is distributed as `Σ_k λ_{t,k}` and in the basis of
//! `U_1k` as `Σ_j λ_{j, kj−t}`. The `U_1k` form holds for every `k` only when
//! d is prime; for composite d only `k = 0` is used.

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::info_theory::{self, ProbVector};
use crate::qudit_algebra::{Dim, Family, ProtocolSpec, WeylIndex};

const CLAMP_TOL: f64 = 1e-12;
const NEGATIVE_TOL: f64 = 1e-9;

/// `q[t] = Prob(a − b ≡ t mod d)` observed in the basis of `U_{basis}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub basis: WeylIndex,
    pub q: ProbVector,
}

impl ErrorVector {
    pub fn new(basis: WeylIndex, q: Vec<f64>) -> Result<Self> {
        Ok(ErrorVector {
            basis,
            q: ProbVector::new(q)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Total error probability `1 − q[0]`.
    pub fn error_rate(&self) -> f64 {
        1.0 - self.q[0]
    }
}

/// Eigenvalues `λ_jk` of a Bell-diagonal two-qudit state, row-major in `(j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellSpectrum {
    dim: Dim,
    lambda: Vec<f64>,
}

impl BellSpectrum {
    /// Validates normalization and sign; entries down to `−1e-12` are clamped
    /// to zero.
    pub fn new(dim: Dim, lambda: Vec<f64>) -> Result<Self> {
        let d = dim.get();
        if lambda.len() != d * d {
            return Err(QkdError::InvalidDistribution(format!(
                "expected {} spectrum entries, got {}",
                d * d,
                lambda.len()
            )));
        }
        let mut lambda = lambda;
        for (i, l) in lambda.iter_mut().enumerate() {
            if !l.is_finite() {
                return Err(QkdError::InvalidDistribution(format!("entry {i} is {l}")));
            }
            if *l < -CLAMP_TOL {
                return Err(QkdError::NegativeSpectrum {
                    j: i / d,
                    k: i % d,
                    value: *l,
                });
            }
            *l = l.max(0.0);
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > NEGATIVE_TOL {
            return Err(QkdError::InvalidDistribution(format!(
                "spectrum sums to {sum}"
            )));
        }
        Ok(BellSpectrum { dim, lambda })
    }

    /// Projects raw (possibly slightly unphysical) weights onto the simplex by
    /// zeroing negative entries and renormalizing. Returns the spectrum and the
    /// total negative mass removed.
    pub fn project(dim: Dim, mut raw: Vec<f64>) -> Result<(Self, f64)> {
        let moved: f64 = raw.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        raw.iter_mut().for_each(|l| *l = l.max(0.0));
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(QkdError::InvalidDistribution("spectrum has no positive mass".into()));
        }
        raw.iter_mut().for_each(|l| *l /= sum);
        Ok((Self::new(dim, raw)?, moved))
    }

    /// `λ_00 = 1`.
    pub fn pure(dim: Dim) -> Self {
        let d = dim.get();
        let mut lambda = vec![0.0; d * d];
        lambda[0] = 1.0;
        BellSpectrum { dim, lambda }
    }

    pub fn uniform(dim: Dim) -> Self {
        let n = dim.get() * dim.get();
        BellSpectrum {
            dim,
            lambda: vec![1.0 / n as f64; n],
        }
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.lambda[j * self.dim.get() + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn entropy(&self) -> f64 {
        info_theory::entropy_bits(&self.lambda)
    }
}

/// Error vector for a single basis label `U_01` or `U_1k`.
pub fn error_vector_for_basis(lam: &BellSpectrum, basis: WeylIndex) -> Result<ErrorVector> {
    let dim = lam.dim();
    let d = dim.get();
    let q: Vec<f64> = match (basis.j, basis.k) {
        (0, 1) => (0..d).map(|t| (0..d).map(|k| lam.get(t, k)).sum()).collect(),
        (1, k) => {
            if k != 0 && !dim.is_prime() {
                return Err(QkdError::NonPrimeDimension(d));
            }
            (0..d)
                .map(|t| {
                    (0..d)
                        .map(|j| lam.get(j, (k * j + d - t) % d))
                        .sum()
                })
                .collect()
        }
        _ => {
            return Err(QkdError::InvalidConfig(format!(
                "{basis} is not a protocol basis"
            )))
        }
    };
    ErrorVector::new(basis, q)
}

/// One error vector per protocol basis, in `spec.basis_labels()` order.
pub fn q_from_lambda(spec: &ProtocolSpec, lam: &BellSpectrum) -> Result<Vec<ErrorVector>> {
    if spec.dim() != lam.dim() {
        return Err(QkdError::InvalidConfig(format!(
            "spectrum dimension {} does not match protocol dimension {}",
            lam.dim(),
            spec.dim()
        )));
    }
    if spec.family() == Family::DPlusOneBasis && !spec.dim().is_prime() {
        return Err(QkdError::NonPrimeDimension(spec.dim().get()));
    }
    spec.basis_labels()
        .into_iter()
        .map(|b| error_vector_for_basis(lam, b))
        .collect()
}

/// Raw inverse map `λ_jk = (Σ_s q_1s[sj−k] + q_01[j] − 1)/d`, without any
/// sign check. `q1[s]` is the vector of basis `U_1s`.
pub fn lambda_raw(dim: Dim, q01: &[f64], q1: &[&[f64]]) -> Vec<f64> {
    let d = dim.get();
    let mut lambda = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            let s_sum: f64 = (0..d).map(|s| q1[s][(s * j + d - k) % d]).sum();
            lambda[j * d + k] = (s_sum + q01[j] - 1.0) / d as f64;
        }
    }
    lambda
}

/// Reconstructs the Bell spectrum from all `d+1` error vectors (prime d).
pub fn lambda_from_q(dim: Dim, qs: &[ErrorVector]) -> Result<BellSpectrum> {
    let d = dim.get();
    if !dim.is_prime() {
        return Err(QkdError::NonPrimeDimension(d));
    }
    if let Some(bad) = qs.iter().find(|e| e.dim() != d) {
        return Err(QkdError::InvalidConfig(format!(
            "error vector for {} has length {}, expected {d}",
            bad.basis,
            bad.dim()
        )));
    }
    let find = |idx: WeylIndex| {
        qs.iter()
            .find(|e| e.basis == idx)
            .map(|e| e.q.as_slice())
            .ok_or_else(|| QkdError::IncompleteStatistics(format!("missing {idx}")))
    };
    let q01 = find(WeylIndex { j: 0, k: 1 })?;
    let q1 = (0..d)
        .map(|s| find(WeylIndex { j: 1, k: s }))
        .collect::<Result<Vec<_>>>()?;
    let raw = lambda_raw(dim, q01, &q1);
    if let Some((i, &v)) = raw
        .iter()
        .enumerate()
        .find(|(_, &v)| v < -NEGATIVE_TOL)
    {
        return Err(QkdError::NegativeSpectrum {
            j: i / d,
            k: i % d,
            value: v,
        });
    }
    let clamped = raw.into_iter().map(|v| v.max(0.0)).collect();
    BellSpectrum::new(dim, clamped)
}

/// Spectrum whose error vectors are depolarizing with rate Q in every basis:
/// `λ_00 = 1 − (d+1)Q/d`, all others `Q/(d(d−1))`.
pub fn depolarizing_spectrum(dim: Dim, q: f64) -> Result<BellSpectrum> {
    let d = dim.get() as f64;
    let max = d / (d + 1.0);
    if !(0.0..=max).contains(&q) {
        return Err(QkdError::OutOfRange {
            name: "Q",
            value: q,
            min: 0.0,
            max,
        });
    }
    let n = dim.get() * dim.get();
    let mut lambda = vec![q / (d * (d - 1.0)); n];
    lambda[0] = (1.0 - (d + 1.0) * q / d).max(0.0);
    BellSpectrum::new(dim, lambda)
}
