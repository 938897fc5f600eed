//! Eve's Holevo information and the asymptotic secret-key fraction
//! `r∞ = log₂ d − H(A|B) − I_E` for depolarizing observations.

use serde::Serialize;

use crate::channels::{error_vector_for_basis, BellSpectrum, ErrorVector};
use crate::error::{QkdError, Result};
use crate::info_theory::{depolarizing_vector, max_error_rate, shannon_entropy};
use crate::optimize::bisect;
use crate::qudit_algebra::{Family, ProtocolSpec, WeylIndex};

const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 200;
const BRACKET_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub q: f64,
    pub i_e: f64,
    pub h_ab: f64,
    /// `max(r_inf_raw, 0)`.
    pub r_inf: f64,
    pub r_inf_raw: f64,
}

/// `χ(A:E) = H(λ) − H(q_01)` for a Bell-diagonal state with key basis `U_01`.
pub fn holevo_general(spec: &ProtocolSpec, lam: &BellSpectrum) -> Result<f64> {
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
    let q01 = error_vector_for_basis(lam, WeylIndex { j: 0, k: 1 })?;
    // q_01 is a coarse-graining of λ, so the difference is ≥ 0 up to rounding.
    Ok((lam.entropy() - shannon_entropy(&q01.q)).max(0.0))
}

/// Eve's information for the 2-basis family: the maximum of χ over all Bell
/// spectra compatible with `q_01` and `q_10`, which is `H(q_10)`.
pub fn ie_two_basis(_q01: &ErrorVector, q10: &ErrorVector) -> f64 {
    shannon_entropy(&q10.q)
}

fn check_q(spec: &ProtocolSpec, q: f64) -> Result<()> {
    let max = max_error_rate(spec.dim());
    if !(0.0..=max).contains(&q) {
        return Err(QkdError::OutOfRange {
            name: "Q",
            value: q,
            min: 0.0,
            max,
        });
    }
    Ok(())
}

fn xlog2(coef: f64, arg: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * arg.log2()
    }
}

/// Closed-form Eve information under depolarizing observations with error
/// rate Q in every basis.
pub fn ie_depolarizing(spec: &ProtocolSpec, q: f64) -> Result<f64> {
    check_q(spec, q)?;
    let d = spec.dim().get() as f64;
    let ie = match spec.family() {
        Family::TwoBasis => -xlog2(q, q / (d - 1.0)) - xlog2(1.0 - q, 1.0 - q),
        Family::DPlusOneBasis => {
            let l00 = 1.0 - (d + 1.0) / d * q;
            -(xlog2(l00, 1.0 - q - q / d) - xlog2(l00, 1.0 - q))
                - (xlog2(q / d, q / (d * d - d)) - xlog2(q / d, 1.0 - q))
                - q * (1.0 / d).log2()
        }
    };
    Ok(ie.max(0.0))
}

/// Asymptotic key fraction with depolarizing statistics at error rate Q.
pub fn r_infinity(spec: &ProtocolSpec, q: f64) -> Result<RateReport> {
    let i_e = ie_depolarizing(spec, q)?;
    let h_ab = shannon_entropy(&depolarizing_vector(spec.dim(), q)?);
    let raw = spec.dim().log2() - h_ab - i_e;
    Ok(RateReport {
        q,
        i_e,
        h_ab,
        r_inf: raw.max(0.0),
        r_inf_raw: raw,
    })
}

/// Error rate at which `r∞` crosses zero.
pub fn critical_q(spec: &ProtocolSpec) -> Result<f64> {
    let lo = BRACKET_MARGIN;
    let hi = max_error_rate(spec.dim()) - BRACKET_MARGIN;
    let mut failure = None;
    let root = bisect(
        |q| match r_infinity(spec, q) {
            Ok(r) => r.r_inf_raw,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        ROOT_TOL,
        ROOT_MAX_ITER,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root
}
