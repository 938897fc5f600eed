//! Finite-key secret fraction `r_N` with statistical fluctuations on the
//! estimated error vectors, and the deterministic search over the free
//! protocol parameters (key-basis probability and the ε split).
//!
//! `r_N = (n/N)·[log₂d − I_E(worst) − H(q_01) − (1/n)log₂(2/ε_EC)
//!        − (2/n)log₂(1/ε_PA) − (2log₂d + 3)·√(log₂(2/ε̄)/n)]`
//!
//! Only Eve's information is evaluated at the worst-case vectors; the
//! error-correction cost uses the nominal key-basis statistics.

use std::fmt;
use std::str::FromStr;

use itertools::iproduct;
use serde::Serialize;

use crate::channels::{lambda_raw, BellSpectrum, ErrorVector};
use crate::error::{QkdError, Result};
use crate::info_theory::{depolarizing_vector, shannon_entropy, ProbVector};
use crate::optimize::golden_section_max;
use crate::qudit_algebra::{Dim, Family, ProtocolSpec, WeylIndex};
use crate::rates_asymptotic::{holevo_general, ie_two_basis};

/// How a fluctuation radius ξ is distributed over the error entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxMode {
    /// `Δq[t] = ξ/(2(d−1))` for every `t ≥ 1`.
    #[default]
    Equal,
    /// `Δq[t'] = ξ/2` on a single error entry (the worst one for Eve).
    Single,
    /// `Δq[t] = ξ/2` on every error entry.
    Brute,
}

impl fmt::Display for FluxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FluxMode::Equal => "equal",
            FluxMode::Single => "single",
            FluxMode::Brute => "brute",
        })
    }
}

impl FromStr for FluxMode {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(FluxMode::Equal),
            "single" => Ok(FluxMode::Single),
            "brute" => Ok(FluxMode::Brute),
            other => Err(QkdError::InvalidConfig(format!("unknown flux mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteKeyBudget {
    pub n_signals: u64,
    pub eps: f64,
    pub eps_ec: f64,
    pub n_pe: usize,
}

impl FiniteKeyBudget {
    pub fn new(spec: &ProtocolSpec, n_signals: u64, eps: f64, eps_ec: f64) -> Result<Self> {
        if n_signals == 0 {
            return Err(QkdError::InfeasibleParams("N must be at least 1".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(QkdError::OutOfRange { name: "eps", value: eps, min: 0.0, max: 1.0 });
        }
        if !(eps_ec > 0.0 && eps_ec < eps) {
            return Err(QkdError::OutOfRange { name: "eps_ec", value: eps_ec, min: 0.0, max: eps });
        }
        Ok(FiniteKeyBudget {
            n_signals,
            eps,
            eps_ec,
            n_pe: spec.n_pe(),
        })
    }

    /// Budget left after error correction.
    pub fn remaining(&self) -> f64 {
        self.eps - self.eps_ec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeParams {
    pub p01: f64,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub eps_bar: f64,
}

impl FreeParams {
    /// Spends the whole remaining budget in proportion to `weights`
    /// (privacy amplification, all parameter estimations together, smoothing).
    pub fn from_split(budget: &FiniteKeyBudget, p01: f64, weights: [f64; 3]) -> Self {
        let total: f64 = weights.iter().sum();
        // shave a relative 1e-12 so rounding never overdraws the budget
        let r = budget.remaining() * (1.0 - 1e-12) / total;
        FreeParams {
            p01,
            eps_pa: r * weights[0],
            eps_pe: r * weights[1] / budget.n_pe as f64,
            eps_bar: r * weights[2],
        }
    }

    pub fn total(&self, budget: &FiniteKeyBudget) -> f64 {
        budget.eps_ec + self.eps_pa + budget.n_pe as f64 * self.eps_pe + self.eps_bar
    }

    pub fn check(&self, budget: &FiniteKeyBudget) -> Result<()> {
        if !(self.p01 > 0.0 && self.p01 < 1.0) {
            return Err(QkdError::InfeasibleParams(format!("p01 = {} not in (0, 1)", self.p01)));
        }
        if !(self.eps_pa > 0.0 && self.eps_pe > 0.0 && self.eps_bar > 0.0) {
            return Err(QkdError::InfeasibleParams("failure probabilities must be positive".into()));
        }
        let total = self.total(budget);
        if total > budget.eps * (1.0 + 1e-12) {
            return Err(QkdError::InfeasibleParams(format!(
                "budget {total} exceeds eps = {}",
                budget.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    Ok,
    /// A fluctuated error vector reached the point where errors are as likely
    /// as agreement; no key can be certified.
    Saturated,
    /// No key or estimation samples (`n = 0` or `m = 0`).
    DegenerateSample,
}

/// Per-term breakdown of the bracket in `r_N` (all in bits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateTerms {
    pub log_d: f64,
    pub holevo_worst: f64,
    pub h_ab: f64,
    pub ec_term: f64,
    pub pa_term: f64,
    pub smooth_coefficient: f64,
    pub smooth_term: f64,
}

impl RateTerms {
    pub fn bracket(&self) -> f64 {
        self.log_d - self.holevo_worst - self.h_ab - self.ec_term - self.pa_term - self.smooth_term
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteRateReport {
    /// Secret bits per transmitted signal, floored at zero.
    pub r_n: f64,
    pub r_n_raw: f64,
    pub n: u64,
    /// Sample counts per protocol basis, key basis first.
    pub m_per_basis: Vec<u64>,
    pub xi_per_basis: Vec<f64>,
    pub params: FreeParams,
    pub terms: RateTerms,
    pub status: RateStatus,
    pub mode: FluxMode,
}

/// `ξ(m, d) = √((2 ln(1/ε_PE) + 2d ln(m+1)) / m)`.
pub fn xi(m: u64, dim: Dim, eps_pe: f64) -> Result<f64> {
    if m == 0 {
        return Err(QkdError::DegenerateSample);
    }
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(QkdError::OutOfRange { name: "eps_pe", value: eps_pe, min: 0.0, max: 1.0 });
    }
    let m_f = m as f64;
    let d = dim.get() as f64;
    Ok(((2.0 * (1.0 / eps_pe).ln() + 2.0 * d * (m_f + 1.0).ln()) / m_f).sqrt())
}

/// Equal-spread worst case: every error entry grows by `ξ/(2(d−1))` and
/// `q[0]` drops by `ξ/2`.
pub fn worst_case_vector(q: &ErrorVector, xi_val: f64) -> Result<ErrorVector> {
    worst_case_vector_with(q, xi_val, FluxMode::Equal, 1)
}

/// Worst-case vector for any fluctuation mode; `t_single` selects the entry
/// carrying the fluctuation in [`FluxMode::Single`].
///
/// Fails with `SaturatedStatistics` once the no-error probability no longer
/// dominates every error entry. Past that point moving further along the
/// fluctuation direction lowers the entropy again, so the shifted vector
/// would stop being a worst case.
pub fn worst_case_vector_with(
    q: &ErrorVector,
    xi_val: f64,
    mode: FluxMode,
    t_single: usize,
) -> Result<ErrorVector> {
    if !(xi_val >= 0.0) {
        return Err(QkdError::OutOfRange { name: "xi", value: xi_val, min: 0.0, max: f64::INFINITY });
    }
    let d = q.dim();
    let mut v = q.q.as_slice().to_vec();
    if d == 1 || xi_val == 0.0 {
        return Ok(q.clone());
    }
    match mode {
        FluxMode::Equal => {
            let step = xi_val / (2.0 * (d - 1) as f64);
            v[1..].iter_mut().for_each(|x| *x += step);
            v[0] -= xi_val / 2.0;
        }
        FluxMode::Single => {
            let t = t_single.clamp(1, d - 1);
            v[t] += xi_val / 2.0;
            v[0] -= xi_val / 2.0;
        }
        FluxMode::Brute => {
            v[1..].iter_mut().for_each(|x| *x += xi_val / 2.0);
            v[0] -= (d - 1) as f64 * xi_val / 2.0;
        }
    }
    let max_err = v[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if v[0] < max_err - 1e-12 {
        return Err(QkdError::SaturatedStatistics { xi: xi_val });
    }
    // renormalize onto q[0] to absorb rounding
    let rest: f64 = v[1..].iter().sum();
    v[0] = 1.0 - rest;
    Ok(ErrorVector {
        basis: q.basis,
        q: ProbVector::new(v)?,
    })
}

/// Smooth-entropy correction coefficient `2 log₂ d + 3`.
pub fn smooth_coefficient(dim: Dim) -> f64 {
    2.0 * dim.log2() + 3.0
}

fn floor_count(x: f64) -> u64 {
    // absorb representation error such as 1000·0.7² = 489.99999999999994
    (x + 1e-9).floor() as u64
}

/// Sample counts `(n, m per basis)` implied by `p01`. For the (d+1)-basis
/// family each `U_1k` basis is chosen with probability `(1 − p01)/d`.
pub fn sample_counts(spec: &ProtocolSpec, n_signals: u64, p01: f64) -> (u64, Vec<u64>) {
    let n_f = n_signals as f64;
    let n = floor_count(n_f * p01 * p01);
    let mut m = vec![n];
    match spec.family() {
        Family::TwoBasis => {
            let p = 1.0 - p01;
            m.push(floor_count(n_f * p * p));
        }
        Family::DPlusOneBasis => {
            let d = spec.dim().get();
            let p = (1.0 - p01) / d as f64;
            let mk = floor_count(n_f * p * p);
            m.extend(std::iter::repeat_n(mk, d));
        }
    }
    (n, m)
}

/// Eve's information evaluated on the worst-case versions of `nominal`
/// (ordered as `spec.basis_labels()`) with radii `xis`.
fn eve_information_worst(
    spec: &ProtocolSpec,
    nominal: &[ErrorVector],
    xis: &[f64],
    mode: FluxMode,
) -> Result<f64> {
    let dim = spec.dim();
    let d = dim.get();
    let singles: Vec<usize> = match mode {
        FluxMode::Single => (1..d).collect(),
        _ => vec![1],
    };
    let mut worst = f64::NEG_INFINITY;
    for t in singles {
        let shifted = nominal
            .iter()
            .zip(xis)
            .map(|(q, &x)| worst_case_vector_with(q, x, mode, t))
            .collect::<Result<Vec<_>>>()?;
        let ie = match spec.family() {
            Family::TwoBasis => ie_two_basis(&shifted[0], &shifted[1]),
            Family::DPlusOneBasis => {
                let q1: Vec<&[f64]> = shifted[1..].iter().map(|e| e.q.as_slice()).collect();
                let raw = lambda_raw(dim, shifted[0].q.as_slice(), &q1);
                // Worst-case vectors of different bases need not come from one
                // common state; project onto the physical simplex.
                let (lam, _moved) = BellSpectrum::project(dim, raw)?;
                holevo_general(spec, &lam)?
            }
        };
        worst = worst.max(ie);
    }
    Ok(worst)
}

/// Depolarizing a priori statistics in every protocol basis.
pub fn depolarizing_observation(spec: &ProtocolSpec, q: f64) -> Result<Vec<ErrorVector>> {
    let v = depolarizing_vector(spec.dim(), q)?;
    Ok(spec
        .basis_labels()
        .into_iter()
        .map(|basis| ErrorVector { basis, q: v.clone() })
        .collect())
}

/// `r_N` for depolarizing statistics at rate Q with the equal-spread worst case.
pub fn r_finite(
    spec: &ProtocolSpec,
    q: f64,
    budget: &FiniteKeyBudget,
    params: &FreeParams,
) -> Result<FiniteRateReport> {
    r_finite_mode(spec, q, budget, params, FluxMode::Equal)
}

pub fn r_finite_mode(
    spec: &ProtocolSpec,
    q: f64,
    budget: &FiniteKeyBudget,
    params: &FreeParams,
    mode: FluxMode,
) -> Result<FiniteRateReport> {
    let nominal = depolarizing_observation(spec, q)?;
    r_finite_observed(spec, &nominal, budget, params, mode)
}

/// `r_N` for arbitrary observed error vectors, one per protocol basis.
pub fn r_finite_observed(
    spec: &ProtocolSpec,
    nominal: &[ErrorVector],
    budget: &FiniteKeyBudget,
    params: &FreeParams,
    mode: FluxMode,
) -> Result<FiniteRateReport> {
    params.check(budget)?;
    if budget.n_pe != spec.n_pe() {
        return Err(QkdError::InfeasibleParams(format!(
            "budget counts {} estimated parameters, protocol has {}",
            budget.n_pe,
            spec.n_pe()
        )));
    }
    let labels = spec.basis_labels();
    if nominal.len() != labels.len() || nominal.iter().zip(&labels).any(|(e, l)| e.basis != *l) {
        return Err(QkdError::IncompleteStatistics(format!(
            "expected error vectors for {labels:?}"
        )));
    }
    let dim = spec.dim();
    let log_d = dim.log2();
    let (n, m_per_basis) = sample_counts(spec, budget.n_signals, params.p01);
    let h_ab = shannon_entropy(&nominal[0].q);

    let n_f = n as f64;
    let mut terms = RateTerms {
        log_d,
        holevo_worst: log_d,
        h_ab,
        ec_term: (2.0 / budget.eps_ec).log2() / n_f,
        pa_term: 2.0 * (1.0 / params.eps_pa).log2() / n_f,
        smooth_coefficient: smooth_coefficient(dim),
        smooth_term: smooth_coefficient(dim) * ((2.0 / params.eps_bar).log2() / n_f).sqrt(),
    };

    let xis: Result<Vec<f64>> = m_per_basis.iter().map(|&m| xi(m, dim, params.eps_pe)).collect();
    let (status, xi_per_basis) = match xis {
        Err(QkdError::DegenerateSample) => (RateStatus::DegenerateSample, vec![f64::INFINITY; m_per_basis.len()]),
        Err(e) => return Err(e),
        Ok(xis) => match eve_information_worst(spec, nominal, &xis, mode) {
            Ok(ie) => {
                terms.holevo_worst = ie;
                (RateStatus::Ok, xis)
            }
            Err(QkdError::SaturatedStatistics { .. }) => (RateStatus::Saturated, xis),
            Err(e) => return Err(e),
        },
    };

    let r_n_raw = match status {
        RateStatus::Ok => n_f / budget.n_signals as f64 * terms.bracket(),
        _ => f64::NEG_INFINITY,
    };
    Ok(FiniteRateReport {
        r_n: r_n_raw.max(0.0),
        r_n_raw,
        n,
        m_per_basis,
        xi_per_basis,
        params: *params,
        terms,
        status,
        mode,
    })
}

/// Search settings for [`optimize_r_finite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Coarse `p01` grid `{step, 2·step, …}` below 1.
    pub p01_step: f64,
    pub p01_tol: f64,
    /// log₁₀ of the relative weights of (ε_PA, n_PE·ε_PE, ε̄) on the grid.
    pub log_weights: &'static [f64],
    pub improve_tol: f64,
    pub max_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            p01_step: 0.01,
            p01_tol: 1e-4,
            log_weights: &[-4.0, -3.0, -2.0, -1.0, 0.0],
            improve_tol: 1e-9,
            max_rounds: 50,
        }
    }
}

const P01_MIN: f64 = 1e-4;
const P01_MAX: f64 = 1.0 - 1e-4;

/// Best `r_N` over the free parameters for depolarizing statistics.
pub fn optimize_r_finite(
    spec: &ProtocolSpec,
    q: f64,
    n_signals: u64,
    eps: f64,
    eps_ec: f64,
) -> Result<FiniteRateReport> {
    optimize_r_finite_with(spec, q, n_signals, eps, eps_ec, FluxMode::Equal, &SearchConfig::default())
}

/// Grid search over `p01` and the log-simplex of ε splits, followed by
/// golden-section / coordinate-descent refinement. Candidates are ranked by
/// the unfloored rate so that zero-rate regions still report the closest
/// parameters. Ties keep the earlier candidate (smaller `p01`, then
/// lexicographically smaller weights).
pub fn optimize_r_finite_with(
    spec: &ProtocolSpec,
    q: f64,
    n_signals: u64,
    eps: f64,
    eps_ec: f64,
    mode: FluxMode,
    cfg: &SearchConfig,
) -> Result<FiniteRateReport> {
    let budget = FiniteKeyBudget::new(spec, n_signals, eps, eps_ec)?;
    let nominal = depolarizing_observation(spec, q)?;
    let eval = |p01: f64, x: [f64; 3]| -> Result<FiniteRateReport> {
        let w = x.map(|e| 10f64.powf(e));
        let params = FreeParams::from_split(&budget, p01, w);
        r_finite_observed(spec, &nominal, &budget, &params, mode)
    };

    let steps = (1.0 / cfg.p01_step).round() as usize;
    let mut best: Option<(f64, [f64; 3], FiniteRateReport)> = None;
    for (&a, &b, &c) in iproduct!(cfg.log_weights, cfg.log_weights, cfg.log_weights) {
        for i in 1..steps {
            let p01 = i as f64 * cfg.p01_step;
            let rep = eval(p01, [a, b, c])?;
            if best.as_ref().is_none_or(|(_, _, r)| better(&rep, r)) {
                best = Some((p01, [a, b, c], rep));
            }
        }
    }
    let (mut p01, mut x, mut report) = best.expect("non-empty search grid");
    if report.status != RateStatus::Ok {
        return Ok(report);
    }

    let score = |rep: Result<FiniteRateReport>| rep.map(|r| r.r_n_raw).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..cfg.max_rounds {
        let before = report.r_n_raw;

        let lo = (p01 - cfg.p01_step).max(P01_MIN);
        let hi = (p01 + cfg.p01_step).min(P01_MAX);
        let (p_new, _) = golden_section_max(|p| score(eval(p, x)), lo, hi, cfg.p01_tol);
        let cand = eval(p_new, x)?;
        if better(&cand, &report) {
            p01 = p_new;
            report = cand;
        }

        for axis in 0..3 {
            let (xa, _) = golden_section_max(
                |v| {
                    let mut y = x;
                    y[axis] = v;
                    score(eval(p01, y))
                },
                x[axis] - 1.0,
                x[axis] + 1.0,
                1e-3,
            );
            let mut y = x;
            y[axis] = xa;
            let cand = eval(p01, y)?;
            if better(&cand, &report) {
                x = y;
                report = cand;
            }
        }

        if report.r_n_raw - before < cfg.improve_tol {
            break;
        }
    }
    Ok(report)
}

fn better(a: &FiniteRateReport, b: &FiniteRateReport) -> bool {
    a.r_n_raw > b.r_n_raw
}

/// `(N, report)` pairs on a log-spaced grid of signal counts, computed in
/// parallel and returned in grid order.
pub fn sweep_signals(
    spec: &ProtocolSpec,
    q: f64,
    grid: &[u64],
    eps: f64,
    eps_ec: f64,
    mode: FluxMode,
) -> Result<Vec<FiniteRateReport>> {
    use rayon::prelude::*;
    let cfg = SearchConfig::default();
    grid.par_iter()
        .map(|&n| optimize_r_finite_with(spec, q, n, eps, eps_ec, mode, &cfg))
        .collect()
}

/// `points` integers log-spaced between `n_min` and `n_max` inclusive.
pub fn log_grid(n_min: u64, n_max: u64, points: usize) -> Vec<u64> {
    if points <= 1 || n_min >= n_max {
        return vec![n_min];
    }
    let (a, b) = ((n_min as f64).log10(), (n_max as f64).log10());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Key-basis label used throughout.
pub const KEY_BASIS: WeylIndex = WeylIndex { j: 0, k: 1 };
