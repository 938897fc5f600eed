//! Monte Carlo oracle for the error statistics of a Bell-diagonal source.
//!
//! Alice measures the qudit carrying the Weyl error (second tensor factor) in
//! the eigenbasis of `U_jk`, Bob measures the other qudit in the eigenbasis of
//! `U*_jk`. With this assignment the outcome difference `a − b` follows the
//! analytic error vectors of [`crate::channels`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::channels::{q_from_lambda, BellSpectrum, ErrorVector};
use crate::error::{QkdError, Result};
use crate::info_theory::ProbVector;
use crate::qudit_algebra::{bell_state, conjugate_basis, protocol_bases, Basis, Dim, ProtocolSpec, WeylIndex};

/// Largest dimension for the exact two-qudit projection.
pub const MAX_EXACT_DIM: usize = 11;
/// Deviation allowed between empirical and analytic probabilities, in
/// binomial standard errors.
pub const Z_LIMIT: f64 = 5.0;
/// Upper quantile used for the chi-square goodness-of-fit check.
pub const CHI_SQUARE_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Joint outcome tables from explicit projections (`d ≤ 11`).
    #[default]
    Exact,
    /// Sample `t` from the analytic error vector, `a` uniformly, `b = a − t`.
    Fast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: ProtocolSpec,
    pub lam: BellSpectrum,
    pub rounds: u64,
    pub seed: u64,
    /// Basis choice probabilities, shared by Alice and Bob, in
    /// `spec.basis_labels()` order.
    pub basis_probs: Vec<f64>,
    pub mode: SimMode,
}

impl SimConfig {
    /// Uniform basis choice, exact mode.
    pub fn new(spec: ProtocolSpec, lam: BellSpectrum, rounds: u64, seed: u64) -> Self {
        let nb = spec.basis_labels().len();
        SimConfig {
            spec,
            lam,
            rounds,
            seed,
            basis_probs: vec![1.0 / nb as f64; nb],
            mode: SimMode::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(QkdError::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.lam.dim() != self.spec.dim() {
            return Err(QkdError::InvalidConfig("spectrum dimension does not match protocol".into()));
        }
        let nb = self.spec.basis_labels().len();
        if self.basis_probs.len() != nb {
            return Err(QkdError::InvalidConfig(format!(
                "basis_probs has {} entries, protocol has {nb} bases",
                self.basis_probs.len()
            )));
        }
        ProbVector::new(self.basis_probs.clone())?;
        if self.mode == SimMode::Exact && self.spec.dim().get() > MAX_EXACT_DIM {
            return Err(QkdError::DimensionTooLarge(self.spec.dim().get(), MAX_EXACT_DIM));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisStats {
    pub basis: WeylIndex,
    pub sifted: u64,
    /// `counts[a][b]`.
    pub counts: Vec<Vec<u64>>,
    pub empirical_q: Vec<f64>,
    pub analytic_q: Vec<f64>,
    pub chi_square: f64,
    pub dof: usize,
    pub chi_square_critical: f64,
    /// Largest `|empirical − analytic| / standard error` over the entries.
    pub max_z: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rounds: u64,
    pub sifted_count: u64,
    pub sifting_fraction_expected: f64,
    pub sifting_z: f64,
    pub bases: Vec<BasisStats>,
    pub passed: bool,
}

impl SimResult {
    pub fn empirical_q(&self) -> Vec<ErrorVector> {
        self.bases
            .iter()
            .filter(|b| b.sifted > 0)
            .map(|b| ErrorVector::new(b.basis, b.empirical_q.clone()))
            .collect::<Result<Vec<_>>>()
            .unwrap_or_default()
    }
}

/// `P(a, b) = Σ_jk λ_jk |(⟨b̃| ⊗ ⟨a|)|Φ_jk⟩|²`, row-major in `(a, b)`, where
/// `a` indexes `basis` and `b` indexes its conjugate.
pub fn joint_outcome_distribution(dim: Dim, lam: &BellSpectrum, basis: &Basis) -> Result<Vec<f64>> {
    let d = dim.get();
    if d > MAX_EXACT_DIM {
        return Err(QkdError::DimensionTooLarge(d, MAX_EXACT_DIM));
    }
    let bob = conjugate_basis(basis);
    let products: Vec<Vec<Complex64>> = iproduct(d)
        .map(|(a, b)| {
            let mut v = vec![Complex64::new(0.0, 0.0); d * d];
            for x in 0..d {
                for y in 0..d {
                    v[x * d + y] = bob.vectors[b][x] * basis.vectors[a][y];
                }
            }
            v
        })
        .collect();

    let mut table = vec![0.0; d * d];
    for (j, k) in iproduct(d) {
        let weight = lam.get(j, k);
        if weight == 0.0 {
            continue;
        }
        let phi = bell_state(dim, WeylIndex { j, k });
        for (cell, prod) in table.iter_mut().zip(&products) {
            let amp: Complex64 = prod.iter().zip(phi.iter()).map(|(p, f)| p.conj() * f).sum();
            *cell += weight * amp.norm_sqr();
        }
    }
    Ok(table)
}

fn iproduct(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |a| (0..d).map(move |b| (a, b)))
}

/// `q[t] = Σ_a P(a, a − t)`.
pub fn difference_marginal(dim: Dim, table: &[f64]) -> Vec<f64> {
    let d = dim.get();
    let mut q = vec![0.0; d];
    for (a, b) in iproduct(d) {
        q[(a + d - b) % d] += table[a * d + b];
    }
    q
}

fn cdf(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = c.last_mut() {
        *last = f64::INFINITY;
    }
    c
}

fn sample(cdf: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Runs the sifted measurement protocol. Output depends only on the config.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let dim = cfg.spec.dim();
    let d = dim.get();
    let analytic = q_from_lambda(&cfg.spec, &cfg.lam)?;

    let tables: Vec<Vec<f64>> = match cfg.mode {
        SimMode::Exact => protocol_bases(&cfg.spec)?
            .iter()
            .map(|b| joint_outcome_distribution(dim, &cfg.lam, b))
            .collect::<Result<_>>()?,
        SimMode::Fast => analytic
            .iter()
            .map(|e| {
                iproduct(d)
                    .map(|(a, b)| e.q[(a + d - b) % d] / d as f64)
                    .collect()
            })
            .collect(),
    };
    let table_cdfs: Vec<Vec<f64>> = tables.iter().map(|t| cdf(t)).collect();
    let basis_cdf = cdf(&cfg.basis_probs);

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let nb = analytic.len();
    let mut counts = vec![vec![0u64; d * d]; nb];
    let mut sifted_count = 0u64;
    for _ in 0..cfg.rounds {
        let alice = sample(&basis_cdf, &mut rng);
        let bob = sample(&basis_cdf, &mut rng);
        if alice != bob {
            continue;
        }
        sifted_count += 1;
        counts[alice][sample(&table_cdfs[alice], &mut rng)] += 1;
    }

    let bases: Vec<BasisStats> = analytic
        .iter()
        .zip(&counts)
        .map(|(e, c)| basis_stats(dim, e, c))
        .collect();

    let f: f64 = cfg.basis_probs.iter().map(|p| p * p).sum();
    let se = (f * (1.0 - f) / cfg.rounds as f64).sqrt();
    let sifting_z = z_score(sifted_count as f64 / cfg.rounds as f64, f, se);
    let passed = sifting_z <= Z_LIMIT && bases.iter().all(|b| b.passed);
    Ok(SimResult {
        rounds: cfg.rounds,
        sifted_count,
        sifting_fraction_expected: f,
        sifting_z,
        bases,
        passed,
    })
}

fn z_score(observed: f64, expected: f64, se: f64) -> f64 {
    let diff = (observed - expected).abs();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn basis_stats(dim: Dim, analytic: &ErrorVector, counts: &[u64]) -> BasisStats {
    let d = dim.get();
    let sifted: u64 = counts.iter().sum();
    let mut diff_counts = vec![0u64; d];
    for (a, b) in iproduct(d) {
        diff_counts[(a + d - b) % d] += counts[a * d + b];
    }
    let q = analytic.q.as_slice();
    let m = sifted as f64;
    let empirical_q: Vec<f64> = if sifted == 0 {
        vec![0.0; d]
    } else {
        diff_counts.iter().map(|&c| c as f64 / m).collect()
    };

    let mut chi_square = 0.0;
    let mut classes = 0usize;
    for (&obs, &p) in diff_counts.iter().zip(q) {
        let expected = m * p;
        if expected > 0.0 {
            classes += 1;
            chi_square += (obs as f64 - expected).powi(2) / expected;
        } else if obs > 0 {
            chi_square = f64::INFINITY;
        }
    }
    let dof = classes.saturating_sub(1);
    let chi_square_critical = if dof == 0 {
        0.0
    } else {
        ChiSquared::new(dof as f64)
            .map(|c| c.inverse_cdf(CHI_SQUARE_QUANTILE))
            .unwrap_or(f64::INFINITY)
    };

    let max_z = if sifted == 0 {
        0.0
    } else {
        empirical_q
            .iter()
            .zip(q)
            .map(|(&e, &p)| z_score(e, p, (p * (1.0 - p) / m).sqrt()))
            .fold(0.0, f64::max)
    };

    let passed = chi_square <= chi_square_critical && max_z <= Z_LIMIT;
    BasisStats {
        basis: analytic.basis,
        sifted,
        counts: counts.chunks(d).map(|r| r.to_vec()).collect(),
        empirical_q,
        analytic_q: q.to_vec(),
        chi_square,
        dof,
        chi_square_critical,
        max_z,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::depolarizing_spectrum;
    use crate::qudit_algebra::Family;

    fn spec(family: Family, d: usize) -> ProtocolSpec {
        ProtocolSpec::new(family, Dim::new(d).unwrap()).unwrap()
    }

    #[test]
    fn pure_state_is_perfectly_correlated() {
        for d in [2usize, 3, 5] {
            let s = spec(Family::DPlusOneBasis, d);
            for b in protocol_bases(&s).unwrap() {
                let t = joint_outcome_distribution(s.dim(), &BellSpectrum::pure(s.dim()), &b).unwrap();
                for (a, bb) in iproduct(d) {
                    let want = if a == bb { 1.0 / d as f64 } else { 0.0 };
                    assert!((t[a * d + bb] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn depolarizing_d2_z_basis_table() {
        let s = spec(Family::TwoBasis, 2);
        let lam = depolarizing_spectrum(s.dim(), 0.1).unwrap();
        let z = &protocol_bases(&s).unwrap()[0];
        let t = joint_outcome_distribution(s.dim(), &lam, z).unwrap();
        for (got, want) in t.iter().zip([0.45, 0.05, 0.05, 0.45]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn maximally_mixed_is_uniform() {
        let s = spec(Family::DPlusOneBasis, 3);
        for b in protocol_bases(&s).unwrap() {
            let t = joint_outcome_distribution(s.dim(), &BellSpectrum::uniform(s.dim()), &b).unwrap();
            assert!(t.iter().all(|p| (p - 1.0 / 9.0).abs() < 1e-12));
        }
    }

    #[test]
    fn exact_projection_caps_dimension() {
        let s = spec(Family::DPlusOneBasis, 13);
        let b = &protocol_bases(&s).unwrap()[0];
        assert_eq!(
            joint_outcome_distribution(s.dim(), &BellSpectrum::pure(s.dim()), b).unwrap_err(),
            QkdError::DimensionTooLarge(13, MAX_EXACT_DIM)
        );
        let cfg = SimConfig::new(s, BellSpectrum::pure(s.dim()), 10, 1);
        assert!(cfg.validate().is_err());
        let fast = SimConfig { mode: SimMode::Fast, ..cfg };
        assert!(run_simulation(&fast).unwrap().passed);
    }

    #[test]
    fn perfect_state_has_no_errors() {
        let s = spec(Family::DPlusOneBasis, 3);
        let r = run_simulation(&SimConfig::new(s, BellSpectrum::pure(s.dim()), 100_000, 9)).unwrap();
        for b in &r.bases {
            assert_eq!(b.empirical_q[0], 1.0);
            assert!(b.passed);
        }
        assert!(r.passed);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(Family::TwoBasis, 3);
        let lam = depolarizing_spectrum(s.dim(), 0.1).unwrap();
        let cfg = SimConfig::new(s, lam, 20_000, 42);
        assert_eq!(run_simulation(&cfg).unwrap(), run_simulation(&cfg).unwrap());
        let other = SimConfig { seed: 43, ..cfg.clone() };
        assert_ne!(run_simulation(&cfg).unwrap(), run_simulation(&other).unwrap());
    }

    #[test]
    fn config_validation() {
        let s = spec(Family::TwoBasis, 2);
        let lam = BellSpectrum::pure(s.dim());
        let mut cfg = SimConfig::new(s, lam, 0, 1);
        assert!(cfg.validate().is_err());
        cfg.rounds = 10;
        cfg.basis_probs = vec![0.5, 0.6];
        assert!(cfg.validate().is_err());
        cfg.basis_probs = vec![1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_model_is_detected() {
        // analytic q says depolarizing 0.1, samples come from 0.2
        let s = spec(Family::TwoBasis, 2);
        let cfg = SimConfig::new(s, depolarizing_spectrum(s.dim(), 0.2).unwrap(), 200_000, 5);
        let result = run_simulation(&cfg).unwrap();
        let wrong = ErrorVector::new(WeylIndex { j: 0, k: 1 }, vec![0.9, 0.1]).unwrap();
        let counts: Vec<u64> = result.bases[0].counts.iter().flatten().copied().collect();
        assert!(!basis_stats(s.dim(), &wrong, &counts).passed);
    }

    fn random_spectrum(dim: Dim, seed: u64) -> BellSpectrum {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = dim.get() * dim.get();
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = w.iter().sum();
        BellSpectrum::new(dim, w.into_iter().map(|x| x / s).collect()).unwrap()
    }

    #[test]
    fn projection_marginals_match_analytic_maps() {
        for d in [2usize, 3, 5] {
            let s = spec(Family::DPlusOneBasis, d);
            for seed in 0..10 {
                let lam = random_spectrum(s.dim(), 100 * d as u64 + seed);
                let analytic = q_from_lambda(&s, &lam).unwrap();
                for (basis, e) in protocol_bases(&s).unwrap().iter().zip(&analytic) {
                    let table = joint_outcome_distribution(s.dim(), &lam, basis).unwrap();
                    assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let q = difference_marginal(s.dim(), &table);
                    for (x, y) in q.iter().zip(e.q.as_slice()) {
                        assert!((x - y).abs() < 1e-10, "d={d} {} {q:?} vs {:?}", e.basis, e.q);
                    }
                }
            }
        }
    }
}
