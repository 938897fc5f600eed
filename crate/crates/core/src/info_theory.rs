//! Shannon entropy in bits and the qudit depolarizing error vector.

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::qudit_algebra::Dim;

const ENTRY_SLACK: f64 = 1e-12;
const SUM_SLACK: f64 = 1e-9;

/// Validated probability vector. Entries within `1e-12` below zero are
/// stored as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(QkdError::InvalidDistribution("empty vector".into()));
        }
        let mut entries = entries;
        for (i, p) in entries.iter_mut().enumerate() {
            if !p.is_finite() || *p < -ENTRY_SLACK || *p > 1.0 + ENTRY_SLACK {
                return Err(QkdError::InvalidDistribution(format!(
                    "entry {i} = {p} outside [0, 1]"
                )));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SUM_SLACK {
            return Err(QkdError::InvalidDistribution(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(ProbVector(entries))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = QkdError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `−Σ p log₂ p` over the nonzero entries of an already validated slice.
pub(crate) fn entropy_bits(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum();
    // cancellation can leave -0.0 or a few ulps below zero
    h.max(0.0)
}

/// Shannon entropy in bits, `0·log 0 = 0`.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    entropy_bits(p.as_slice())
}

/// Validates `p` and returns its entropy.
pub fn shannon_entropy_checked(p: &[f64]) -> Result<f64> {
    Ok(shannon_entropy(&ProbVector::new(p.to_vec())?))
}

/// Largest meaningful error rate `(d−1)/d` (uncorrelated outcomes).
pub fn max_error_rate(dim: Dim) -> f64 {
    (dim.get() - 1) as f64 / dim.get() as f64
}

/// `{1−Q, Q/(d−1), …, Q/(d−1)}` for `Q ∈ [0, (d−1)/d]`.
pub fn depolarizing_vector(dim: Dim, q: f64) -> Result<ProbVector> {
    let max = max_error_rate(dim);
    if !(0.0..=max).contains(&q) {
        return Err(QkdError::OutOfRange {
            name: "Q",
            value: q,
            min: 0.0,
            max,
        });
    }
    let d = dim.get();
    let mut v = vec![q / (d - 1) as f64; d];
    v[0] = 1.0 - q;
    ProbVector::new(v)
}
