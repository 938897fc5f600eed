//! Weyl-Heisenberg operators, generalized Bell states and the measurement
//! eigenbases used by the 2-basis and (d+1)-basis protocol families.
//!
//! Conventions:
//! - `U_jk = Σ_s ω^{sk} |s+j⟩⟨s|` with `ω = exp(2πi/d)`.
//! - `|Φ_jk⟩ = (1 ⊗ U_jk)|Φ_00⟩ = d^{-1/2} Σ_s ω^{sk} |s⟩|s+j⟩`, two-qudit
//!   amplitudes stored row-major (`|x⟩|y⟩` at index `x·d + y`).
//! - The eigenvector of `U_jk` with eigenvalue `γ·ω^a` carries outcome label
//!   `a`, where `γ` is a fixed global phase making the spectrum `{γ ω^a}`.
//!   Eigenvectors are normalized with a real positive first amplitude.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type StateVector = DVector<Complex64>;

/// Qudit dimension `d ≥ 2` with cached primality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dim {
    d: usize,
    is_prime: bool,
}

impl Dim {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(QkdError::InvalidDimension(d));
        }
        Ok(Dim {
            d,
            is_prime: is_prime(d),
        })
    }

    #[inline]
    pub fn get(self) -> usize {
        self.d
    }

    #[inline]
    pub fn is_prime(self) -> bool {
        self.is_prime
    }

    /// `log₂ d`.
    pub fn log2(self) -> f64 {
        (self.d as f64).log2()
    }

    /// `ω^e` for an arbitrary integer exponent, reduced mod d before the
    /// trigonometric evaluation.
    pub fn omega_pow(self, e: i64) -> Complex64 {
        let r = e.rem_euclid(self.d as i64) as f64;
        Complex64::from_polar(1.0, 2.0 * PI * r / self.d as f64)
    }
}

impl TryFrom<usize> for Dim {
    type Error = QkdError;

    fn try_from(d: usize) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for usize {
    fn from(dim: Dim) -> usize {
        dim.d
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.d)
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            return false;
        }
        p += 1;
    }
    true
}

/// Index `(j, k)` of the Weyl operator `U_jk`; both components reduced mod d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeylIndex {
    pub j: usize,
    pub k: usize,
}

impl WeylIndex {
    pub fn new(dim: Dim, j: i64, k: i64) -> Self {
        let d = dim.get() as i64;
        WeylIndex {
            j: j.rem_euclid(d) as usize,
            k: k.rem_euclid(d) as usize,
        }
    }

    pub fn is_identity(self) -> bool {
        self.j == 0 && self.k == 0
    }
}

impl fmt::Display for WeylIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U_{},{}", self.j, self.k)
    }
}

/// Protocol family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Bases of `U_01` and `U_10`; any `d ≥ 2`.
    TwoBasis,
    /// Bases of `U_01` and `U_1k` for all `k`; prime `d` only.
    DPlusOneBasis,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::TwoBasis => "two-basis",
            Family::DPlusOneBasis => "dplus1",
        })
    }
}

/// A protocol family at a given dimension. Construction enforces the
/// primality gate of the (d+1)-basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolSpec {
    family: Family,
    dim: Dim,
}

impl ProtocolSpec {
    pub fn new(family: Family, dim: Dim) -> Result<Self> {
        if family == Family::DPlusOneBasis && !dim.is_prime() {
            return Err(QkdError::NonPrimeDimension(dim.get()));
        }
        Ok(ProtocolSpec { family, dim })
    }

    pub fn two_basis(d: usize) -> Result<Self> {
        Self::new(Family::TwoBasis, Dim::new(d)?)
    }

    pub fn dplus1(d: usize) -> Result<Self> {
        Self::new(Family::DPlusOneBasis, Dim::new(d)?)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Weyl labels of the protocol bases; the key basis `U_01` comes first.
    pub fn basis_labels(&self) -> Vec<WeylIndex> {
        let mut labels = vec![WeylIndex { j: 0, k: 1 }];
        match self.family {
            Family::TwoBasis => labels.push(WeylIndex { j: 1, k: 0 }),
            Family::DPlusOneBasis => {
                labels.extend((0..self.dim.get()).map(|k| WeylIndex { j: 1, k }))
            }
        }
        labels
    }

    /// Number of estimated error vectors (one per basis).
    pub fn n_pe(&self) -> usize {
        match self.family {
            Family::TwoBasis => 2,
            Family::DPlusOneBasis => self.dim.get() + 1,
        }
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} d={}", self.family, self.dim)
    }
}

/// `U_jk` as a dense `d × d` matrix: entry `(s+j mod d, s) = ω^{sk}`.
pub fn weyl_operator(dim: Dim, idx: WeylIndex) -> ComplexMatrix {
    let d = dim.get();
    let mut u = ComplexMatrix::zeros(d, d);
    for s in 0..d {
        u[((s + idx.j) % d, s)] = dim.omega_pow((s * idx.k) as i64);
    }
    u
}

/// Exponent `e` (mod d) in `U_a U_b = ω^e U_b U_a`, i.e. `k·j' − j·k'`.
pub fn commutator_phase(dim: Dim, a: WeylIndex, b: WeylIndex) -> usize {
    let d = dim.get() as i64;
    let e = a.k as i64 * b.j as i64 - a.j as i64 * b.k as i64;
    e.rem_euclid(d) as usize
}

/// Normalized generalized Bell state `d^{-1/2} Σ_s ω^{sk} |s⟩|s+j⟩`.
pub fn bell_state(dim: Dim, idx: WeylIndex) -> StateVector {
    let d = dim.get();
    let norm = 1.0 / (d as f64).sqrt();
    let mut v = StateVector::zeros(d * d);
    for s in 0..d {
        v[s * d + (s + idx.j) % d] = dim.omega_pow((s * idx.k) as i64) * norm;
    }
    v
}

/// Ordered measurement basis: `vectors[a]` is the state for outcome `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub label: WeylIndex,
    /// `true` for the eigenbasis of `U*` used by Bob.
    pub conjugate: bool,
    /// Global phase `γ`: vector `a` has eigenvalue `γ ω^a` (or `γ* ω^{-a}` when
    /// `conjugate` is set).
    pub global_phase: Complex64,
    pub vectors: Vec<StateVector>,
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Eigenvalue attached to outcome `a`.
    pub fn eigenvalue(&self, dim: Dim, a: usize) -> Complex64 {
        if self.conjugate {
            self.global_phase.conj() * dim.omega_pow(-(a as i64))
        } else {
            self.global_phase * dim.omega_pow(a as i64)
        }
    }

    /// The Weyl operator whose eigenbasis this is (conjugated for Bob).
    pub fn operator(&self, dim: Dim) -> ComplexMatrix {
        let u = weyl_operator(dim, self.label);
        if self.conjugate {
            u.map(|z| z.conj())
        } else {
            u
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn mod_inverse(x: usize, d: usize) -> Option<usize> {
    (1..d).find(|&y| (x * y) % d == 1)
}

/// Closed-form eigenbasis of `U_jk` for the operators with nondegenerate
/// spectrum used by the protocols: `U_0k` with `gcd(k, d) = 1` and every `U_1k`.
pub fn weyl_eigenbasis(dim: Dim, idx: WeylIndex) -> Result<Basis> {
    let d = dim.get();
    match idx.j {
        0 => {
            if gcd(idx.k, d) != 1 {
                return Err(QkdError::InvalidConfig(format!(
                    "{idx} has a degenerate spectrum for d = {d}"
                )));
            }
            // Eigenvalue of |s⟩ is ω^{sk}, so label a belongs to s = a·k⁻¹.
            let inv = mod_inverse(idx.k, d).unwrap_or(1);
            let vectors = (0..d)
                .map(|a| {
                    let mut v = StateVector::zeros(d);
                    v[(a * inv) % d] = Complex64::new(1.0, 0.0);
                    v
                })
                .collect();
            Ok(Basis {
                label: idx,
                conjugate: false,
                global_phase: Complex64::new(1.0, 0.0),
                vectors,
            })
        }
        1 => {
            // U_1k^d = ω^{k d(d-1)/2}; for even d and odd k this is -1 and
            // the spectrum is e^{iπ/d}·{ω^a}.
            let gamma_angle = if (idx.k * (d - 1)) % 2 == 1 {
                PI / d as f64
            } else {
                0.0
            };
            let norm = 1.0 / (d as f64).sqrt();
            let vectors = (0..d)
                .map(|a| {
                    StateVector::from_iterator(
                        d,
                        (0..d).map(|s| {
                            // v_s = γ^{-s} ω^{k s(s-1)/2 - a s} / √d
                            let tri = (s * s.saturating_sub(1) / 2) % d;
                            let e = (idx.k * tri) as i64 - (a * s) as i64;
                            dim.omega_pow(e)
                                * Complex64::from_polar(norm, -(s as f64) * gamma_angle)
                        }),
                    )
                })
                .collect();
            Ok(Basis {
                label: idx,
                conjugate: false,
                global_phase: Complex64::from_polar(1.0, gamma_angle),
                vectors,
            })
        }
        _ => Err(QkdError::InvalidConfig(format!(
            "no closed-form eigenbasis implemented for {idx}"
        ))),
    }
}

/// Eigenbases of every basis operator of the protocol, key basis first.
pub fn protocol_bases(spec: &ProtocolSpec) -> Result<Vec<Basis>> {
    let dim = spec.dim();
    if spec.family() == Family::DPlusOneBasis && !dim.is_prime() {
        return Err(QkdError::NonPrimeDimension(dim.get()));
    }
    spec.basis_labels()
        .into_iter()
        .map(|idx| weyl_eigenbasis(dim, idx))
        .collect()
}

/// Bob's basis: entrywise conjugates of Alice's vectors. Label `b` is then the
/// eigenvector of `U*` with eigenvalue `γ* ω^{-b}`, and `|Φ_00⟩` yields `a = b`.
pub fn conjugate_basis(b: &Basis) -> Basis {
    Basis {
        label: b.label,
        conjugate: !b.conjugate,
        global_phase: b.global_phase,
        vectors: b.vectors.iter().map(|v| v.map(|z| z.conj())).collect(),
    }
}

/// Largest entrywise modulus of `a − b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
