#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Secret-key rates for qudit quantum key distribution.
//!
//! Two protocol families are covered: the 2-basis family (bases of `U_01` and
//! `U_10`, any d) and the (d+1)-basis family (bases of `U_01` and every
//! `U_1k`, prime d). For each, the crate evaluates Eve's Holevo information on
//! Bell-diagonal states, the asymptotic key fraction and its critical error
//! rate, and a finite-key lower bound optimized over the free protocol
//! parameters. A seeded Monte Carlo simulator checks the analytic error
//! statistics against explicit two-qudit projections.

pub mod channels;
pub mod cli;
pub mod error;
pub mod info_theory;
pub mod optimize;
pub mod qudit_algebra;
pub mod rates_asymptotic;
pub mod rates_finite;
pub mod simulator;
pub mod verify;

pub use channels::{BellSpectrum, ErrorVector};
pub use error::{QkdError, Result};
pub use info_theory::ProbVector;
pub use qudit_algebra::{Dim, Family, ProtocolSpec, WeylIndex};
pub use rates_asymptotic::RateReport;
pub use rates_finite::{FiniteKeyBudget, FiniteRateReport, FluxMode, FreeParams};
pub use simulator::{SimConfig, SimResult};
