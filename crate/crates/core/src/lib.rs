//! Privacy-aware truthful mechanisms with exact distribution audits.
//!
//! This crate implements three randomized mechanisms whose truthfulness
//! survives players that assign utility to information leakage:
//!
//! - a noisy two-candidate election (majority vote plus a two-sided
//!   geometric threshold),
//! - discrete facility location by the median of a perturbed histogram,
//! - a noisy VCG mechanism for general social choice with discrete
//!   utilities, which releases only the payment information needed for
//!   every player to compute their own payment.
//!
//! Around the mechanisms sit:
//!
//! - [`noise`]: exact one- and two-sided geometric (discrete Laplace)
//!   integer distributions with log-space mass functions, closed-form
//!   CDFs, certified truncation windows, and reproducible samplers;
//! - [`distributions`]: exact or truncation-certified output
//!   distributions of each mechanism, statistical difference, and
//!   Bayesian posterior updates;
//! - [`audit`]: claim-by-claim verification of differential privacy,
//!   truthfulness (universal and in expectation), individual
//!   rationality, payment-information leakage, the mutual-information
//!   truthfulness criterion, and posterior-ratio brackets;
//! - [`bench`]: Monte Carlo and closed-form welfare-loss experiments.
//!
//! All probability bookkeeping that feeds an audit verdict is done with
//! compensated summation, and every truncated quantity carries an
//! explicit slack so a verdict can never silently depend on discarded
//! tail mass.

pub mod audit;
pub mod bench;
pub mod distributions;
mod lattice;
pub mod mechanisms;
pub mod model;
pub mod noise;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside an operation's domain (mismatched instances,
    /// out-of-range indices, invalid parameters).
    #[error("domain error: {0}")]
    Domain(String),
    /// An enumeration would exceed the configured budget.
    #[error("resource error: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use distributions::{statistical_difference, Dist, Interval};
pub use mechanisms::{Mechanism, MechOutput, PaymentInfo, VcgOutput, VcgSpec};
pub use model::{
    build_histogram, median_index, Candidate, Histogram, Outcome, PlayerType, PrivacyModel,
    TypeProfile, UtilitySpec,
};
pub use noise::{NoiseSpec, RngStream, TruncationWindow};
