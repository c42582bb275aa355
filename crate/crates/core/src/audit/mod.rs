//! Claim-by-claim verification engine: differential-privacy ratios,
//! truthfulness (universal and in expectation), individual rationality,
//! payment-information leakage, mutual-information truthfulness, and
//! Bayesian posterior brackets.
//!
//! Every audit returns an [`AuditReport`] whose `witness` is the exact
//! configuration achieving the measured extremum; re-evaluating a
//! witness reproduces the measured value. Verdicts are conservative
//! about truncation: a check passes only if it holds with the certified
//! slack counted against it, and a check that would pass without the
//! slack but not with it is reported as inconclusive rather than either
//! passed or failed.

mod dp;
mod info;
mod truthful;
mod vcg;

pub use dp::{
    dp_audit_election, dp_audit_facility, dp_audit_vcg, replay_dp_election, replay_dp_facility,
    NeighborModel,
};
pub use info::{
    joint_from_prior, kl_divergence, mutual_information, posterior_bound_audit,
    xiao_election_audit, xiao_truthfulness_audit, JointDist,
};
pub use truthful::{
    election_ir_audit, election_truthfulness_audit, facility_ir_audit,
    facility_truthfulness_audit, replay_election_gap, replay_facility_gap,
};
pub use vcg::{
    replay_vcg_gain, vcg_expectation_truthfulness_audit, vcg_payment_info_audit,
    vcg_pointwise_gain_audit,
};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{PlayerType, TypeProfile};

/// Windows are built two orders of magnitude tighter than the audit's
/// reported slack target, so that counting the truncated tail against a
/// verdict stays well inside the tolerance envelopes stated in terms of
/// the target.
pub(crate) const WINDOW_MARGIN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    InconclusiveDueToSlack,
}

/// Outcome of one audited claim.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    /// Claim identifier, e.g. `thm-voting` or `lem-vcg-payments`.
    pub claim: String,
    /// Instance description (n, q, outcome count, eps, nu, window, slack...).
    pub params: BTreeMap<String, f64>,
    /// Worst-case measured quantity.
    pub measured: f64,
    /// The bound the claim asserts for it.
    pub bound: f64,
    pub verdict: Verdict,
    /// The configuration achieving `measured`.
    pub witness: Witness,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub(crate) fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub(crate) fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub(crate) fn new(claim: &str, measured: f64, bound: f64, verdict: Verdict) -> Self {
        AuditReport {
            claim: claim.to_string(),
            params: BTreeMap::new(),
            measured,
            bound,
            verdict,
            witness: Witness::None,
            notes: Vec::new(),
        }
    }
}

/// The extremal configuration found by an audit.
#[derive(Debug, Clone, Serialize)]
pub enum Witness {
    None,
    /// Worst output-probability ratio between two neighboring reports.
    DpRatio {
        others: TypeProfile,
        truth: PlayerType,
        deviation: PlayerType,
        outcome: String,
        p_truth: f64,
        p_deviation: f64,
    },
    /// Worst ratio between two neighboring histograms.
    DpHistRatio {
        h_from: Vec<u64>,
        h_to: Vec<u64>,
        outcome: usize,
        p_from: f64,
        p_to: f64,
    },
    /// Smallest outcome-utility drop over an outcome-changing deviation.
    UtilityGap {
        others: TypeProfile,
        truth: PlayerType,
        deviation: PlayerType,
        noise: Vec<i64>,
        outcome_truth: String,
        outcome_deviation: String,
    },
    /// Smallest exact utility gain over a winner-changing deviation.
    VcgGain {
        others: TypeProfile,
        truth: PlayerType,
        deviation: PlayerType,
        lambda: Vec<i64>,
        winner_truth: usize,
        winner_deviation: usize,
        gain_numer: i64,
        denom: u32,
    },
    /// A pair of coupled event probabilities for one deviation.
    ProbPair {
        others: TypeProfile,
        truth: PlayerType,
        deviation: PlayerType,
        lhs: f64,
        rhs: f64,
    },
    /// An in-expectation margin for one deviation.
    Margin {
        others: TypeProfile,
        truth: PlayerType,
        deviation: PlayerType,
        gain: f64,
        sd: f64,
    },
    /// The strategy achieving the smallest margin, as a type map.
    Strategy { sigma: Vec<usize>, margin: f64 },
    /// A posterior/prior ratio against its bracket.
    PosteriorRatio {
        prior: Vec<f64>,
        type_index: usize,
        outcome: String,
        ratio: f64,
        x: f64,
    },
}

/// Verdict from a measured value, its slack-adversarial counterpart, and
/// the bound they must stay within (`measured <= bound` passes).
pub(crate) fn verdict_upper(measured: f64, adversarial: f64, bound: f64) -> Verdict {
    if adversarial <= bound {
        Verdict::Pass
    } else if measured <= bound {
        Verdict::InconclusiveDueToSlack
    } else {
        Verdict::Fail
    }
}

/// Verdict for lower-bounded quantities (`measured >= bound` passes).
pub(crate) fn verdict_lower(measured: f64, adversarial: f64, bound: f64) -> Verdict {
    if adversarial >= bound {
        Verdict::Pass
    } else if measured >= bound {
        Verdict::InconclusiveDueToSlack
    } else {
        Verdict::Fail
    }
}
