//! Universal-truthfulness and individual-rationality audits for the
//! election and facility mechanisms.
//!
//! Both audits enumerate every profile, deviation, and noise value in a
//! window and check the two-case structure behind universal
//! truthfulness: a deviation either leaves the outcome unchanged (total
//! utility ties exactly) or changes it, in which case the deviator's
//! outcome utility must drop by at least twice the privacy bound
//! `2 F(e^eps_eff)`. The privacy side is instantiated with the extremal
//! adversary: utility `+F` on the deviation outcome and `-F` on the
//! truthful outcome, the worst assignment the privacy-value assumption
//! allows. Surviving that adversary implies surviving every compliant
//! privacy utility.

use super::{AuditReport, Verdict, Witness};
use crate::model::{
    median_index, Candidate, Outcome, PlayerType, PrivacyModel, TypeProfile, UtilitySpec,
};
use crate::noise::NoiseSpec;
use crate::{Error, Result};

fn outcome_label(o: &Outcome) -> String {
    match o {
        Outcome::Winner(c) => c.to_string(),
        Outcome::Location(j) | Outcome::Index(j) => j.to_string(),
    }
}

struct GapTracker {
    min_gap: f64,
    changed: u64,
    violations: u64,
    witness: Witness,
}

impl GapTracker {
    fn new() -> Self {
        GapTracker {
            min_gap: f64::INFINITY,
            changed: 0,
            violations: 0,
            witness: Witness::None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        gap: f64,
        structural_ok: bool,
        others: &TypeProfile,
        truth: &PlayerType,
        deviation: &PlayerType,
        noise: &[i64],
        o_truth: &Outcome,
        o_dev: &Outcome,
    ) {
        self.changed += 1;
        if !structural_ok {
            self.violations += 1;
        }
        if gap < self.min_gap {
            self.min_gap = gap;
            self.witness = Witness::UtilityGap {
                others: others.clone(),
                truth: truth.clone(),
                deviation: deviation.clone(),
                noise: noise.to_vec(),
                outcome_truth: outcome_label(o_truth),
                outcome_deviation: outcome_label(o_dev),
            };
        }
    }

    fn into_report(
        self,
        claim: &str,
        bound: f64,
        eps_eff: f64,
    ) -> AuditReport {
        let verdict = if self.violations > 0 {
            Verdict::Fail
        } else if self.changed == 0 || self.min_gap + 1e-12 >= bound {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        let mut report = AuditReport::new(claim, self.min_gap, bound, verdict)
            .param("eps_eff", eps_eff)
            .param("changed_events", self.changed as f64)
            .param("structural_violations", self.violations as f64)
            .note(
                "bound is 2 F(e^eps_eff); passing the extremal privacy adversary (+F on the \
                 deviation outcome, -F on the truthful outcome) at every coin value implies \
                 universal truthfulness for every privacy utility obeying the bound",
            );
        report.witness = self.witness;
        report
    }
}

/// Election coin window wide enough that every outcome-changing noise
/// value is enumerated: deviations move the tally difference by at most
/// 2, so no change is possible when `|r| > n + 1`.
fn election_window(n: usize, eps: f64, slack: f64) -> Result<u64> {
    let w = NoiseSpec::election(eps)?.window_for_slack(1, slack)?;
    Ok(w.bound.max(n as u64 + 2))
}

fn election_audit(
    n: usize,
    eps: f64,
    gap: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    slack: f64,
    claim: &str,
    opt_out: bool,
) -> Result<AuditReport> {
    if n == 0 || n > 20 {
        return Err(Error::Domain(format!("player count {n} outside 1..=20")));
    }
    let spec = UtilitySpec::election(gap)?;
    let k = election_window(n, eps, slack)? as i64;
    let mut tracker = GapTracker::new();
    for mask in 0u32..(1 << n) {
        let margin = 2 * i64::from(mask.count_ones()) - n as i64;
        for i in 0..n {
            let truth_is_a = mask >> i & 1 == 1;
            let truth = PlayerType::Vote(if truth_is_a { Candidate::A } else { Candidate::B });
            let (deviation, dev_margin) = if opt_out {
                (PlayerType::OptOut, margin + if truth_is_a { -1 } else { 1 })
            } else {
                (
                    PlayerType::Vote(if truth_is_a { Candidate::B } else { Candidate::A }),
                    margin + if truth_is_a { -2 } else { 2 },
                )
            };
            let mut others = Vec::new();
            for j in 0..n {
                if j != i {
                    others.push(PlayerType::Vote(if mask >> j & 1 == 1 {
                        Candidate::A
                    } else {
                        Candidate::B
                    }));
                }
            }
            let others = TypeProfile(others);
            for r in -k..=k {
                let o = Outcome::Winner(if margin >= r { Candidate::A } else { Candidate::B });
                let o2 = Outcome::Winner(if dev_margin >= r {
                    Candidate::A
                } else {
                    Candidate::B
                });
                if o == o2 {
                    continue;
                }
                let u_truth = spec.outcome_utility(&truth, &o)?;
                let u_dev = spec.outcome_utility(&truth, &o2)?;
                // when a deviation changes the outcome, the truthful run
                // must have elected the deviator's preferred candidate
                let structural_ok = o == Outcome::Winner(if truth_is_a {
                    Candidate::A
                } else {
                    Candidate::B
                });
                tracker.record(
                    u_truth - u_dev,
                    structural_ok,
                    &others,
                    &truth,
                    &deviation,
                    &[r],
                    &o,
                    &o2,
                );
            }
        }
    }
    let bound = 2.0 * privacy.bound_at_eps(eps_eff)?;
    Ok(tracker
        .into_report(claim, bound, eps_eff)
        .note(
            "coin window covers every outcome-changing noise value, so the in-window \
             enumeration is exhaustive over all of the mechanism's randomness",
        )
        .param("n", n as f64)
        .param("eps", eps)
        .param("gap", gap)
        .param("slack", slack))
}

/// Universal truthfulness of the noisy election: over every profile of
/// `n` voters, every deviating report flip, and every coin, an
/// outcome-changing deviation must cost the deviator at least
/// `2 F(e^eps_eff)` in outcome utility.
pub fn election_truthfulness_audit(
    n: usize,
    eps: f64,
    gap: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    slack: f64,
) -> Result<AuditReport> {
    election_audit(n, eps, gap, privacy, eps_eff, slack, "thm-voting", false)
}

/// Individual rationality of the noisy election: the same enumeration
/// with opting out as the deviation.
pub fn election_ir_audit(
    n: usize,
    eps: f64,
    gap: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    slack: f64,
) -> Result<AuditReport> {
    election_audit(n, eps, gap, privacy, eps_eff, slack, "ir-voting", true)
}

/// Re-evaluate an election utility-gap witness at unit preference gap
/// scale `gap`.
pub fn replay_election_gap(witness: &Witness, gap: f64) -> Option<f64> {
    let Witness::UtilityGap {
        others,
        truth,
        deviation,
        noise,
        ..
    } = witness
    else {
        return None;
    };
    let spec = UtilitySpec::election(gap).ok()?;
    let r = noise[0];
    let mut with_truth = others.0.clone();
    with_truth.push(truth.clone());
    let mut with_dev = others.0.clone();
    with_dev.push(deviation.clone());
    let o = crate::mechanisms::election_eval(&TypeProfile(with_truth), r).ok()?;
    let o2 = crate::mechanisms::election_eval(&TypeProfile(with_dev), r).ok()?;
    Some(spec.outcome_utility(truth, &o).ok()? - spec.outcome_utility(truth, &o2).ok()?)
}

fn profile_of_histogram(h: &[u64]) -> TypeProfile {
    let mut players = Vec::new();
    for (j, &c) in h.iter().enumerate() {
        for _ in 0..c {
            players.push(PlayerType::Location(j));
        }
    }
    TypeProfile(players)
}

fn facility_audit(
    locations: &[f64],
    n_max: u64,
    eps: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    noise_cap: u64,
    claim: &str,
    opt_out: bool,
) -> Result<AuditReport> {
    let spec = UtilitySpec::facility(locations.to_vec())?;
    let q = locations.len();
    if q > 6 {
        return Err(Error::Domain(format!("bin count {q} outside 1..=6")));
    }
    if n_max == 0 {
        return Err(Error::Domain("need at least one player".into()));
    }
    let mut tracker = GapTracker::new();
    let mut min_side_violations = 0u64;
    for others in super::dp::histograms_with_sum_at_most(q, n_max - 1) {
        let others_profile = profile_of_histogram(&others);
        for truth_j in 0..q {
            let truth = PlayerType::Location(truth_j);
            let deviations: Vec<(PlayerType, Option<usize>)> = if opt_out {
                vec![(PlayerType::OptOut, None)]
            } else {
                (0..q)
                    .filter(|k| *k != truth_j)
                    .map(|k| (PlayerType::Location(k), Some(k)))
                    .collect()
            };
            for (deviation, dev_bin) in deviations {
                let mut r = vec![0i64; q];
                'window: loop {
                    let mut z_truth = vec![0u64; q];
                    let mut z_dev = vec![0u64; q];
                    for j in 0..q {
                        z_truth[j] = others[j] + r[j] as u64;
                        z_dev[j] = z_truth[j];
                    }
                    z_truth[truth_j] += 1;
                    if let Some(k) = dev_bin {
                        z_dev[k] += 1;
                    }
                    let med = median_index(&z_truth)?;
                    let med2 = median_index(&z_dev)?;
                    if med != med2 {
                        let o = Outcome::Location(med);
                        let o2 = Outcome::Location(med2);
                        let u_truth = spec.outcome_utility(&truth, &o)?;
                        let u_dev = spec.outcome_utility(&truth, &o2)?;
                        // any change must move the facility strictly away
                        // from the deviator's location, on the far side
                        let side_ok = if truth_j < med {
                            med2 > med
                        } else if truth_j > med {
                            med2 < med
                        } else {
                            true
                        };
                        if !side_ok {
                            min_side_violations += 1;
                        }
                        let away = u_truth - u_dev > 0.0;
                        tracker.record(
                            u_truth - u_dev,
                            side_ok && away,
                            &others_profile,
                            &truth,
                            &deviation,
                            &r,
                            &o,
                            &o2,
                        );
                    }
                    // odometer over the noise window
                    let mut d = 0;
                    loop {
                        if d == q {
                            break 'window;
                        }
                        r[d] += 1;
                        if r[d] <= noise_cap as i64 {
                            break;
                        }
                        r[d] = 0;
                        d += 1;
                    }
                }
            }
        }
    }
    let bound = 2.0 * privacy.bound_at_eps(eps_eff)?;
    let window_tail = NoiseSpec::facility(eps)?.tail_bound(noise_cap, q as u32).tail_mass;
    let spacing = locations
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(tracker
        .into_report(claim, bound, eps_eff)
        .param("q", q as f64)
        .param("n", n_max as f64)
        .param("eps", eps)
        .param("noise_cap", noise_cap as f64)
        .param("window_tail", window_tail)
        .param("min_spacing", spacing)
        .param("side_violations", min_side_violations as f64)
        .note(
            "noise entries are enumerated up to the cap; the reported tail mass bounds the \
             probability of any coin outside the enumerated window",
        ))
}

/// Universal truthfulness of the facility mechanism: every
/// outcome-changing deviation must move the median strictly away from
/// the deviator's location and cost at least `2 F(e^eps_eff)`.
pub fn facility_truthfulness_audit(
    locations: &[f64],
    n_max: u64,
    eps: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    noise_cap: u64,
) -> Result<AuditReport> {
    facility_audit(
        locations,
        n_max,
        eps,
        privacy,
        eps_eff,
        noise_cap,
        "thm-facility",
        false,
    )
}

/// Individual rationality of the facility mechanism: opting out is the
/// deviation (the report is dropped from the histogram).
pub fn facility_ir_audit(
    locations: &[f64],
    n_max: u64,
    eps: f64,
    privacy: &PrivacyModel,
    eps_eff: f64,
    noise_cap: u64,
) -> Result<AuditReport> {
    facility_audit(
        locations,
        n_max,
        eps,
        privacy,
        eps_eff,
        noise_cap,
        "ir-facility",
        true,
    )
}

/// Re-evaluate a facility utility-gap witness over the given locations.
pub fn replay_facility_gap(witness: &Witness, locations: &[f64]) -> Option<f64> {
    let Witness::UtilityGap {
        others,
        truth,
        deviation,
        noise,
        ..
    } = witness
    else {
        return None;
    };
    let spec = UtilitySpec::facility(locations.to_vec()).ok()?;
    let q = locations.len();
    let mut with_truth = others.0.clone();
    with_truth.push(truth.clone());
    let mut with_dev = others.0.clone();
    with_dev.push(deviation.clone());
    let r: Vec<u64> = noise.iter().map(|&v| v as u64).collect();
    let h1 = crate::model::build_histogram(&TypeProfile(with_truth), q).ok()?;
    let h2 = crate::model::build_histogram(&TypeProfile(with_dev), q).ok()?;
    let o = crate::mechanisms::facility_eval(&h1, &r).ok()?;
    let o2 = crate::mechanisms::facility_eval(&h2, &r).ok()?;
    Some(spec.outcome_utility(truth, &o).ok()? - spec.outcome_utility(truth, &o2).ok()?)
}
