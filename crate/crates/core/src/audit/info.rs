//! Information-theoretic audits: mutual information, KL divergence, the
//! mutual-information truthfulness criterion (privacy cost proportional
//! to the information the output carries about a prior-distributed
//! type), and the Bayesian posterior-ratio bracket.

use std::collections::BTreeMap;

use super::{verdict_upper, AuditReport, Verdict, Witness};
use crate::distributions::{bayes_posterior, election_dist_for_margin, Dist};
use crate::mechanisms::election_margin;
use crate::model::{Candidate, TypeProfile};
use crate::{Error, Result};

/// A joint distribution over (type, output) pairs with linear
/// probabilities and a certified bound on truncated mass.
#[derive(Debug, Clone)]
pub struct JointDist<X, Y> {
    entries: Vec<((X, Y), f64)>,
    slack: f64,
}

impl<X: Ord + Clone, Y: Ord + Clone> JointDist<X, Y> {
    pub fn new(pairs: impl IntoIterator<Item = ((X, Y), f64)>, slack: f64) -> Result<Self> {
        let mut map: BTreeMap<(X, Y), f64> = BTreeMap::new();
        for (key, p) in pairs {
            if p < 0.0 {
                return Err(Error::Domain(format!("negative joint mass {p}")));
            }
            *map.entry(key).or_insert(0.0) += p;
        }
        let entries: Vec<_> = map.into_iter().filter(|(_, p)| *p > 0.0).collect();
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::Domain(format!("joint mass {total} exceeds 1")));
        }
        if total < 1.0 - slack - 1e-9 {
            return Err(Error::Domain(format!(
                "joint mass {total} misses more than the slack {slack}"
            )));
        }
        Ok(JointDist { entries, slack })
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn entries(&self) -> &[((X, Y), f64)] {
        &self.entries
    }

    pub fn marginal_x(&self) -> BTreeMap<X, f64> {
        let mut out = BTreeMap::new();
        for ((x, _), p) in &self.entries {
            *out.entry(x.clone()).or_insert(0.0) += p;
        }
        out
    }

    pub fn marginal_y(&self) -> BTreeMap<Y, f64> {
        let mut out = BTreeMap::new();
        for ((_, y), p) in &self.entries {
            *out.entry(y.clone()).or_insert(0.0) += p;
        }
        out
    }
}

/// Joint of (type index, output) from a prior and per-type output
/// distributions.
pub fn joint_from_prior<K: Ord + Clone>(
    prior: &[f64],
    dists: &[Dist<K>],
) -> Result<JointDist<usize, K>> {
    if prior.len() != dists.len() || prior.is_empty() {
        return Err(Error::Domain(
            "prior and per-type distributions must align".into(),
        ));
    }
    let slack = prior
        .iter()
        .zip(dists)
        .map(|(p, d)| p * d.slack())
        .sum::<f64>();
    let mut pairs = Vec::new();
    for (t, (p, d)) in prior.iter().zip(dists).enumerate() {
        for (key, lp) in d.support() {
            pairs.push(((t, key.clone()), p * lp.exp()));
        }
    }
    JointDist::new(pairs, slack)
}

/// Mutual information in nats: `sum p(x,y) ln(p(x,y) / (p(x) p(y)))`,
/// with `0 ln 0 = 0`.
pub fn mutual_information<X: Ord + Clone, Y: Ord + Clone>(joint: &JointDist<X, Y>) -> f64 {
    let mx = joint.marginal_x();
    let my = joint.marginal_y();
    let mut total = 0.0;
    for ((x, y), p) in &joint.entries {
        if *p > 0.0 {
            total += p * (p / (mx[x] * my[y])).ln();
        }
    }
    total
}

/// KL divergence in nats over the support of `a`; infinite when `a` has
/// mass where `b` has none.
pub fn kl_divergence<K: Ord + Clone>(a: &Dist<K>, b: &Dist<K>) -> f64 {
    let mut total = 0.0;
    for (key, lpa) in a.support() {
        match b.log_prob(key) {
            Some(lpb) => total += lpa.exp() * (lpa - lpb),
            None => return f64::INFINITY,
        }
    }
    total
}

/// Truthfulness against information-priced privacy: for a prior on the
/// player's type, every misreporting strategy must do no better than
/// truth-telling once `nu` times the mutual information between the type
/// and the output is charged. Enumerates all `m^m` strategies.
pub fn xiao_truthfulness_audit<K: Ord + Clone>(
    prior: &[f64],
    per_type_dists: &[Dist<K>],
    outcome_utility: &dyn Fn(usize, &K) -> f64,
    nu: f64,
    slack_margin: f64,
) -> Result<AuditReport> {
    let m = prior.len();
    if m == 0 || m != per_type_dists.len() {
        return Err(Error::Domain(
            "prior and per-type distributions must align".into(),
        ));
    }
    if m > 5 {
        return Err(Error::Resource(format!(
            "strategy space {m}^{m} is out of scope"
        )));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 || prior.iter().any(|p| *p < 0.0) {
        return Err(Error::Domain("prior must be a distribution".into()));
    }

    let value_of = |sigma: &[usize]| -> Result<f64> {
        let reported: Vec<Dist<K>> = sigma
            .iter()
            .map(|&s| per_type_dists[s].clone())
            .collect();
        let joint = joint_from_prior(prior, &reported)?;
        let mut expected_uo = 0.0;
        for ((t, key), p) in joint.entries() {
            expected_uo += p * outcome_utility(*t, key);
        }
        Ok(expected_uo - nu * mutual_information(&joint))
    };

    let identity: Vec<usize> = (0..m).collect();
    let truthful_value = value_of(&identity)?;

    let mut measured = f64::INFINITY;
    let mut witness = Witness::None;
    let mut sigma = vec![0usize; m];
    let mut count = 0u64;
    loop {
        count += 1;
        let margin = truthful_value - value_of(&sigma)?;
        if margin < measured {
            measured = margin;
            witness = Witness::Strategy {
                sigma: sigma.clone(),
                margin,
            };
        }
        let mut d = 0;
        loop {
            if d == m {
                let bound = -slack_margin;
                let verdict = if measured >= bound {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                };
                let mut report = AuditReport::new("thm-xiao", measured, bound, verdict)
                    .param("nu", nu)
                    .param("num_types", m as f64)
                    .param("num_strategies", count as f64)
                    .param("slack_margin", slack_margin)
                    .note(
                        "measured is the minimum over all strategies of the truthful value \
                         minus the strategy value, privacy charged as nu times the mutual \
                         information between type and output",
                    );
                report.witness = witness;
                return Ok(report);
            }
            sigma[d] += 1;
            if sigma[d] < m {
                break;
            }
            sigma[d] = 0;
            d += 1;
        }
    }
}

/// The mutual-information truthfulness audit on a two-candidate election
/// with the other players' reports fixed: types {A, B}, closed-form
/// output distributions, preference gap `gap`, prior `prior_a` on A.
pub fn xiao_election_audit(
    others: &TypeProfile,
    eps: f64,
    gap: f64,
    nu: f64,
    prior_a: f64,
) -> Result<AuditReport> {
    if !(0.0..=1.0).contains(&prior_a) {
        return Err(Error::Domain(format!("prior {prior_a} outside [0, 1]")));
    }
    let base = election_margin(others)?;
    let dists = vec![
        election_dist_for_margin(base + 1, eps)?,
        election_dist_for_margin(base - 1, eps)?,
    ];
    let prior = [prior_a, 1.0 - prior_a];
    let uo = move |t: usize, winner: &Candidate| -> f64 {
        let preferred = if t == 0 { Candidate::A } else { Candidate::B };
        if *winner == preferred {
            gap
        } else {
            0.0
        }
    };
    let report = xiao_truthfulness_audit(&prior, &dists, &uo, nu, 1e-9)?;
    Ok(report
        .param("eps", eps)
        .param("gap", gap)
        .param("prior_a", prior_a)
        .param("others_margin", base as f64))
}

/// Compositions of `resolution` into `m` nonnegative parts, as priors
/// with step `1 / resolution`.
fn prior_grid(m: usize, resolution: u32) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if m == 1 {
            current.push(left);
            out.push(current.clone());
            current.pop();
            return;
        }
        for take in 0..=left {
            current.push(take);
            rec(m - 1, left - take, current, out);
            current.pop();
        }
    }
    let mut raw = Vec::new();
    rec(m, resolution, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|v| f64::from(v) / f64::from(resolution)).collect())
        .collect()
}

/// Posterior-ratio bracket audit: over a grid of priors and every
/// observable output, the posterior/prior ratio of every type must lie
/// in `[1/x, x]`, where `x` is the worst per-output likelihood ratio
/// across type pairs. Outputs with zero evidence under a prior are
/// skipped and counted.
pub fn posterior_bound_audit<K: Ord + Clone + std::fmt::Debug>(
    per_type_dists: &[Dist<K>],
    grid_resolution: u32,
    tolerance: f64,
) -> Result<AuditReport> {
    let m = per_type_dists.len();
    if m == 0 {
        return Err(Error::Domain("no type distributions".into()));
    }
    if grid_resolution == 0 {
        return Err(Error::Domain("grid resolution must be positive".into()));
    }
    // union of outputs
    let mut outputs: Vec<K> = Vec::new();
    for d in per_type_dists {
        for (key, _) in d.support() {
            if !outputs.contains(key) {
                outputs.push(key.clone());
            }
        }
    }
    outputs.sort();

    let max_slack = per_type_dists
        .iter()
        .map(Dist::slack)
        .fold(0.0f64, f64::max);
    let mut min_positive = f64::INFINITY;
    let mut measured = 0.0f64;
    let mut skipped = 0u64;
    let mut unbounded_x = 0u64;
    let mut witness = Witness::None;

    for prior in prior_grid(m, grid_resolution) {
        for key in &outputs {
            let likelihoods: Vec<f64> = per_type_dists.iter().map(|d| d.prob(key)).collect();
            let evidence: f64 = prior.iter().zip(&likelihoods).map(|(p, l)| p * l).sum();
            if evidence <= 0.0 {
                skipped += 1;
                continue;
            }
            // x at this output: worst likelihood ratio over type pairs
            let positives: Vec<f64> = likelihoods.iter().copied().filter(|l| *l > 0.0).collect();
            for l in &positives {
                min_positive = min_positive.min(*l);
            }
            if positives.len() < likelihoods.len() {
                // a zero likelihood makes x a lower bound (unbounded), so
                // the bracket [1/x, x] is vacuous at this output
                unbounded_x += 1;
                continue;
            }
            let max_l = positives.iter().copied().fold(f64::MIN, f64::max);
            let min_l = positives.iter().copied().fold(f64::MAX, f64::min);
            let x = max_l / min_l;
            let prior_pairs: Vec<(usize, f64)> =
                prior.iter().copied().enumerate().collect();
            let posterior = bayes_posterior(&prior_pairs, per_type_dists, key)?;
            for (t, (_, post)) in posterior.iter().enumerate() {
                if prior[t] <= 0.0 {
                    continue;
                }
                let ratio = post / prior[t];
                let violation = (ratio - x).max(1.0 / x - ratio).max(0.0);
                if violation > measured {
                    measured = violation;
                    witness = Witness::PosteriorRatio {
                        prior: prior.clone(),
                        type_index: t,
                        outcome: format!("{key:?}"),
                        ratio,
                        x,
                    };
                }
            }
        }
    }
    let perturbation = if max_slack == 0.0 {
        0.0
    } else {
        4.0 * max_slack / min_positive.min(1.0)
    };
    let mut report = AuditReport::new(
        "posterior-bound",
        measured,
        tolerance,
        verdict_upper(measured, measured + perturbation, tolerance),
    )
    .param("num_types", m as f64)
    .param("grid_resolution", f64::from(grid_resolution))
    .param("tolerance", tolerance)
    .param("max_slack", max_slack)
    .param("skipped_zero_evidence", skipped as f64)
    .param("unbounded_x_outputs", unbounded_x as f64)
    .note(
        "measured is the worst distance of a posterior/prior ratio outside [1/x, x]; \
         outputs where some type has zero likelihood make x a lower bound and the \
         bracket vacuous",
    );
    report.witness = witness;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RngStream;

    #[test]
    fn mutual_information_of_independent_joint_is_zero() {
        let mut pairs = Vec::new();
        let px = [0.3, 0.7];
        let py = [0.2, 0.5, 0.3];
        for (x, pxv) in px.iter().enumerate() {
            for (y, pyv) in py.iter().enumerate() {
                pairs.push(((x, y), pxv * pyv));
            }
        }
        let joint = JointDist::new(pairs, 0.0).unwrap();
        assert!(mutual_information(&joint).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_of_a_bijection_is_log_k() {
        for k in [2usize, 3, 5] {
            let pairs: Vec<((usize, usize), f64)> =
                (0..k).map(|t| ((t, t), 1.0 / k as f64)).collect();
            let joint = JointDist::new(pairs, 0.0).unwrap();
            assert!((mutual_information(&joint) - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_information_is_zero_when_output_ignores_the_type() {
        let d = election_dist_for_margin(1, 0.8).unwrap();
        let joint = joint_from_prior(&[0.4, 0.6], &[d.clone(), d]).unwrap();
        assert!(mutual_information(&joint).abs() < 1e-12);
    }

    #[test]
    fn kl_divergence_identities() {
        let d1 = Dist::from_probs([(0u8, 0.25), (1u8, 0.75)], 0.0);
        let d2 = Dist::from_probs([(0u8, 0.5), (1u8, 0.5)], 0.0);
        assert_eq!(kl_divergence(&d1, &d1), 0.0);
        assert!(kl_divergence(&d1, &d2) > 0.0);
        let narrow = Dist::from_probs([(0u8, 1.0)], 0.0);
        assert_eq!(kl_divergence(&d2, &narrow), f64::INFINITY);
        assert!(kl_divergence(&narrow, &d2) > 0.0);
    }

    #[test]
    fn kl_data_processing_on_random_joints() {
        // KL((W, X) || (W, Y)) >= KL(X || Y) on random small joints
        let mut rng = RngStream::new(2024);
        for _ in 0..200 {
            let w_card = 2 + (rng.below(3) as usize);
            let z_card = 2 + (rng.below(3) as usize);
            let mut p_pairs = Vec::new();
            let mut q_pairs = Vec::new();
            let mut p_total = 0.0;
            let mut q_total = 0.0;
            for w in 0..w_card {
                for z in 0..z_card {
                    let pv = rng.uniform_open();
                    let qv = rng.uniform_open();
                    p_pairs.push(((w, z), pv));
                    q_pairs.push(((w, z), qv));
                    p_total += pv;
                    q_total += qv;
                }
            }
            let p: Dist<(usize, usize)> =
                Dist::from_probs(p_pairs.into_iter().map(|(k, v)| (k, v / p_total)), 0.0);
            let q: Dist<(usize, usize)> =
                Dist::from_probs(q_pairs.into_iter().map(|(k, v)| (k, v / q_total)), 0.0);
            let px = p.marginal(|(_, z)| *z);
            let qx = q.marginal(|(_, z)| *z);
            assert!(kl_divergence(&p, &q) >= kl_divergence(&px, &qx) - 1e-9);
        }
    }

    #[test]
    fn xiao_identity_strategy_margin_is_zero_and_included() {
        let r = xiao_election_audit(&TypeProfile(vec![]), 0.5, 1.0, 0.05, 0.5).unwrap();
        assert!(r.passed(), "{r:?}");
        // identity margin 0 bounds the minimum from above
        assert!(r.measured <= 1e-12);
        assert_eq!(r.params["num_strategies"], 4.0);
    }

    #[test]
    fn xiao_constant_strategy_leaks_nothing() {
        let d1 = election_dist_for_margin(1, 0.5).unwrap();
        let joint = joint_from_prior(&[0.5, 0.5], &[d1.clone(), d1]).unwrap();
        assert!(mutual_information(&joint).abs() < 1e-12);
    }

    #[test]
    fn xiao_election_passes_below_threshold_for_all_strategy_count() {
        // gap 1, eps_eff = 2 eps; nu below gap / (2 eps_eff)
        let others = TypeProfile::votes("AB").unwrap();
        for prior_a in [0.5, 0.1, 0.9] {
            let r = xiao_election_audit(&others, 0.5, 1.0, 0.2, prior_a).unwrap();
            assert!(r.passed(), "prior_a={prior_a} {r:?}");
        }
    }

    #[test]
    fn posterior_bracket_trivial_for_player_ignoring_mechanism() {
        let d = election_dist_for_margin(3, 1.0).unwrap();
        let r = posterior_bound_audit(&[d.clone(), d], 10, 1e-9).unwrap();
        assert!(r.passed());
        // grid priors round in the last bit, so the ratio is 1 up to ulps
        assert!(r.measured < 1e-12);
    }

    #[test]
    fn posterior_bracket_on_election_types() {
        let dists = vec![
            election_dist_for_margin(1, 1.0).unwrap(),
            election_dist_for_margin(-1, 1.0).unwrap(),
        ];
        let r = posterior_bound_audit(&dists, 10, 1e-9).unwrap();
        assert!(r.passed(), "{r:?}");
        // point-mass priors are on the grid and pass trivially
        assert_eq!(r.params["skipped_zero_evidence"], 0.0);
    }
}
