//! Exact or truncation-certified output distributions of each mechanism,
//! statistical difference, and Bayesian posterior updates.
//!
//! Probabilities accumulate with compensated summation and are stored in
//! log space; every distribution carries a `slack` bound on the total
//! mass that truncation may have discarded, and downstream checks widen
//! their verdicts by it.

use std::collections::BTreeMap;

use crate::lattice::{for_each_weighted_point, lattice_volume};
use crate::mechanisms::{argmax, check_budget, scaled_values, VcgOutput, VcgSpec};
use crate::model::{Candidate, Histogram, TypeProfile};
use crate::noise::{NoiseSpec, TruncationWindow};
use crate::{Error, Result};

/// A value with a certified symmetric error bar.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Interval {
    pub value: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }
}

/// A discrete output distribution with log-space probabilities and a
/// certified bound on missing (truncated) mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist<K> {
    entries: Vec<(K, f64)>,
    slack: f64,
}

impl<K: Ord + Clone> Dist<K> {
    pub fn from_probs(pairs: impl IntoIterator<Item = (K, f64)>, slack: f64) -> Self {
        let mut b = DistBuilder::new();
        for (k, p) in pairs {
            b.add(k, p);
        }
        b.build(slack)
    }

    /// Probability of `key`; 0 when absent.
    pub fn prob(&self, key: &K) -> f64 {
        self.log_prob(key).map_or(0.0, f64::exp)
    }

    pub fn log_prob(&self, key: &K) -> Option<f64> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Entries as `(key, log probability)`, sorted by key.
    pub fn support(&self) -> &[(K, f64)] {
        &self.entries
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn total_mass(&self) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (_, lp) in &self.entries {
            let term = lp.exp();
            let t = sum + term;
            comp += if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
        }
        sum + comp
    }

    /// Marginal over a projection of the support.
    pub fn marginal<J: Ord + Clone>(&self, f: impl Fn(&K) -> J) -> Dist<J> {
        let mut b = DistBuilder::new();
        for (k, lp) in &self.entries {
            b.add(f(k), lp.exp());
        }
        b.build(self.slack)
    }
}

/// Compensated accumulator for building distributions key by key.
#[derive(Debug)]
pub struct DistBuilder<K> {
    map: BTreeMap<K, (f64, f64)>,
}

impl<K: Ord + Clone> DistBuilder<K> {
    pub fn new() -> Self {
        DistBuilder {
            map: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: K, mass: f64) {
        if mass <= 0.0 {
            return;
        }
        let (sum, comp) = self.map.entry(key).or_insert((0.0, 0.0));
        let t = *sum + mass;
        *comp += if sum.abs() >= mass.abs() {
            (*sum - t) + mass
        } else {
            (mass - t) + *sum
        };
        *sum = t;
    }

    pub fn build(self, slack: f64) -> Dist<K> {
        let entries = self
            .map
            .into_iter()
            .filter(|(_, (s, c))| s + c > 0.0)
            .map(|(k, (s, c))| (k, (s + c).ln()))
            .collect();
        Dist { entries, slack }
    }
}

impl<K: Ord + Clone> Default for DistBuilder<K> {
    fn default() -> Self {
        Self::new()
    }
}

/// Closed-form probability that the noisy election outputs A when the
/// participating tally difference `#A - #B` is `margin`.
pub fn election_winner_prob(margin: i64, eps: f64) -> Result<f64> {
    Ok(NoiseSpec::election(eps)?.cdf(margin))
}

/// Exact election output distribution (slack 0, closed form).
pub fn election_outcome_dist(profile: &TypeProfile, eps: f64) -> Result<Dist<Candidate>> {
    let margin = crate::mechanisms::election_margin(profile)?;
    election_dist_for_margin(margin, eps)
}

/// Exact election output distribution for a given tally difference.
pub fn election_dist_for_margin(margin: i64, eps: f64) -> Result<Dist<Candidate>> {
    let noise = NoiseSpec::election(eps)?;
    let a = noise.alpha();
    // both closed forms keep full relative precision on their own side
    let p_a = noise.cdf(margin);
    let p_b = if margin >= 0 {
        a.powi((margin + 1) as i32) / (1.0 + a)
    } else {
        1.0 - a.powi((-margin) as i32) / (1.0 + a)
    };
    Ok(Dist::from_probs(
        [(Candidate::A, p_a), (Candidate::B, p_b)],
        0.0,
    ))
}

const DIRECT_ENUMERATION_CUTOFF: u64 = 2_000_000;

/// Output distribution of the facility mechanism over location indices,
/// exact on the truncation window. Uses direct product enumeration for
/// small windows and a convolution dynamic program otherwise; the two
/// paths agree exactly up to float rounding.
pub fn facility_outcome_dist(
    h: &Histogram,
    eps: f64,
    window: &TruncationWindow,
    budget: u64,
) -> Result<Dist<usize>> {
    let q = h.num_bins();
    if q == 0 {
        return Err(Error::Domain("empty histogram".into()));
    }
    let volume = lattice_volume(0, window.bound as i64, q);
    if volume <= DIRECT_ENUMERATION_CUTOFF.min(budget) {
        facility_outcome_dist_direct(h, eps, window)
    } else {
        let k = window.bound;
        let conv_cost = (q as u64) * (q as u64) * k.saturating_mul(k);
        if conv_cost > budget {
            return Err(Error::Resource(format!(
                "facility enumeration cost {conv_cost} exceeds the budget {budget}"
            )));
        }
        facility_outcome_dist_convolved(h, eps, window)
    }
}

/// Direct product enumeration over the noise window.
pub fn facility_outcome_dist_direct(
    h: &Histogram,
    eps: f64,
    window: &TruncationWindow,
) -> Result<Dist<usize>> {
    let q = h.num_bins();
    let noise = NoiseSpec::facility(eps)?;
    let k = window.bound as i64;
    let weights: Vec<f64> = (0..=k).map(|v| noise.pmf(v)).collect();
    let mut masses = vec![(0.0f64, 0.0f64); q];
    let mut z = vec![0u64; q];
    for_each_weighted_point(0, k, q, &weights, |r, w| {
        for j in 0..q {
            z[j] = h.counts()[j] + r[j] as u64;
        }
        let med = crate::model::median_index(&z).expect("nonempty");
        let (sum, comp) = &mut masses[med];
        let t = *sum + w;
        *comp += if sum.abs() >= w.abs() {
            (*sum - t) + w
        } else {
            (w - t) + *sum
        };
        *sum = t;
    });
    let mut b = DistBuilder::new();
    for (j, (s, c)) in masses.into_iter().enumerate() {
        b.add(j, s + c);
    }
    Ok(b.build(window.tail_mass))
}

/// Convolution path: for each split point, the probability that the
/// median lands at or before it depends only on the prefix and suffix
/// noise sums, whose windowed distributions are iterated convolutions of
/// the single-coordinate mass vector. Differencing the nested events
/// recovers the per-location masses.
pub fn facility_outcome_dist_convolved(
    h: &Histogram,
    eps: f64,
    window: &TruncationWindow,
) -> Result<Dist<usize>> {
    let q = h.num_bins();
    let noise = NoiseSpec::facility(eps)?;
    let k = window.bound as usize;
    let w: Vec<f64> = (0..=k as i64).map(|v| noise.pmf(v)).collect();

    // conv[m] = windowed distribution of the sum of m coordinates
    let mut conv: Vec<Vec<f64>> = Vec::with_capacity(q + 1);
    conv.push(vec![1.0]);
    for m in 1..=q {
        let prev = &conv[m - 1];
        let mut next = vec![0.0f64; prev.len() + k];
        for (s, &ps) in prev.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for (v, &pv) in w.iter().enumerate() {
                next[s + v] += ps * pv;
            }
        }
        conv.push(next);
    }

    let total: i64 = h.counts().iter().map(|&c| c as i64).sum();
    let mut prefix_h = 0i64;
    let mut below = 0.0f64; // P[Med <= previous split]
    let mut b = DistBuilder::new();
    for split in 0..q {
        prefix_h += h.counts()[split] as i64;
        // need prefix_sum + S_pre >= suffix_sum + S_suf, i.e.
        // S_pre - S_suf >= c
        let c = (total - prefix_h) - prefix_h;
        let pre = &conv[split + 1];
        let suf = &conv[q - 1 - split];
        // suffix-cumulative of the prefix-sum distribution
        let mut tail = vec![0.0f64; pre.len() + 1];
        for s in (0..pre.len()).rev() {
            tail[s] = tail[s + 1] + pre[s];
        }
        let mut at_or_before = 0.0;
        for (s2, &p2) in suf.iter().enumerate() {
            let threshold = c + s2 as i64;
            let idx = threshold.clamp(0, pre.len() as i64) as usize;
            at_or_before += p2 * tail[idx];
        }
        let mass = (at_or_before - below).max(0.0);
        b.add(split, mass);
        below = at_or_before;
    }
    Ok(b.build(window.tail_mass))
}

/// Winner-only output distribution of the noisy VCG mechanism.
pub fn vcg_winner_dist(
    profile: &TypeProfile,
    eps: f64,
    spec: &VcgSpec,
    window: &TruncationWindow,
    budget: u64,
) -> Result<Dist<usize>> {
    let base = scaled_values(profile, &vec![0; spec.num_outcomes], spec)?;
    let k = window.bound as i64;
    check_budget(-k, k, spec.num_outcomes, budget)?;
    let noise = NoiseSpec::vcg(eps, spec.max_value, spec.num_outcomes)?;
    let weights: Vec<f64> = (-k..=k).map(|v| noise.pmf(v)).collect();
    let mut b = DistBuilder::new();
    let mut values = vec![0i64; spec.num_outcomes];
    for_each_weighted_point(-k, k, spec.num_outcomes, &weights, |lambda, w| {
        for o in 0..spec.num_outcomes {
            values[o] = base[o] + spec.num_outcomes as i64 * lambda[o];
        }
        b.add(argmax(&values), w);
    });
    Ok(b.build(window.tail_mass))
}

/// Full `(winner, payment information)` output distribution of the noisy
/// VCG mechanism, with the released gaps canonicalized as exact rationals
/// sorted by outcome.
pub fn vcg_full_dist(
    profile: &TypeProfile,
    eps: f64,
    spec: &VcgSpec,
    window: &TruncationWindow,
    budget: u64,
) -> Result<Dist<VcgOutput>> {
    let base = scaled_values(profile, &vec![0; spec.num_outcomes], spec)?;
    let k = window.bound as i64;
    check_budget(-k, k, spec.num_outcomes, budget)?;
    let noise = NoiseSpec::vcg(eps, spec.max_value, spec.num_outcomes)?;
    let weights: Vec<f64> = (-k..=k).map(|v| noise.pmf(v)).collect();
    let mut b = DistBuilder::new();
    let mut values = vec![0i64; spec.num_outcomes];
    for_each_weighted_point(-k, k, spec.num_outcomes, &weights, |lambda, w| {
        for o in 0..spec.num_outcomes {
            values[o] = base[o] + spec.num_outcomes as i64 * lambda[o];
        }
        b.add(crate::mechanisms::output_from_scaled(&values, spec), w);
    });
    Ok(b.build(window.tail_mass))
}

/// Statistical (total variation) difference: half the L1 distance over
/// the union support, with the interval widened by half the combined
/// slack.
pub fn statistical_difference<K: Ord + Clone>(a: &Dist<K>, b: &Dist<K>) -> Interval {
    let mut l1 = 0.0f64;
    let mut comp = 0.0f64;
    let mut add = |term: f64| {
        let t = l1 + term;
        comp += if l1.abs() >= term.abs() {
            (l1 - t) + term
        } else {
            (term - t) + l1
        };
        l1 = t;
    };
    let (mut i, mut j) = (0, 0);
    let (sa, sb) = (a.support(), b.support());
    while i < sa.len() || j < sb.len() {
        match (sa.get(i), sb.get(j)) {
            (Some((ka, lpa)), Some((kb, lpb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    add(lpa.exp());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    add(lpb.exp());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    add((lpa.exp() - lpb.exp()).abs());
                    i += 1;
                    j += 1;
                }
            },
            (Some((_, lpa)), None) => {
                add(lpa.exp());
                i += 1;
            }
            (None, Some((_, lpb))) => {
                add(lpb.exp());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    Interval {
        value: 0.5 * (l1 + comp),
        half_width: 0.5 * (a.slack() + b.slack()),
    }
}

/// Bayesian posterior over types after observing one output.
///
/// `prior` and `per_type_dists` are aligned: entry `i` of the prior is
/// the probability of the type whose output distribution is
/// `per_type_dists[i]`.
pub fn bayes_posterior<T: Clone, K: Ord + Clone>(
    prior: &[(T, f64)],
    per_type_dists: &[Dist<K>],
    observed: &K,
) -> Result<Vec<(T, f64)>> {
    if prior.len() != per_type_dists.len() || prior.is_empty() {
        return Err(Error::Domain(
            "prior and per-type distributions must align and be nonempty".into(),
        ));
    }
    if prior.iter().any(|(_, p)| *p < 0.0) {
        return Err(Error::Domain("negative prior mass".into()));
    }
    let likelihoods: Vec<f64> = per_type_dists.iter().map(|d| d.prob(observed)).collect();
    let evidence: f64 = prior
        .iter()
        .zip(&likelihoods)
        .map(|((_, p), l)| p * l)
        .sum();
    if evidence <= 0.0 {
        return Err(Error::Domain("zero evidence mass for the observation".into()));
    }
    Ok(prior
        .iter()
        .zip(&likelihoods)
        .map(|((t, p), l)| (t.clone(), p * l / evidence))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PlayerType;
    use proptest::prelude::*;

    #[test]
    fn election_tie_probability_matches_truncated_sum_oracle() {
        let eps = std::f64::consts::LN_2;
        // brute-force normalization of exp(-eps |k|) and mass of k <= 0
        let mut z = 0.0;
        let mut below = 0.0;
        for k in -3000i64..=3000 {
            let m = (-eps * k.abs() as f64).exp();
            z += m;
            if k <= 0 {
                below += m;
            }
        }
        let expect = below / z;
        let got = election_winner_prob(0, eps).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn election_loss_probability_matches_geometric_series_oracle() {
        for eps in [0.2f64, 0.5, 1.0] {
            let a = (-eps).exp();
            for margin in 0i64..=6 {
                let d = election_dist_for_margin(margin, eps).unwrap();
                // oracle: sum of alpha^k over k > margin, normalized by the
                // brute two-sided series
                let mut z = 0.0;
                let mut above = 0.0;
                for k in -4000i64..=4000 {
                    let m = a.powi(k.unsigned_abs() as i32);
                    z += m;
                    if k > margin {
                        above += m;
                    }
                }
                let expect = above / z;
                let got = d.prob(&Candidate::B);
                assert!((got - expect).abs() < 1e-12, "eps={eps} margin={margin}");
                // and the closed form from the tail identity
                let closed = a.powi((margin + 1) as i32) / (1.0 + a);
                assert!((got - closed).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn election_concentrates_for_large_eps() {
        let d = election_dist_for_margin(1, 40.0).unwrap();
        assert!(d.prob(&Candidate::A) > 1.0 - 1e-15);
        assert_eq!(d.slack(), 0.0);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn facility_single_location_gets_all_window_mass() {
        let h = Histogram(vec![4]);
        let noise = NoiseSpec::facility(1.0).unwrap();
        let window = noise.window_for_slack(1, 1e-9).unwrap();
        let d = facility_outcome_dist(&h, 1.0, &window, 1 << 20).unwrap();
        assert_eq!(d.support().len(), 1);
        assert!(d.prob(&0) >= 1.0 - window.tail_mass - 1e-12);
        assert!(d.prob(&0) <= 1.0);
    }

    #[test]
    fn empty_histogram_median_is_a_noise_race() {
        // with h = (0, 0), location 0 wins exactly when r_0 >= r_1
        let h = Histogram(vec![0, 0]);
        let eps = 0.8;
        let noise = NoiseSpec::facility(eps).unwrap();
        let window = noise.window_for_slack(2, 1e-10).unwrap();
        let d = facility_outcome_dist(&h, eps, &window, 1 << 22).unwrap();
        let k = window.bound as i64;
        let mut expect = 0.0;
        for r0 in 0..=k {
            for r1 in 0..=k {
                if r0 >= r1 {
                    expect += noise.pmf(r0) * noise.pmf(r1);
                }
            }
        }
        assert!((d.prob(&0) - expect).abs() < 1e-13);
    }

    #[test]
    fn skewed_histogram_rarely_moves() {
        let h = Histogram(vec![5, 0]);
        let eps = 1.0;
        let noise = NoiseSpec::facility(eps).unwrap();
        let window = noise.tail_bound(30, 2);
        let d = facility_outcome_dist(&h, eps, &window, 1 << 22).unwrap();
        assert!(d.prob(&0) >= 1.0 - (-eps * 5.0 / 2.0).exp() - window.tail_mass);
    }

    #[test]
    fn facility_paths_agree() {
        for (counts, eps, k) in [
            (vec![2u64, 1], 0.7, 12u64),
            (vec![0, 3, 1], 1.1, 9),
            (vec![1, 0, 0, 2], 1.6, 6),
            (vec![4, 4], 0.4, 15),
        ] {
            let h = Histogram(counts);
            let noise = NoiseSpec::facility(eps).unwrap();
            let window = noise.tail_bound(k, h.num_bins() as u32);
            let a = facility_outcome_dist_direct(&h, eps, &window).unwrap();
            let b = facility_outcome_dist_convolved(&h, eps, &window).unwrap();
            for j in 0..h.num_bins() {
                assert!(
                    (a.prob(&j) - b.prob(&j)).abs() < 1e-13,
                    "h={h:?} eps={eps} j={j}"
                );
            }
        }
    }

    #[test]
    fn facility_mass_sums_to_window_mass() {
        let h = Histogram(vec![1, 2, 0]);
        let eps = 0.9;
        let noise = NoiseSpec::facility(eps).unwrap();
        let window = noise.window_for_slack(3, 1e-6).unwrap();
        let d = facility_outcome_dist(&h, eps, &window, 1 << 24).unwrap();
        let total = d.total_mass();
        assert!(total <= 1.0 + 1e-12);
        assert!(total >= 1.0 - window.tail_mass);
        // exact out-of-window mass is below the certified slack
        let in_window: f64 = {
            let per = 1.0 - noise.single_coordinate_tail(window.bound);
            per.powi(3)
        };
        assert!((total - in_window).abs() < 1e-12);
    }

    #[test]
    fn facility_budget_is_enforced() {
        let h = Histogram(vec![0, 0, 0]);
        let noise = NoiseSpec::facility(0.1).unwrap();
        let window = noise.tail_bound(400, 3);
        assert!(matches!(
            facility_outcome_dist(&h, 0.1, &window, 100),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn vcg_noise_only_winner_is_a_tie_break_race() {
        // with no players, winner 1 wins exactly when lambda_1 >= lambda_0
        let spec = VcgSpec::new(2, 1).unwrap();
        let profile = TypeProfile(vec![]);
        let eps = 1.0;
        let noise = NoiseSpec::vcg(eps, 1, 2).unwrap();
        let window = noise.window_for_slack(2, 1e-10).unwrap();
        let d = vcg_winner_dist(&profile, eps, &spec, &window, 1 << 24).unwrap();
        let k = window.bound as i64;
        let mut expect = 0.0;
        for l0 in -k..=k {
            for l1 in -k..=k {
                if l1 >= l0 {
                    expect += noise.pmf(l0) * noise.pmf(l1);
                }
            }
        }
        assert!((d.prob(&1) - expect).abs() < 1e-13);
    }

    #[test]
    fn vcg_winner_marginal_matches_full_distribution() {
        let spec = VcgSpec::new(2, 1).unwrap();
        let profile = TypeProfile::rows(&[vec![1, 0], vec![0, 1]]);
        let eps = 1.0;
        let noise = NoiseSpec::vcg(eps, 1, 2).unwrap();
        let window = noise.tail_bound(40, 2);
        let full = vcg_full_dist(&profile, eps, &spec, &window, 1 << 24).unwrap();
        let winners = vcg_winner_dist(&profile, eps, &spec, &window, 1 << 24).unwrap();
        let marginal = full.marginal(|out| out.winner);
        for o in 0..2 {
            assert!((marginal.prob(&o) - winners.prob(&o)).abs() < 1e-14);
        }
        let total = full.total_mass();
        assert!(total >= 1.0 - window.tail_mass && total <= 1.0 + 1e-12);
    }

    #[test]
    fn statistical_difference_basics() {
        let d1 = Dist::from_probs([(0u8, 2.0 / 3.0), (1u8, 1.0 / 3.0)], 0.0);
        let d2 = Dist::from_probs([(0u8, 1.0 / 3.0), (1u8, 2.0 / 3.0)], 0.0);
        assert_eq!(statistical_difference(&d1, &d1).value, 0.0);
        let sd = statistical_difference(&d1, &d2);
        assert!((sd.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sd.half_width, 0.0);
    }

    #[test]
    fn statistical_difference_equals_max_over_events() {
        // exhaustive subset maximization on supports up to 8
        let d1 = Dist::from_probs(
            (0u8..8).map(|k| (k, (f64::from(k) + 1.0) / 36.0)),
            0.0,
        );
        let d2 = Dist::from_probs(
            (0u8..8).map(|k| (k, (8.0 - f64::from(k)) / 36.0)),
            0.0,
        );
        let mut best = 0.0f64;
        for mask in 0u32..256 {
            let mut pa = 0.0;
            let mut pb = 0.0;
            for k in 0u8..8 {
                if mask >> k & 1 == 1 {
                    pa += d1.prob(&k);
                    pb += d2.prob(&k);
                }
            }
            best = best.max((pa - pb).abs());
        }
        let sd = statistical_difference(&d1, &d2);
        assert!((sd.value - best).abs() < 1e-12);
    }

    #[test]
    fn statistical_difference_accounts_for_disjoint_support() {
        let d1 = Dist::from_probs([(0u8, 1.0)], 0.0);
        let d2 = Dist::from_probs([(1u8, 1.0)], 0.0);
        assert!((statistical_difference(&d1, &d2).value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sd_bounds_neighboring_election_reports() {
        // for one mechanism on neighboring reports, SD <= e^eps - 1
        for eps in [0.2, 0.5, 1.0] {
            for margin in -4i64..=4 {
                let d1 = election_dist_for_margin(margin, eps).unwrap();
                let d2 = election_dist_for_margin(margin - 1, eps).unwrap();
                let sd = statistical_difference(&d1, &d2);
                assert!(sd.value <= eps.exp() - 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn posterior_is_prior_when_the_mechanism_ignores_the_player() {
        let d = election_dist_for_margin(2, 0.5).unwrap();
        let prior = vec![("x", 0.3), ("y", 0.7)];
        let post = bayes_posterior(&prior, &[d.clone(), d], &Candidate::A).unwrap();
        assert!((post[0].1 - 0.3).abs() < 1e-15);
        assert!((post[1].1 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn posterior_ratio_is_the_likelihood_ratio_under_a_uniform_prior() {
        let da = election_dist_for_margin(1, 0.7).unwrap();
        let db = election_dist_for_margin(-1, 0.7).unwrap();
        let prior = vec![(Candidate::A, 0.5), (Candidate::B, 0.5)];
        let post = bayes_posterior(&prior, &[da.clone(), db.clone()], &Candidate::A).unwrap();
        let lr = da.prob(&Candidate::A) / db.prob(&Candidate::A);
        assert!((post[0].1 / post[1].1 - lr).abs() < 1e-12);
    }

    #[test]
    fn posterior_rejects_zero_evidence() {
        let d = Dist::from_probs([(0u8, 1.0)], 0.0);
        let prior = vec![("t", 1.0)];
        assert!(bayes_posterior(&prior, &[d], &1u8).is_err());
    }

    #[test]
    fn vcg_rejects_foreign_profiles() {
        let spec = VcgSpec::new(2, 1).unwrap();
        let profile = TypeProfile(vec![PlayerType::Vote(Candidate::A)]);
        let noise = NoiseSpec::vcg(1.0, 1, 2).unwrap();
        let window = noise.tail_bound(5, 2);
        assert!(vcg_winner_dist(&profile, 1.0, &spec, &window, 1 << 20).is_err());
    }

    proptest! {
        /// For any bounded f, |E_d1 f - E_d2 f| <= 2 B SD(d1, d2).
        #[test]
        fn prop_expectation_difference_bounded_by_sd(
            masses1 in proptest::collection::vec(0.01f64..1.0, 5),
            masses2 in proptest::collection::vec(0.01f64..1.0, 5),
            f_vals in proptest::collection::vec(-3.0f64..3.0, 5),
        ) {
            let norm1: f64 = masses1.iter().sum();
            let norm2: f64 = masses2.iter().sum();
            let d1 = Dist::from_probs(masses1.iter().enumerate().map(|(k, m)| (k as u8, m / norm1)), 0.0);
            let d2 = Dist::from_probs(masses2.iter().enumerate().map(|(k, m)| (k as u8, m / norm2)), 0.0);
            let bound: f64 = f_vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let e1: f64 = f_vals.iter().enumerate().map(|(k, v)| v * d1.prob(&(k as u8))).sum();
            let e2: f64 = f_vals.iter().enumerate().map(|(k, v)| v * d2.prob(&(k as u8))).sum();
            let sd = statistical_difference(&d1, &d2);
            prop_assert!((e1 - e2).abs() <= 2.0 * bound * sd.value + 1e-12);
        }

        /// Distribution mass bookkeeping survives random inputs.
        #[test]
        fn prop_builder_total_mass(masses in proptest::collection::vec(0.0f64..1.0, 1..12)) {
            let total: f64 = masses.iter().sum();
            prop_assume!(total > 0.0);
            let d = Dist::from_probs(
                masses.iter().enumerate().map(|(k, m)| (k as u8, m / total)),
                0.0,
            );
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
