//! The three mechanisms: deterministic evaluation given explicit noise,
//! sampled execution, VCG payments from public payment information, and
//! expected-externality payments.
//!
//! All noisy-VCG arithmetic is exact: a value `V_o = sum_j U(theta_j, o)
//! + lambda_o + o / |O|` is stored as the integer `|O| * (sum + lambda_o)
//! + o`, i.e. as a numerator over the fixed denominator `|O|`. The
//! fractional tie-break parts are then distinct residues mod `|O|`, so
//! the argmax is unique and payment comparisons never touch floats.

use serde::{Deserialize, Serialize};

use crate::lattice::{for_each_weighted_point, lattice_volume};
use crate::model::{
    build_histogram, median_index, validate_locations, Candidate, Histogram, Outcome, PlayerType,
    TypeProfile,
};
use crate::noise::{NoiseSpec, RngStream, TruncationWindow};
use crate::{Error, Result};

/// Parameters of a social-choice instance: `num_outcomes` outcomes and
/// utilities in `0..=max_value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VcgSpec {
    pub num_outcomes: usize,
    pub max_value: u32,
}

impl VcgSpec {
    pub fn new(num_outcomes: usize, max_value: u32) -> Result<Self> {
        if num_outcomes == 0 {
            return Err(Error::Domain("empty outcome set".into()));
        }
        if max_value == 0 {
            return Err(Error::Domain("max utility must be at least 1".into()));
        }
        Ok(VcgSpec {
            num_outcomes,
            max_value,
        })
    }

    pub(crate) fn denom(&self) -> i64 {
        self.num_outcomes as i64
    }

    /// Utility of a report on outcome `o`; opt-out rows are all zero.
    pub fn row_value(&self, t: &PlayerType, o: usize) -> Result<i64> {
        match t {
            PlayerType::OptOut => Ok(0),
            PlayerType::Row(row) => {
                if row.len() != self.num_outcomes {
                    return Err(Error::Domain(format!(
                        "row has {} entries, instance has {}",
                        row.len(),
                        self.num_outcomes
                    )));
                }
                let v = row[o];
                if v > self.max_value {
                    return Err(Error::Domain(format!(
                        "utility {v} exceeds the instance maximum {}",
                        self.max_value
                    )));
                }
                Ok(i64::from(v))
            }
            other => Err(Error::Domain(format!("report {other:?} is not a row"))),
        }
    }

    /// The full type space: every utility row with values in
    /// `0..=max_value`. Note the all-zero row doubles as the opt-out type.
    pub fn all_rows(&self) -> Vec<Vec<u32>> {
        let mut rows = vec![Vec::new()];
        for _ in 0..self.num_outcomes {
            let mut next = Vec::with_capacity(rows.len() * (self.max_value as usize + 1));
            for row in &rows {
                for v in 0..=self.max_value {
                    let mut r = row.clone();
                    r.push(v);
                    next.push(r);
                }
            }
            rows = next;
        }
        rows
    }
}

/// Publicly released payment information: for each listed outcome, the
/// gap `V_winner - V_o` as an exact rational `numer / denom` with
/// `denom = num_outcomes`. The winner itself is not listed (its gap is 0).
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct PaymentInfo {
    /// `(outcome, gap numerator)`, sorted by outcome index.
    pub entries: Vec<(usize, i64)>,
    pub denom: u32,
}

impl PaymentInfo {
    pub fn gap(&self, outcome: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|(o, _)| *o == outcome)
            .map(|(_, num)| *num as f64 / f64::from(self.denom))
    }
}

/// Output of the noisy VCG mechanism.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VcgOutput {
    pub winner: usize,
    pub info: PaymentInfo,
}

/// The noisy election rule: output A iff `#A - #B >= r`. Opt-out reports
/// count in neither tally.
pub fn election_eval(profile: &TypeProfile, r: i64) -> Result<Outcome> {
    Ok(Outcome::Winner(if election_margin(profile)? >= r {
        Candidate::A
    } else {
        Candidate::B
    }))
}

/// `#A - #B` over the participating reports.
pub fn election_margin(profile: &TypeProfile) -> Result<i64> {
    let mut margin = 0i64;
    for p in profile.players() {
        match p {
            PlayerType::Vote(Candidate::A) => margin += 1,
            PlayerType::Vote(Candidate::B) => margin -= 1,
            PlayerType::OptOut => {}
            other => return Err(Error::Domain(format!("report {other:?} is not a vote"))),
        }
    }
    Ok(margin)
}

/// Median of the perturbed histogram: the location index of
/// `median(h + r)`.
pub fn facility_eval(h: &Histogram, r: &[u64]) -> Result<Outcome> {
    if r.len() != h.num_bins() {
        return Err(Error::Domain(format!(
            "noise has {} entries for {} bins",
            r.len(),
            h.num_bins()
        )));
    }
    let z: Vec<u64> = h.counts().iter().zip(r).map(|(a, b)| a + b).collect();
    Ok(Outcome::Location(median_index(&z)?))
}

/// Scaled noisy values `|O| * (sum_j U(theta_j, o) + lambda_o) + o`.
pub(crate) fn scaled_values(
    profile: &TypeProfile,
    lambda: &[i64],
    spec: &VcgSpec,
) -> Result<Vec<i64>> {
    if lambda.len() != spec.num_outcomes {
        return Err(Error::Domain(format!(
            "noise has {} entries for {} outcomes",
            lambda.len(),
            spec.num_outcomes
        )));
    }
    let mut values = Vec::with_capacity(spec.num_outcomes);
    for o in 0..spec.num_outcomes {
        let mut sum = 0i64;
        for p in profile.players() {
            sum += spec.row_value(p, o)?;
        }
        values.push(spec.denom() * (sum + lambda[o]) + o as i64);
    }
    Ok(values)
}

pub(crate) fn argmax(values: &[i64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let _ = values[best];
    best
}

pub(crate) fn output_from_scaled(values: &[i64], spec: &VcgSpec) -> VcgOutput {
    let winner = argmax(values);
    let cut = values[winner] - spec.denom() * i64::from(spec.max_value);
    let mut entries = Vec::new();
    for (o, v) in values.iter().enumerate() {
        if o != winner && *v >= cut {
            entries.push((o, values[winner] - v));
        }
    }
    VcgOutput {
        winner,
        info: PaymentInfo {
            entries,
            denom: spec.num_outcomes as u32,
        },
    }
}

/// Noisy VCG evaluation with explicit noise: compute the scaled values,
/// pick the unique argmax, and release the gaps for every outcome within
/// `max_value` of the winner.
pub fn vcg_eval(profile: &TypeProfile, lambda: &[i64], spec: &VcgSpec) -> Result<VcgOutput> {
    let values = scaled_values(profile, lambda, spec)?;
    Ok(output_from_scaled(&values, spec))
}

/// The payment owed by a player with the given report, computed from the
/// public output alone, as an exact numerator over `info.denom`.
pub fn vcg_payment_scaled(row: &PlayerType, out: &VcgOutput) -> Result<i64> {
    let denom = i64::from(out.info.denom);
    let spec = VcgSpec {
        num_outcomes: out.info.denom as usize,
        max_value: u32::MAX,
    };
    let u_winner = spec.row_value(row, out.winner)?;
    let mut best = 0i64; // the winner's own term is zero
    for (o, gap_num) in &out.info.entries {
        let term = denom * (u_winner - spec.row_value(row, *o)?) - gap_num;
        best = best.max(term);
    }
    Ok(best)
}

/// The payment as a float; exact whenever `denom` is a power of two and
/// within one rounding otherwise.
pub fn vcg_payment(row: &PlayerType, out: &VcgOutput) -> Result<f64> {
    Ok(vcg_payment_scaled(row, out)? as f64 / f64::from(out.info.denom))
}

/// Check the payment identity: the public-information payment equals
/// `max_o W_o - W_winner`, where `W_o` is the scaled value excluding
/// player `i`'s report.
pub fn vcg_payment_identity_check(
    profile: &TypeProfile,
    lambda: &[i64],
    player: usize,
    spec: &VcgSpec,
) -> Result<bool> {
    let values = scaled_values(profile, lambda, spec)?;
    let out = output_from_scaled(&values, spec);
    let from_info = vcg_payment_scaled(&profile.players()[player], &out)?;
    let w = values_excluding(&values, &profile.players()[player], spec)?;
    let from_externality = w[argmax(&w)] - w[out.winner];
    Ok(from_info == from_externality)
}

fn values_excluding(values: &[i64], row: &PlayerType, spec: &VcgSpec) -> Result<Vec<i64>> {
    (0..spec.num_outcomes)
        .map(|o| Ok(values[o] - spec.denom() * spec.row_value(row, o)?))
        .collect()
}

/// Expected externality of `player` under a finite-support prior over
/// profiles, averaged over the truncated noise window; the half-width
/// accounts for the worst the discarded tail could contribute.
pub fn expected_externality_payment(
    prior: &[(TypeProfile, f64)],
    player: usize,
    eps: f64,
    window: &TruncationWindow,
    spec: &VcgSpec,
) -> Result<crate::distributions::Interval> {
    if prior.is_empty() {
        return Err(Error::Domain("empty prior support".into()));
    }
    if spec.num_outcomes > 16 {
        return Err(Error::Resource(format!(
            "noise enumeration over {} outcomes is out of scope",
            spec.num_outcomes
        )));
    }
    let total_weight: f64 = prior.iter().map(|(_, w)| w).sum();
    if (total_weight - 1.0).abs() > 1e-9 || prior.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::Domain("prior weights must be a distribution".into()));
    }
    let noise = NoiseSpec::vcg(eps, spec.max_value, spec.num_outcomes)?;
    let k = window.bound as i64;
    check_budget(-k, k, spec.num_outcomes, budget_from_env())?;
    let weights: Vec<f64> = (-k..=k).map(|v| noise.pmf(v)).collect();

    let mut value = 0.0;
    let mut max_players = 1usize;
    for (profile, p_theta) in prior {
        if player >= profile.len() {
            return Err(Error::Domain(format!(
                "player {player} outside a profile of {} players",
                profile.len()
            )));
        }
        max_players = max_players.max(profile.len());
        // per-outcome totals with and without the player
        let zero_noise = vec![0i64; spec.num_outcomes];
        let base = scaled_values(profile, &zero_noise, spec)?;
        let base_excl = values_excluding(&base, &profile.players()[player], spec)?;
        // integer utility sums of the other players (tie-break stripped)
        let others: Vec<i64> = (0..spec.num_outcomes)
            .map(|o| (base_excl[o] - o as i64) / spec.denom())
            .collect();
        let mut acc = 0.0;
        let mut comp = 0.0;
        for_each_weighted_point(-k, k, spec.num_outcomes, &weights, |lambda, w| {
            let mut v = [0i64; 16];
            let v = &mut v[..spec.num_outcomes];
            for o in 0..spec.num_outcomes {
                v[o] = base[o] + spec.denom() * lambda[o];
            }
            let winner = argmax(v);
            for o in 0..spec.num_outcomes {
                v[o] = base_excl[o] + spec.denom() * lambda[o];
            }
            let without = argmax(v);
            let ext = (others[without] - others[winner]) as f64;
            let term = w * ext;
            let t = acc + term;
            comp += if acc.abs() >= term.abs() {
                (acc - t) + term
            } else {
                (term - t) + acc
            };
            acc = t;
        });
        value += p_theta * (acc + comp);
    }
    let max_ext = ((max_players - 1) as f64) * f64::from(spec.max_value);
    Ok(crate::distributions::Interval {
        value,
        half_width: window.tail_mass * max_ext,
    })
}

/// A mechanism family bound to its instance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mechanism {
    Election,
    Facility { locations: Vec<f64> },
    Vcg(VcgSpec),
}

/// A sampled mechanism output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MechOutput {
    Outcome(Outcome),
    Vcg(VcgOutput),
}

impl Mechanism {
    /// Sampled execution: the election draws one two-sided value, the
    /// facility draws one one-sided value per location, and the VCG
    /// draws one two-sided value per outcome, all from the seeded stream
    /// in a fixed order.
    pub fn run(&self, profile: &TypeProfile, eps: f64, seed: u64) -> Result<MechOutput> {
        let mut rng = RngStream::new(seed);
        self.run_with(profile, eps, &mut rng)
    }

    pub fn run_with(
        &self,
        profile: &TypeProfile,
        eps: f64,
        rng: &mut RngStream,
    ) -> Result<MechOutput> {
        match self {
            Mechanism::Election => {
                let r = NoiseSpec::election(eps)?.sample(rng);
                Ok(MechOutput::Outcome(election_eval(profile, r)?))
            }
            Mechanism::Facility { locations } => {
                validate_locations(locations)?;
                let h = build_histogram(profile, locations.len())?;
                let noise = NoiseSpec::facility(eps)?;
                let r: Vec<u64> = (0..locations.len())
                    .map(|_| noise.sample(rng) as u64)
                    .collect();
                Ok(MechOutput::Outcome(facility_eval(&h, &r)?))
            }
            Mechanism::Vcg(spec) => {
                let noise = NoiseSpec::vcg(eps, spec.max_value, spec.num_outcomes)?;
                let lambda: Vec<i64> = (0..spec.num_outcomes).map(|_| noise.sample(rng)).collect();
                Ok(MechOutput::Vcg(vcg_eval(profile, &lambda, spec)?))
            }
        }
    }
}

/// Enumeration budget, with the documented environment override.
pub fn budget_from_env() -> u64 {
    std::env::var("PRIVMECH_BUDGET")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

pub const DEFAULT_BUDGET: u64 = 200_000_000;

pub(crate) fn check_budget(lo: i64, hi: i64, dims: usize, budget: u64) -> Result<()> {
    let vol = lattice_volume(lo, hi, dims);
    if vol > budget {
        return Err(Error::Resource(format!(
            "window of {vol} points exceeds the budget of {budget}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn winner(profile: &str, r: i64) -> Candidate {
        match election_eval(&TypeProfile::votes(profile).unwrap(), r).unwrap() {
            Outcome::Winner(c) => c,
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn election_rule_applications() {
        assert_eq!(winner("AAB", 1), Candidate::A);
        assert_eq!(winner("AAB", 2), Candidate::B);
        assert_eq!(winner("", 0), Candidate::A); // ties favor A
        assert_eq!(winner("BB", -3), Candidate::A); // -2 >= -3
        assert_eq!(winner("A_B_", 0), Candidate::A); // opt-outs in neither tally
    }

    #[test]
    fn election_rejects_foreign_reports() {
        let p = TypeProfile::locations(&[Some(0)]);
        assert!(election_eval(&p, 0).is_err());
    }

    #[test]
    fn election_is_monotone_in_votes() {
        // switching one report from B to A never moves the outcome from A
        // to B at fixed r
        for n in 1..=5usize {
            for bits in 0..(1u32 << n) {
                let labels: String = (0..n)
                    .map(|i| if bits >> i & 1 == 1 { 'A' } else { 'B' })
                    .collect();
                let p = TypeProfile::votes(&labels).unwrap();
                for i in 0..n {
                    if p.players()[i] == PlayerType::Vote(Candidate::B) {
                        let q = p.with_report(i, PlayerType::Vote(Candidate::A));
                        for r in -7i64..=7 {
                            let before = election_eval(&p, r).unwrap();
                            let after = election_eval(&q, r).unwrap();
                            if before == Outcome::Winner(Candidate::A) {
                                assert_eq!(after, Outcome::Winner(Candidate::A));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn facility_median_of_perturbed_histogram() {
        let h = Histogram(vec![2, 1]);
        assert_eq!(facility_eval(&h, &[0, 0]).unwrap(), Outcome::Location(0));
        let h = Histogram(vec![1, 2]);
        // Med((3, 2)) = 0 by the prefix/suffix check
        assert_eq!(facility_eval(&h, &[2, 0]).unwrap(), Outcome::Location(0));
        let h = Histogram(vec![0, 0]);
        assert_eq!(facility_eval(&h, &[0, 5]).unwrap(), Outcome::Location(1));
        assert!(facility_eval(&h, &[0, 0, 0]).is_err());
    }

    fn two_player_instance() -> (TypeProfile, VcgSpec) {
        (
            TypeProfile::rows(&[vec![1, 0], vec![0, 1]]),
            VcgSpec::new(2, 1).unwrap(),
        )
    }

    #[test]
    fn vcg_eval_direct_examples() {
        let (profile, spec) = two_player_instance();
        // V = (1, 1.5): winner 1, info lists outcome 0 with gap 1/2
        let out = vcg_eval(&profile, &[0, 0], &spec).unwrap();
        assert_eq!(out.winner, 1);
        assert_eq!(out.info.entries, vec![(0, 1)]);
        assert_eq!(out.info.gap(0), Some(0.5));

        // single player: V = (1, 0.5), winner 0, info lists outcome 1
        let solo = TypeProfile::rows(&[vec![1, 0]]);
        let out = vcg_eval(&solo, &[0, 0], &spec).unwrap();
        assert_eq!(out.winner, 0);
        assert_eq!(out.info.entries, vec![(1, 1)]);

        // all-zero rows: the tie-break picks the largest index
        let zeros = TypeProfile::rows(&[vec![0, 0], vec![0, 0]]);
        let out = vcg_eval(&zeros, &[0, 0], &spec).unwrap();
        assert_eq!(out.winner, 1);
    }

    #[test]
    fn vcg_payments_from_public_information() {
        let (profile, spec) = two_player_instance();
        let out = vcg_eval(&profile, &[0, 0], &spec).unwrap();
        // player 0 prefers the loser: max(0, (0 - 1) - 0.5) = 0
        assert_eq!(vcg_payment(&profile.players()[0], &out).unwrap(), 0.0);
        // player 1 swung the outcome: (1 - 0) - 0.5 = 0.5
        assert_eq!(vcg_payment(&profile.players()[1], &out).unwrap(), 0.5);
        // a constant row owes nothing
        assert_eq!(
            vcg_payment(&PlayerType::Row(vec![1, 1]), &out).unwrap(),
            0.0
        );
        assert_eq!(vcg_payment(&PlayerType::OptOut, &out).unwrap(), 0.0);
    }

    #[test]
    fn payment_identity_on_the_worked_instance() {
        let (profile, spec) = two_player_instance();
        for i in 0..2 {
            assert!(vcg_payment_identity_check(&profile, &[0, 0], i, &spec).unwrap());
        }
    }

    #[test]
    fn payment_identity_exhaustive_single_player() {
        // every single-player instance with M <= 2, |O| <= 3, lambda in [-3, 3]^O
        for num_outcomes in 1..=3usize {
            for max_value in 1..=2u32 {
                let spec = VcgSpec::new(num_outcomes, max_value).unwrap();
                for row in spec.all_rows() {
                    let profile = TypeProfile::rows(&[row]);
                    let mut lambda = vec![-3i64; num_outcomes];
                    'lattice: loop {
                        assert!(
                            vcg_payment_identity_check(&profile, &lambda, 0, &spec).unwrap()
                        );
                        let mut d = 0;
                        loop {
                            if d == num_outcomes {
                                break 'lattice;
                            }
                            lambda[d] += 1;
                            if lambda[d] <= 3 {
                                break;
                            }
                            lambda[d] = -3;
                            d += 1;
                        }
                    }
                }
            }
        }
    }

    /// Winner uniqueness, payment nonnegativity, the zero-payment
    /// characterization, the payment identity, and invariance of the
    /// payment under restriction to the released info, exhaustively over
    /// |O| <= 4, M <= 2, n <= 2, lambda in [-3, 3]^O.
    #[test]
    fn vcg_exhaustive_structural_invariants() {
        for num_outcomes in 2..=4usize {
            for max_value in 1..=2u32 {
                let spec = VcgSpec::new(num_outcomes, max_value).unwrap();
                let rows = spec.all_rows();
                // profiles of size 1 and 2
                let mut profiles: Vec<TypeProfile> = Vec::new();
                for r in &rows {
                    profiles.push(TypeProfile::rows(std::slice::from_ref(r)));
                }
                for r1 in &rows {
                    for r2 in &rows {
                        profiles.push(TypeProfile::rows(&[r1.clone(), r2.clone()]));
                    }
                }
                let cap = 3i64;
                for profile in &profiles {
                    let mut lambda = vec![-cap; num_outcomes];
                    'lattice: loop {
                        let values = scaled_values(profile, &lambda, &spec).unwrap();
                        let out = output_from_scaled(&values, &spec);
                        // uniqueness: scaled values are pairwise distinct
                        let mut sorted = values.clone();
                        sorted.sort_unstable();
                        sorted.dedup();
                        assert_eq!(sorted.len(), values.len(), "tie in {values:?}");
                        for (i, row) in profile.players().iter().enumerate() {
                            let p = vcg_payment_scaled(row, &out).unwrap();
                            assert!(p >= 0);
                            let w = values_excluding(&values, row, &spec).unwrap();
                            let without = argmax(&w);
                            assert_eq!(p == 0, without == out.winner);
                            assert_eq!(p, w[without] - w[out.winner]);
                            // restricting the max to released outcomes loses nothing
                            let mut full = 0i64;
                            for o in 0..num_outcomes {
                                let term = spec.denom()
                                    * (spec.row_value(row, out.winner).unwrap()
                                        - spec.row_value(row, o).unwrap())
                                    - (values[out.winner] - values[o]);
                                full = full.max(term);
                            }
                            assert_eq!(p, full, "profile {profile:?} player {i}");
                        }
                        // gaps lie in [0, M * |O|] by the inclusion rule
                        for (_, g) in &out.info.entries {
                            assert!(*g >= 0 && *g <= spec.denom() * i64::from(max_value));
                        }
                        let mut d = 0;
                        loop {
                            if d == num_outcomes {
                                break 'lattice;
                            }
                            lambda[d] += 1;
                            if lambda[d] <= cap {
                                break;
                            }
                            lambda[d] = -cap;
                            d += 1;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn expected_externality_point_mass_prior() {
        let (profile, spec) = two_player_instance();
        let noise = NoiseSpec::vcg(1.0, 1, 2).unwrap();
        let window = noise.window_for_slack(2, 1e-8).unwrap();
        let prior = vec![(profile.clone(), 1.0)];
        let got = expected_externality_payment(&prior, 1, 1.0, &window, &spec).unwrap();

        // independent brute-force double sum over the same window
        let k = window.bound as i64;
        let mut expect = 0.0;
        for l0 in -k..=k {
            for l1 in -k..=k {
                let w = noise.pmf(l0) * noise.pmf(l1);
                // player 1 excluded: other player has row (1, 0)
                let v = [2 * (1 + l0), 2 * (1 + l1) + 1];
                let wo = [2 * (1 + l0), 2 * l1 + 1];
                let o_star = if v[0] >= v[1] { 0 } else { 1 };
                let o_minus = if wo[0] >= wo[1] { 0 } else { 1 };
                let others = [1.0, 0.0];
                expect += w * (others[o_minus] - others[o_star]);
            }
        }
        assert!((got.value - expect).abs() < 1e-12);
        assert!(got.half_width <= 1e-8);
    }

    #[test]
    fn expected_externality_of_a_pivotal_nobody_is_zero() {
        // a player whose row never changes the argmax owes nothing
        let spec = VcgSpec::new(2, 1).unwrap();
        let profile = TypeProfile::rows(&[vec![1, 1], vec![1, 0]]);
        let window = NoiseSpec::vcg(0.5, 1, 2)
            .unwrap()
            .window_for_slack(2, 1e-9)
            .unwrap();
        let prior = vec![(profile, 1.0)];
        let got = expected_externality_payment(&prior, 0, 0.5, &window, &spec).unwrap();
        assert!(got.value.abs() <= got.half_width + 1e-15);
    }

    #[test]
    fn expected_externality_two_point_prior_matches_oracle() {
        let spec = VcgSpec::new(2, 1).unwrap();
        let noise = NoiseSpec::vcg(1.0, 1, 2).unwrap();
        let window = noise.window_for_slack(2, 1e-8).unwrap();
        let p1 = TypeProfile::rows(&[vec![1, 0], vec![0, 1]]);
        let p2 = TypeProfile::rows(&[vec![1, 0], vec![1, 0]]);
        let prior = vec![(p1.clone(), 0.25), (p2.clone(), 0.75)];
        let got = expected_externality_payment(&prior, 0, 1.0, &window, &spec).unwrap();

        let k = window.bound as i64;
        let mut expect = 0.0;
        for (profile, pw) in [(p1, 0.25f64), (p2, 0.75f64)] {
            for l0 in -k..=k {
                for l1 in -k..=k {
                    let w = noise.pmf(l0) * noise.pmf(l1);
                    let lam = [l0, l1];
                    let full = vcg_eval(&profile, &lam, &spec).unwrap();
                    let mut dropped = profile.clone();
                    dropped.0[0] = PlayerType::OptOut;
                    let without = vcg_eval(&dropped, &lam, &spec).unwrap();
                    let mut ext = 0.0;
                    for (j, row) in profile.players().iter().enumerate() {
                        if j != 0 {
                            ext += spec.row_value(row, without.winner).unwrap() as f64
                                - spec.row_value(row, full.winner).unwrap() as f64;
                        }
                    }
                    expect += pw * w * ext;
                }
            }
        }
        assert!((got.value - expect).abs() < 1e-12);
    }

    #[test]
    fn expected_externality_rejects_bad_priors() {
        let spec = VcgSpec::new(2, 1).unwrap();
        let window = TruncationWindow {
            bound: 3,
            tail_mass: 0.1,
        };
        assert!(expected_externality_payment(&[], 0, 1.0, &window, &spec).is_err());
        let p = TypeProfile::rows(&[vec![1, 0]]);
        let bad = vec![(p, 0.5)];
        assert!(expected_externality_payment(&bad, 0, 1.0, &window, &spec).is_err());
    }

    #[test]
    fn run_is_deterministic_and_matches_replay() {
        let profile = TypeProfile::votes("AAB").unwrap();
        let a = Mechanism::Election.run(&profile, 1.0, 7).unwrap();
        let b = Mechanism::Election.run(&profile, 1.0, 7).unwrap();
        assert_eq!(a, b);

        let fac = Mechanism::Facility {
            locations: vec![0.1, 0.5, 0.9],
        };
        let p = TypeProfile::locations(&[Some(0), Some(2), Some(2)]);
        assert_eq!(fac.run(&p, 0.5, 3).unwrap(), fac.run(&p, 0.5, 3).unwrap());

        let vcg = Mechanism::Vcg(VcgSpec::new(2, 1).unwrap());
        let p = TypeProfile::rows(&[vec![1, 0], vec![0, 1]]);
        assert_eq!(vcg.run(&p, 1.0, 11).unwrap(), vcg.run(&p, 1.0, 11).unwrap());
    }

    #[test]
    fn run_concentrates_on_majority_for_large_eps() {
        // with eps = 50 the noise is 0 except with probability ~1e-22
        let profile = TypeProfile::votes("AAB").unwrap();
        for seed in 0..200 {
            let out = Mechanism::Election.run(&profile, 50.0, seed).unwrap();
            assert_eq!(out, MechOutput::Outcome(Outcome::Winner(Candidate::A)));
        }
        // tie goes to A
        let tie = TypeProfile::votes("AB").unwrap();
        for seed in 0..200 {
            let out = Mechanism::Election.run(&tie, 50.0, seed).unwrap();
            assert_eq!(out, MechOutput::Outcome(Outcome::Winner(Candidate::A)));
        }
    }
}
