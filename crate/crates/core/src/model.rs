//! Domain types shared by all mechanisms: reports, profiles, outcomes,
//! histograms, utility specifications, and privacy-bound functions.
//!
//! Everything here is immutable after construction and all operations are
//! pure, so values can be shared freely across worker threads.
//!
//! Locations and outcome sets are indexed from 0 throughout. The opt-out
//! report [`PlayerType::OptOut`] models non-participation: it is excluded
//! from election tallies and histograms, and behaves as an all-zero
//! utility row in the social-choice setting.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The two election candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Candidate {
    A,
    B,
}

impl Candidate {
    pub fn other(self) -> Self {
        match self {
            Candidate::A => Candidate::B,
            Candidate::B => Candidate::A,
        }
    }
}

impl std::fmt::Display for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Candidate::A => write!(f, "A"),
            Candidate::B => write!(f, "B"),
        }
    }
}

/// A single player's report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlayerType {
    /// Election label.
    Vote(Candidate),
    /// Index into the instance's sorted location list.
    Location(usize),
    /// Utility row: one value per outcome, each in `0..=max_value`.
    Row(Vec<u32>),
    /// Non-participation.
    OptOut,
}

impl PlayerType {
    pub fn is_opt_out(&self) -> bool {
        matches!(self, PlayerType::OptOut)
    }
}

/// An ordered list of player reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeProfile(pub Vec<PlayerType>);

impl TypeProfile {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn players(&self) -> &[PlayerType] {
        &self.0
    }

    /// Election profile from a label string, e.g. `"AAB_"` where `_` opts out.
    pub fn votes(labels: &str) -> Result<Self> {
        labels
            .chars()
            .map(|c| match c {
                'A' | 'a' => Ok(PlayerType::Vote(Candidate::A)),
                'B' | 'b' => Ok(PlayerType::Vote(Candidate::B)),
                '_' => Ok(PlayerType::OptOut),
                other => Err(Error::Domain(format!("unknown vote label {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(TypeProfile)
    }

    /// Facility profile from location indices; `None` opts out.
    pub fn locations(reports: &[Option<usize>]) -> Self {
        TypeProfile(
            reports
                .iter()
                .map(|r| match r {
                    Some(j) => PlayerType::Location(*j),
                    None => PlayerType::OptOut,
                })
                .collect(),
        )
    }

    /// Social-choice profile from utility rows.
    pub fn rows(rows: &[Vec<u32>]) -> Self {
        TypeProfile(rows.iter().cloned().map(PlayerType::Row).collect())
    }

    /// Profile with player `i` replaced by `report`.
    pub fn with_report(&self, i: usize, report: PlayerType) -> Self {
        let mut players = self.0.clone();
        players[i] = report;
        TypeProfile(players)
    }
}

/// A mechanism output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Election winner.
    Winner(Candidate),
    /// Index into the instance's sorted location list.
    Location(usize),
    /// Outcome index in `0..num_outcomes`.
    Index(usize),
}

/// Counts of non-opt-out reports per location.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Histogram(pub Vec<u64>);

impl Histogram {
    pub fn num_bins(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }
}

/// Histogram of reported location frequencies; opt-out reports are excluded.
pub fn build_histogram(profile: &TypeProfile, num_bins: usize) -> Result<Histogram> {
    let mut counts = vec![0u64; num_bins];
    for p in profile.players() {
        match p {
            PlayerType::Location(j) if *j < num_bins => counts[*j] += 1,
            PlayerType::Location(j) => {
                return Err(Error::Domain(format!(
                    "location index {j} out of range for {num_bins} bins"
                )))
            }
            PlayerType::OptOut => {}
            other => {
                return Err(Error::Domain(format!(
                    "report {other:?} is not a location"
                )))
            }
        }
    }
    Ok(Histogram(counts))
}

/// Minimum index `k` such that the prefix sum through `k` is at least the
/// suffix sum after `k`. For an all-zero input this is 0 (the inequality
/// `0 >= 0` already holds at the first index).
pub fn median_index(z: &[u64]) -> Result<usize> {
    if z.is_empty() {
        return Err(Error::Domain("median of an empty vector".into()));
    }
    let total: u64 = z.iter().sum();
    let mut prefix = 0u64;
    for (k, v) in z.iter().enumerate() {
        prefix += v;
        // prefix >= total - prefix, kept in integers
        if 2 * prefix >= total {
            return Ok(k);
        }
    }
    unreachable!("prefix reaches the total at the last index");
}

/// A privacy-bound function `F` mapping worst-case output-probability
/// ratios `x >= 1` to utility magnitudes, with `F(1) = 0` and `F`
/// nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PrivacyModel {
    /// `F(x) = nu * ln(x)`.
    LogLinear { nu: f64 },
    /// Piecewise-linear interpolation of a finite monotone table of
    /// `(x, F(x))` points on `[1, inf)`; flat beyond the last point.
    Table { points: Vec<(f64, f64)> },
}

impl PrivacyModel {
    pub fn log_linear(nu: f64) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::Domain(format!("privacy coefficient {nu} < 0")));
        }
        Ok(PrivacyModel::LogLinear { nu })
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("empty privacy table".into()));
        }
        if points[0].0 != 1.0 || points[0].1 != 0.0 {
            return Err(Error::Domain("privacy table must start at (1, 0)".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 >= w[0].1) {
                return Err(Error::Domain(
                    "privacy table must be strictly increasing in x and nondecreasing in F"
                        .into(),
                ));
            }
        }
        Ok(PrivacyModel::Table { points })
    }

    /// Evaluate `F(x)` for `x >= 1`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 1.0) {
            return Err(Error::Domain(format!("privacy bound argument {x} < 1")));
        }
        match self {
            PrivacyModel::LogLinear { nu } => Ok(nu * x.ln()),
            PrivacyModel::Table { points } => {
                let last = points[points.len() - 1];
                if x >= last.0 {
                    return Ok(last.1);
                }
                let hi = points.partition_point(|p| p.0 <= x);
                // points[hi-1].0 <= x < points[hi].0
                let (x0, f0) = points[hi - 1];
                let (x1, f1) = points[hi];
                if x == x0 {
                    return Ok(f0);
                }
                Ok(f0 + (f1 - f0) * (x - x0) / (x1 - x0))
            }
        }
    }

    /// `F(e^eps)`, the per-outcome privacy-utility bound at privacy level `eps`.
    pub fn bound_at_eps(&self, eps: f64) -> Result<f64> {
        self.eval(eps.exp())
    }
}

/// Outcome-utility specification for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilitySpec {
    /// Voters value their preferred candidate winning by `gap > 0` over
    /// the other candidate.
    Election { gap: f64 },
    /// Players prefer the facility close to them: `-|l_j - o|` over the
    /// given sorted location list.
    Facility { locations: Vec<f64> },
    /// Utility rows with values in `0..=max_value` over
    /// `0..num_outcomes`.
    Table { num_outcomes: usize, max_value: u32 },
}

impl UtilitySpec {
    pub fn election(gap: f64) -> Result<Self> {
        if !(gap > 0.0) {
            return Err(Error::Domain(format!("election gap {gap} must be > 0")));
        }
        Ok(UtilitySpec::Election { gap })
    }

    pub fn facility(locations: Vec<f64>) -> Result<Self> {
        validate_locations(&locations)?;
        Ok(UtilitySpec::Facility { locations })
    }

    pub fn table(num_outcomes: usize, max_value: u32) -> Result<Self> {
        if num_outcomes == 0 {
            return Err(Error::Domain("empty outcome set".into()));
        }
        Ok(UtilitySpec::Table {
            num_outcomes,
            max_value,
        })
    }

    /// The outcome utility `Uo(t, o)`. Opt-out reports have utility 0 on
    /// every outcome.
    pub fn outcome_utility(&self, t: &PlayerType, o: &Outcome) -> Result<f64> {
        if t.is_opt_out() {
            return Ok(0.0);
        }
        match (self, t, o) {
            (UtilitySpec::Election { gap }, PlayerType::Vote(c), Outcome::Winner(w)) => {
                Ok(if c == w { *gap } else { 0.0 })
            }
            (UtilitySpec::Facility { locations }, PlayerType::Location(j), Outcome::Location(k)) => {
                let lj = *locations.get(*j).ok_or_else(|| {
                    Error::Domain(format!("location index {j} outside the instance"))
                })?;
                let lk = *locations.get(*k).ok_or_else(|| {
                    Error::Domain(format!("outcome location {k} outside the instance"))
                })?;
                Ok(-(lj - lk).abs())
            }
            (
                UtilitySpec::Table {
                    num_outcomes,
                    max_value,
                },
                PlayerType::Row(row),
                Outcome::Index(i),
            ) => {
                if row.len() != *num_outcomes {
                    return Err(Error::Domain(format!(
                        "row has {} entries, instance has {num_outcomes} outcomes",
                        row.len()
                    )));
                }
                let v = *row
                    .get(*i)
                    .ok_or_else(|| Error::Domain(format!("outcome {i} outside the instance")))?;
                if v > *max_value {
                    return Err(Error::Domain(format!(
                        "utility {v} exceeds the instance maximum {max_value}"
                    )));
                }
                Ok(f64::from(v))
            }
            _ => Err(Error::Domain(format!(
                "report {t:?} / outcome {o:?} do not belong to spec {self:?}"
            ))),
        }
    }
}

pub(crate) fn validate_locations(locations: &[f64]) -> Result<()> {
    if locations.is_empty() {
        return Err(Error::Domain("empty location list".into()));
    }
    for l in locations {
        if !(0.0..=1.0).contains(l) {
            return Err(Error::Domain(format!("location {l} outside [0, 1]")));
        }
    }
    for w in locations.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain(
                "locations must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}
