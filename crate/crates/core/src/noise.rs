//! Exact integer-noise distributions: one-sided and two-sided geometric
//! (discrete Laplace), with log-space mass functions, closed-form CDFs,
//! certified truncation windows, and reproducible seeded samplers.
//!
//! A spec is parameterized by its per-step decay `alpha` in (0, 1):
//!
//! - two-sided: `Pr[k] = alpha^|k| * (1 - alpha) / (1 + alpha)` on all
//!   integers (the election uses `alpha = e^-eps`, the noisy VCG uses
//!   `alpha = e^(-eps / (M * |O|))`);
//! - one-sided: `Pr[k] = alpha^k * (1 - alpha)` on the nonnegative
//!   integers (the facility mechanism uses `alpha = e^(-eps/2)`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    TwoSided,
    OneSidedNonnegative,
}

/// An exact geometric integer distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    side: Side,
    alpha: f64,
    ln_alpha: f64,
    log_norm: f64,
}

impl NoiseSpec {
    fn new(side: Side, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("decay {alpha} outside (0, 1)")));
        }
        let log_norm = match side {
            // ln((1 - alpha) / (1 + alpha))
            Side::TwoSided => (-alpha).ln_1p() - alpha.ln_1p(),
            // ln(1 - alpha)
            Side::OneSidedNonnegative => (-alpha).ln_1p(),
        };
        Ok(NoiseSpec {
            side,
            alpha,
            ln_alpha: alpha.ln(),
            log_norm,
        })
    }

    pub fn two_sided(alpha: f64) -> Result<Self> {
        Self::new(Side::TwoSided, alpha)
    }

    pub fn one_sided(alpha: f64) -> Result<Self> {
        Self::new(Side::OneSidedNonnegative, alpha)
    }

    /// Election noise: two-sided with per-step decay `e^-eps`.
    pub fn election(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Self::two_sided((-eps).exp())
    }

    /// Facility noise: one-sided with per-step decay `e^(-eps/2)`.
    pub fn facility(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Self::one_sided((-eps / 2.0).exp())
    }

    /// Noisy-VCG value noise: two-sided, decay `e^(-eps / (max_value * num_outcomes))`.
    pub fn vcg(eps: f64, max_value: u32, num_outcomes: usize) -> Result<Self> {
        check_eps(eps)?;
        if max_value == 0 || num_outcomes == 0 {
            return Err(Error::Domain(
                "VCG noise needs max_value >= 1 and a nonempty outcome set".into(),
            ));
        }
        Self::two_sided((-eps / (f64::from(max_value) * num_outcomes as f64)).exp())
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ln alpha`, the log-space mass drop per unit step away from zero.
    pub fn ln_alpha(&self) -> f64 {
        self.ln_alpha
    }

    /// Log-probability of drawing exactly `k`.
    pub fn log_pmf(&self, k: i64) -> f64 {
        match self.side {
            Side::TwoSided => (k.unsigned_abs() as f64).mul_add(self.ln_alpha, self.log_norm),
            Side::OneSidedNonnegative => {
                if k < 0 {
                    f64::NEG_INFINITY
                } else {
                    (k as f64).mul_add(self.ln_alpha, self.log_norm)
                }
            }
        }
    }

    pub fn pmf(&self, k: i64) -> f64 {
        self.log_pmf(k).exp()
    }

    /// `Pr[noise <= k]` in closed form.
    pub fn cdf(&self, k: i64) -> f64 {
        let a = self.alpha;
        match self.side {
            Side::TwoSided => {
                if k < 0 {
                    pow(a, -k) / (1.0 + a)
                } else {
                    1.0 - pow(a, k + 1) / (1.0 + a)
                }
            }
            Side::OneSidedNonnegative => {
                if k < 0 {
                    0.0
                } else {
                    1.0 - pow(a, k + 1)
                }
            }
        }
    }

    /// Exact probability that a single draw leaves the window
    /// (`[-k, k]` two-sided, `[0, k]` one-sided).
    pub fn single_coordinate_tail(&self, k: u64) -> f64 {
        let a = self.alpha;
        match self.side {
            Side::TwoSided => 2.0 * pow(a, k as i64 + 1) / (1.0 + a),
            Side::OneSidedNonnegative => pow(a, k as i64 + 1),
        }
    }

    /// Certified window for `coordinates` independent draws: the tail mass
    /// is the union bound `coordinates * single_coordinate_tail(k)`.
    pub fn tail_bound(&self, k: u64, coordinates: u32) -> TruncationWindow {
        TruncationWindow {
            bound: k,
            tail_mass: f64::from(coordinates.max(1)) * self.single_coordinate_tail(k),
        }
    }

    /// Smallest window whose union-bound tail mass is at most `max_tail`.
    pub fn window_for_slack(&self, coordinates: u32, max_tail: f64) -> Result<TruncationWindow> {
        if !(max_tail > 0.0 && max_tail < 1.0) {
            return Err(Error::Domain(format!(
                "tail target {max_tail} outside (0, 1)"
            )));
        }
        let per_coord = max_tail / f64::from(coordinates.max(1));
        let base = match self.side {
            Side::TwoSided => per_coord * (1.0 + self.alpha) / 2.0,
            Side::OneSidedNonnegative => per_coord,
        };
        // alpha^(k+1) <= base
        let mut k = (base.ln() / self.ln_alpha - 1.0).ceil().max(0.0) as u64;
        while self.tail_bound(k, coordinates).tail_mass > max_tail {
            k += 1;
        }
        while k > 0 && self.tail_bound(k - 1, coordinates).tail_mass <= max_tail {
            k -= 1;
        }
        Ok(self.tail_bound(k, coordinates))
    }

    /// Integer support of a window for this spec.
    pub fn window_range(&self, window: &TruncationWindow) -> std::ops::RangeInclusive<i64> {
        let k = window.bound as i64;
        match self.side {
            Side::TwoSided => -k..=k,
            Side::OneSidedNonnegative => 0..=k,
        }
    }

    /// One draw. Deterministic given the stream state; the two-sided case
    /// handles the zero atom explicitly and then draws magnitude and sign,
    /// so there is no rejection loop.
    pub fn sample(&self, rng: &mut RngStream) -> i64 {
        let a = self.alpha;
        match self.side {
            Side::OneSidedNonnegative => geometric(rng, self.ln_alpha),
            Side::TwoSided => {
                let u = rng.uniform();
                if u < (1.0 - a) / (1.0 + a) {
                    return 0;
                }
                let magnitude = 1 + geometric(rng, self.ln_alpha);
                if rng.uniform() < 0.5 {
                    -magnitude
                } else {
                    magnitude
                }
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("privacy parameter {eps} must be > 0")));
    }
    Ok(())
}

/// `Pr[G = j] = alpha^j (1 - alpha)` on j >= 0, by inversion.
fn geometric(rng: &mut RngStream, ln_alpha: f64) -> i64 {
    let u = rng.uniform_open(); // (0, 1]
    (u.ln() / ln_alpha).floor() as i64
}

fn pow(alpha: f64, k: i64) -> f64 {
    debug_assert!(k >= 0);
    if k <= i64::from(i32::MAX) {
        alpha.powi(k as i32)
    } else {
        alpha.powf(k as f64)
    }
}

/// A certified truncation window: with probability at least
/// `1 - tail_mass`, every coordinate of the noise vector stays inside
/// the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub bound: u64,
    pub tail_mass: f64,
}

/// A seeded, splittable random stream. Substreams with distinct indices
/// are disjoint and reproducible, so parallel workers can be assigned
/// independent streams from one seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream_of(seed, 0)
    }

    pub fn substream_of(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, rng }
    }

    /// A fresh stream with the same seed and the given stream index,
    /// independent of this stream's position.
    pub fn substream(&self, stream: u64) -> Self {
        Self::substream_of(self.seed, stream)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - self.rng.gen::<f64>()
    }

    /// Uniform in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        self.rng.gen_range(0..bound)
    }
}

/// Result of a chi-square goodness-of-fit test of sampled draws against
/// the exact mass function.
#[derive(Debug, Clone, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub threshold: f64,
    pub dof: usize,
    pub pass: bool,
}

/// Pearson chi-square test of `draws` against `spec` at the given
/// significance level. Cells with expected count below 5 are pooled into
/// the adjacent tail bins.
pub fn chi_square_gof(spec: &NoiseSpec, draws: &[i64], significance: f64) -> Result<GofResult> {
    if draws.is_empty() {
        return Err(Error::Domain("no draws".into()));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Domain(format!(
            "significance {significance} outside (0, 1)"
        )));
    }
    let n = draws.len() as f64;
    // Contiguous cell range where each cell alone has expected count >= 5.
    // The pmf is unimodal with its peak at 0, so the range is an interval.
    let min_exp = 5.0;
    let mut lo = 0i64;
    while n * spec.pmf(lo - 1) >= min_exp {
        lo -= 1;
    }
    let mut hi = 0i64;
    while n * spec.pmf(hi + 1) >= min_exp {
        hi += 1;
    }
    if n * spec.pmf(0) < min_exp {
        return Err(Error::Domain(
            "too few draws for a goodness-of-fit test".into(),
        ));
    }

    // Observed counts: interior cells, plus pooled tails merged into the
    // edge cells (expected for the merged bins uses the exact CDF).
    let cells = (hi - lo + 1) as usize;
    let mut observed = vec![0u64; cells];
    for &d in draws {
        let idx = d.clamp(lo, hi) - lo;
        observed[idx as usize] += 1;
    }
    let mut statistic = 0.0;
    for (i, &obs) in observed.iter().enumerate() {
        let k = lo + i as i64;
        let expected = if k == lo {
            n * spec.cdf(lo)
        } else if k == hi {
            n * (1.0 - spec.cdf(hi - 1))
        } else {
            n * spec.pmf(k)
        };
        let diff = obs as f64 - expected;
        statistic += diff * diff / expected;
    }
    let dof = cells.saturating_sub(1).max(1);
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| Error::Domain(format!("chi-square setup failed: {e}")))?;
    let threshold = chi.inverse_cdf(1.0 - significance);
    Ok(GofResult {
        statistic,
        threshold,
        dof,
        pass: statistic <= threshold,
    })
}
