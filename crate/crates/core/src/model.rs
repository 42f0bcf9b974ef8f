//! Decision model of a simulated player: value-based demand, norm-based
//! demand, their weighted blend, and the responder's acceptance threshold.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Default pie size.
pub const DEFAULT_PIE: u32 = 1000;

/// Mean of the distribution human round-one demands follow.
pub const EMPIRICAL_DEMAND_MEAN: f64 = 561.8;
/// Standard deviation of the distribution human round-one demands follow.
pub const EMPIRICAL_DEMAND_STD: f64 = 128.9;

/// Latent preferences of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    /// Difference in importance between wealth and fairness.
    pub di: f64,
    /// Weight of values against norms, in `[0, 1]`.
    pub vw: f64,
}

impl Profile {
    /// Builds a profile, clamping `vw` into `[0, 1]`.
    pub fn new(di: f64, vw: f64) -> Self {
        Self {
            di,
            vw: vw.clamp(0.0, 1.0),
        }
    }
}

/// Where the norm input for a demand came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormSource {
    /// Derived from observed rejects/accepts.
    Computed,
    /// Drawn from the empirical distribution because nothing was observed yet.
    Drawn,
    /// Built from a history with one reply flipped.
    Counterfactual,
    /// Set directly by the profiler.
    Probed,
}

impl NormSource {
    pub fn as_str(self) -> &'static str {
        match self {
            NormSource::Computed => "computed",
            NormSource::Drawn => "drawn",
            NormSource::Counterfactual => "counterfactual",
            NormSource::Probed => "probed",
        }
    }
}

impl std::fmt::Display for NormSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormValue {
    pub value: f64,
    pub source: NormSource,
}

impl NormValue {
    pub fn new(value: f64, source: NormSource) -> Self {
        Self { value, source }
    }
}

/// The replies a proposer has seen to its own demands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationState {
    pub rejected: Vec<u32>,
    pub accepted: Vec<u32>,
    pub pie: u32,
}

impl ObservationState {
    pub fn new(pie: u32) -> Self {
        Self {
            rejected: Vec::new(),
            accepted: Vec::new(),
            pie,
        }
    }

    pub fn record(&mut self, demand: u32, accepted: bool) {
        if accepted {
            self.accepted.push(demand);
        } else {
            self.rejected.push(demand);
        }
    }

    pub fn len(&self) -> usize {
        self.rejected.len() + self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty() && self.accepted.is_empty()
    }

    pub fn min_rejected(&self) -> Option<u32> {
        self.rejected.iter().copied().min()
    }

    pub fn max_accepted(&self) -> Option<u32> {
        self.accepted.iter().copied().max()
    }

    /// Moves one occurrence of `demand` from one reply set to the other.
    /// Returns false if the demand was not present under `was_accepted`.
    pub fn flip(&mut self, demand: u32, was_accepted: bool) -> bool {
        let (from, to) = if was_accepted {
            (&mut self.accepted, &mut self.rejected)
        } else {
            (&mut self.rejected, &mut self.accepted)
        };
        match from.iter().position(|&d| d == demand) {
            Some(pos) => {
                from.swap_remove(pos);
                to.push(demand);
                true
            }
            None => false,
        }
    }

    /// Norm implied by the observations, or `None` when nothing was observed.
    pub fn computed_norm(&self) -> Option<f64> {
        let half = 0.5 * f64::from(self.pie);
        match (self.min_rejected(), self.max_accepted()) {
            (Some(r), Some(a)) => Some((f64::from(r) + f64::from(a)) / 2.0),
            (Some(r), None) => Some((f64::from(r) + half) / 2.0),
            (None, Some(a)) => Some((f64::from(a) + f64::from(self.pie)) / 2.0),
            (None, None) => None,
        }
    }
}

/// Game dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameConfig {
    pub pie: u32,
    pub rounds: usize,
    pub proposers: usize,
    pub responders: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            pie: DEFAULT_PIE,
            rounds: 20,
            proposers: 16,
            responders: 16,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pie == 0 {
            return Err(Error::InvalidConfig("pie must be positive".into()));
        }
        if self.proposers == 0 || self.responders == 0 {
            return Err(Error::InvalidConfig(
                "player counts must be positive".into(),
            ));
        }
        if self.proposers != self.responders {
            return Err(Error::InvalidConfig(format!(
                "pairing needs equal roles, got {} proposers and {} responders",
                self.proposers, self.responders
            )));
        }
        Ok(())
    }
}

/// Utility of demanding `d` out of `pie` for an agent with importance difference `di`.
///
/// Wealth satisfaction is the demanded share `d / P`; fairness satisfaction is
/// `1 - |P/2 - d| / (P/2)`, which peaks at the equal split. Each value
/// contributes `-weight / (satisfaction + 0.5)` with weights `1 ± di/2`.
pub fn utility(d: u32, di: f64, pie: u32) -> Result<f64> {
    if pie == 0 || d > pie {
        return Err(Error::DemandOutOfRange { demand: d, pie });
    }
    Ok(utility_unchecked(d, di, pie))
}

#[inline]
fn utility_unchecked(d: u32, di: f64, pie: u32) -> f64 {
    let p = f64::from(pie);
    let d = f64::from(d);
    let half = 0.5 * p;
    let wealth = d / p;
    let fairness = 1.0 - (half - d).abs() / half;
    -(1.0 + 0.5 * di) / (wealth + 0.5) - (1.0 - 0.5 * di) / (fairness + 0.5)
}

/// Demand maximising [`utility`]; the smallest demand wins ties.
pub fn value_demand(di: f64, pie: u32) -> u32 {
    let mut best = 0;
    let mut best_u = f64::NEG_INFINITY;
    for d in 0..=pie {
        let u = utility_unchecked(d, di, pie);
        if u > best_u {
            best_u = u;
            best = d;
        }
    }
    best
}

/// Rounds half up and clamps into `0..=pie`.
#[inline]
pub fn round_demand(x: f64, pie: u32) -> u32 {
    let r = (x + 0.5).floor();
    if r <= 0.0 {
        0
    } else if r >= f64::from(pie) {
        pie
    } else {
        r as u32
    }
}

/// Blends a precomputed value demand with a norm value.
#[inline]
pub fn blend(vw: f64, value_demand: u32, norm: f64, pie: u32) -> u32 {
    round_demand(vw * f64::from(value_demand) + (1.0 - vw) * norm, pie)
}

/// Draws a norm from the empirical demand distribution, clamped to `[0, pie]`.
pub fn draw_norm<R: Rng + ?Sized>(rng: &mut R, pie: u32) -> f64 {
    let normal = Normal::new(EMPIRICAL_DEMAND_MEAN, EMPIRICAL_DEMAND_STD)
        .expect("constant parameters are valid");
    normal.sample(rng).clamp(0.0, f64::from(pie))
}

/// The proposer's norm-based demand. Falls back to a random draw when nothing
/// has been observed; the draw is not written back into `obs`.
pub fn norm_demand<R: Rng + ?Sized>(obs: &ObservationState, rng: &mut R) -> NormValue {
    match obs.computed_norm() {
        Some(v) => NormValue::new(v, NormSource::Computed),
        None => NormValue::new(draw_norm(rng, obs.pie), NormSource::Drawn),
    }
}

/// Weighted blend of the value-based and norm-based demands.
pub fn combined_demand(profile: &Profile, norm: &NormValue, pie: u32) -> u32 {
    blend(profile.vw, value_demand(profile.di, pie), norm.value, pie)
}

/// Threshold for a responder with a precomputed value demand.
pub fn threshold_with<R: Rng + ?Sized>(
    vw: f64,
    value_demand: u32,
    observed_demands: &[u32],
    pie: u32,
    rng: &mut R,
) -> u32 {
    let norm = if observed_demands.is_empty() {
        draw_norm(rng, pie)
    } else {
        observed_demands.iter().map(|&d| f64::from(d)).sum::<f64>() / observed_demands.len() as f64
    };
    blend(vw, value_demand, norm, pie)
}

/// Acceptance threshold of a responder: its value demand blended with the
/// mean of the demands it has observed.
pub fn responder_threshold<R: Rng + ?Sized>(
    profile: &Profile,
    observed_demands: &[u32],
    pie: u32,
    rng: &mut R,
) -> u32 {
    threshold_with(
        profile.vw,
        value_demand(profile.di, pie),
        observed_demands,
        pie,
        rng,
    )
}

/// Responders accept any demand at or below their threshold.
#[inline]
pub fn responder_reply(threshold: u32, demand: u32) -> bool {
    demand <= threshold
}
