//! Repeated Ultimatum Game between fixed proposer and responder populations.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::format::fmt_sig;
use crate::model::{
    blend, norm_demand, responder_reply, threshold_with, value_demand, GameConfig, NormValue,
    ObservationState, Profile,
};
use crate::rng::{stream, Stream};

/// How out-of-range `vw` draws are mapped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VwSampling {
    /// Clamp the draw to the nearest bound.
    #[default]
    Clamp,
    /// Redraw until the sample falls inside `[0, 1]` (truncated normal).
    Truncate,
}

impl VwSampling {
    pub fn as_str(self) -> &'static str {
        match self {
            VwSampling::Clamp => "clamp",
            VwSampling::Truncate => "truncate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clamp" => Some(VwSampling::Clamp),
            "truncate" => Some(VwSampling::Truncate),
            _ => None,
        }
    }
}

/// Normal distributions of `di` and `vw` over the agent population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationParams {
    pub mu_di: f64,
    pub sigma_di: f64,
    pub mu_vw: f64,
    pub sigma_vw: f64,
    pub vw_sampling: VwSampling,
}

impl PopulationParams {
    /// Best-fit setting against the human dataset.
    pub const CALIBRATED: PopulationParams = PopulationParams {
        mu_di: 0.5,
        sigma_di: 0.25,
        mu_vw: -0.6,
        sigma_vw: 1.14,
        vw_sampling: VwSampling::Clamp,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_di >= 0.0 && self.sigma_vw >= 0.0) {
            return Err(crate::Error::InvalidConfig(
                "population standard deviations must be non-negative".into(),
            ));
        }
        if !(self.mu_di.is_finite() && self.mu_vw.is_finite()) {
            return Err(crate::Error::InvalidConfig(
                "population means must be finite".into(),
            ));
        }
        Ok(())
    }

    fn sample_profile<R: Rng + ?Sized>(&self, rng: &mut R) -> Profile {
        let di = sample_normal(rng, self.mu_di, self.sigma_di);
        let vw = match self.vw_sampling {
            VwSampling::Clamp => sample_normal(rng, self.mu_vw, self.sigma_vw),
            VwSampling::Truncate => sample_truncated_unit(rng, self.mu_vw, self.sigma_vw),
        };
        Profile::new(di, vw)
    }
}

impl Default for PopulationParams {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu;
    }
    Normal::new(mu, sigma).expect("validated sigma").sample(rng)
}

const TRUNCATION_ATTEMPTS: usize = 10_000;

fn sample_truncated_unit<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.clamp(0.0, 1.0);
    }
    let normal = Normal::new(mu, sigma).expect("validated sigma");
    let mut x = mu;
    for _ in 0..TRUNCATION_ATTEMPTS {
        x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
    x.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Proposer,
    Responder,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Proposer => "proposer",
            Role::Responder => "responder",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub id: usize,
    pub role: Role,
    pub profile: Profile,
    /// Memoized value-based demand for `profile.di`.
    pub value_demand: u32,
}

/// Draws one profile per player: proposers first, then responders.
pub fn sample_population<R: Rng + ?Sized>(
    params: &PopulationParams,
    config: &GameConfig,
    rng: &mut R,
) -> Vec<Profile> {
    (0..config.proposers + config.responders)
        .map(|_| params.sample_profile(rng))
        .collect()
}

/// Round-robin pairing: in round `round` (1-based) proposer `i` meets
/// responder `(i + round - 1) mod n`.
pub fn pair(round: usize, n: usize) -> Vec<(usize, usize)> {
    let offset = round.saturating_sub(1);
    (0..n).map(|i| (i, (i + offset) % n)).collect()
}

/// One proposer/responder interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub proposer_id: usize,
    pub responder_id: usize,
    pub demand: u32,
    pub accepted: bool,
    pub proposer_norm: NormValue,
    pub responder_threshold: u32,
}

/// Everything that happened in one game.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: GameConfig,
    pub seed: u64,
    pub params: PopulationParams,
    pub proposers: Vec<Agent>,
    pub responders: Vec<Agent>,
    /// Ordered by round, then by proposer.
    pub records: Vec<RoundRecord>,
}

impl RunLog {
    pub fn population(&self) -> impl Iterator<Item = &Agent> {
        self.proposers.iter().chain(self.responders.iter())
    }

    pub fn rounds_played(&self) -> usize {
        self.records.len() / self.config.proposers.max(1)
    }

    pub fn round_records(&self, round: usize) -> &[RoundRecord] {
        let n = self.config.proposers;
        if round == 0 || round > self.rounds_played() {
            return &[];
        }
        &self.records[(round - 1) * n..round * n]
    }

    pub fn proposer(&self, id: usize) -> Option<&Agent> {
        self.proposers.get(id)
    }

    /// Records of one proposer in round order.
    pub fn proposer_records(&self, id: usize) -> impl Iterator<Item = &RoundRecord> {
        self.records.iter().filter(move |r| r.proposer_id == id)
    }

    /// Observations of proposer `id` after `round` replies (round 0 is empty).
    pub fn snapshot(&self, id: usize, round: usize) -> ObservationState {
        let mut obs = ObservationState::new(self.config.pie);
        for r in self.proposer_records(id).take_while(|r| r.round <= round) {
            obs.record(r.demand, r.accepted);
        }
        obs
    }

    /// One row per record:
    /// `run_seed,round,proposer_id,responder_id,demand,accepted,norm_value,norm_source,threshold`.
    pub fn write_runs_csv<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        if with_header {
            w.write_record(RUNS_HEADER)?;
        }
        for r in &self.records {
            w.write_record([
                self.seed.to_string(),
                r.round.to_string(),
                r.proposer_id.to_string(),
                r.responder_id.to_string(),
                r.demand.to_string(),
                u8::from(r.accepted).to_string(),
                fmt_sig(r.proposer_norm.value),
                r.proposer_norm.source.to_string(),
                r.responder_threshold.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per agent: `run_seed,agent_id,role,di,vw,value_demand`.
    pub fn write_population_csv<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        if with_header {
            w.write_record(POPULATION_HEADER)?;
        }
        for a in self.population() {
            w.write_record([
                self.seed.to_string(),
                a.id.to_string(),
                a.role.as_str().to_string(),
                fmt_sig(a.profile.di),
                fmt_sig(a.profile.vw),
                a.value_demand.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const POPULATION_HEADER: [&str; 6] =
    ["run_seed", "agent_id", "role", "di", "vw", "value_demand"];

pub const RUNS_HEADER: [&str; 9] = [
    "run_seed",
    "round",
    "proposer_id",
    "responder_id",
    "demand",
    "accepted",
    "norm_value",
    "norm_source",
    "threshold",
];

/// Plays `config.rounds` rounds. Within a round every proposer demands from
/// its previous-round observations, then all replies are applied.
pub fn run_game(params: &PopulationParams, config: &GameConfig, seed: u64) -> Result<RunLog> {
    config.validate()?;
    params.validate()?;
    let pie = config.pie;
    let n = config.proposers;

    let mut pop_rng = stream(seed, Stream::Population);
    let profiles = sample_population(params, config, &mut pop_rng);
    let make_agent = |id: usize, role: Role, profile: Profile| Agent {
        id,
        role,
        profile,
        value_demand: value_demand(profile.di, pie),
    };
    let proposers: Vec<Agent> = profiles[..n]
        .iter()
        .enumerate()
        .map(|(i, p)| make_agent(i, Role::Proposer, *p))
        .collect();
    let responders: Vec<Agent> = profiles[n..]
        .iter()
        .enumerate()
        .map(|(j, p)| make_agent(n + j, Role::Responder, *p))
        .collect();

    let mut proposer_rng = stream(seed, Stream::ProposerNorms);
    let mut responder_rng = stream(seed, Stream::ResponderNorms);
    let mut observations = vec![ObservationState::new(pie); n];
    let mut seen_demands: Vec<Vec<u32>> = vec![Vec::with_capacity(config.rounds); n];
    let mut records = Vec::with_capacity(config.rounds * n);

    for round in 1..=config.rounds {
        let proposals: Vec<(NormValue, u32)> = proposers
            .iter()
            .zip(&observations)
            .map(|(a, obs)| {
                let norm = norm_demand(obs, &mut proposer_rng);
                (norm, blend(a.profile.vw, a.value_demand, norm.value, pie))
            })
            .collect();

        for (i, j) in pair(round, n) {
            let (norm, demand) = proposals[i];
            let responder = &responders[j];
            seen_demands[j].push(demand);
            let threshold = threshold_with(
                responder.profile.vw,
                responder.value_demand,
                &seen_demands[j],
                pie,
                &mut responder_rng,
            );
            records.push(RoundRecord {
                round,
                proposer_id: i,
                responder_id: responder.id,
                demand,
                accepted: responder_reply(threshold, demand),
                proposer_norm: norm,
                responder_threshold: threshold,
            });
        }
        for r in &records[(round - 1) * n..] {
            observations[r.proposer_id].record(r.demand, r.accepted);
        }
    }

    Ok(RunLog {
        config: *config,
        seed,
        params: *params,
        proposers,
        responders,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{combined_demand, NormSource};

    #[test]
    fn pairing_rotates() {
        assert_eq!(pair(1, 16)[0], (0, 0));
        assert_eq!(pair(2, 16)[0], (0, 1));
        for round in 1..=20 {
            let mut seen: Vec<usize> = pair(round, 16).into_iter().map(|(_, j)| j).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..16).collect::<Vec<_>>());
        }
        for i in 0..16 {
            let mut met: Vec<usize> = (1..=16).map(|k| pair(k, 16)[i].1).collect();
            met.sort_unstable();
            assert_eq!(met, (0..16).collect::<Vec<_>>());
        }
    }

    #[test]
    fn degenerate_population() {
        let params = PopulationParams {
            mu_di: 0.3,
            sigma_di: 0.0,
            mu_vw: 0.5,
            sigma_vw: 0.0,
            vw_sampling: VwSampling::Clamp,
        };
        let mut rng = stream(3, Stream::Population);
        let pop = sample_population(&params, &GameConfig::default(), &mut rng);
        assert_eq!(pop.len(), 32);
        assert!(pop.iter().all(|p| *p == Profile::new(0.3, 0.5)));
    }

    #[test]
    fn zero_rounds() {
        let cfg = GameConfig {
            rounds: 0,
            ..GameConfig::default()
        };
        let log = run_game(&PopulationParams::CALIBRATED, &cfg, 1).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(log.population().count(), 32);
    }

    #[test]
    fn value_only_players_ignore_history() {
        let params = PopulationParams {
            mu_di: 0.7,
            sigma_di: 0.0,
            mu_vw: 3.0,
            sigma_vw: 0.0,
            vw_sampling: VwSampling::Clamp,
        };
        let log = run_game(&params, &GameConfig::default(), 11).unwrap();
        let vd = value_demand(0.7, 1000);
        assert!(log.records.iter().all(|r| r.demand == vd));
    }

    #[test]
    fn default_run_shape_and_replay() {
        let log = run_game(&PopulationParams::CALIBRATED, &GameConfig::default(), 5).unwrap();
        assert_eq!(log.records.len(), 320);
        for r in &log.records {
            assert_eq!(r.accepted, r.demand <= r.responder_threshold);
            let a = log.proposer(r.proposer_id).unwrap();
            assert_eq!(
                combined_demand(&a.profile, &r.proposer_norm, 1000),
                r.demand
            );
            let snap = log.snapshot(r.proposer_id, r.round - 1);
            assert_eq!(snap.len(), r.round - 1);
            match snap.computed_norm() {
                Some(v) => assert_eq!(r.proposer_norm, NormValue::new(v, NormSource::Computed)),
                None => assert_eq!(r.proposer_norm.source, NormSource::Drawn),
            }
        }
    }

    #[test]
    fn truncated_vw_stays_inside() {
        let params = PopulationParams {
            vw_sampling: VwSampling::Truncate,
            ..PopulationParams::CALIBRATED
        };
        let mut rng = stream(9, Stream::Population);
        let cfg = GameConfig::default();
        for _ in 0..20 {
            for p in sample_population(&params, &cfg, &mut rng) {
                assert!((0.0..=1.0).contains(&p.vw));
            }
        }
    }
}
