//! Elicitation strategies that query a proposer in a side-game to shrink an
//! ambiguous solution set.
//!
//! A session holds a private copy of the proposer's observations. Queries are
//! answered by the proposer's true profile and appended to the estimation
//! trace; nothing in the originating [`RunLog`] is touched.

use crate::error::{Error, Result};
use crate::estimation::{
    norm_inputs_for_estimation, Estimator, NormMode, ObservationTrace, SolutionSet,
};
use crate::game::RunLog;
use crate::model::{blend, value_demand, NormSource, NormValue, ObservationState, Profile};

/// Interaction budget used by AR-SS and AR-DIRECT unless overridden.
pub const DEFAULT_MAX_INTERACTIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Explore the search space by rejecting lower and accepting higher demands.
    SearchSpace,
    /// Ask what the proposer would demand had one past reply been flipped.
    Counterfactual,
    /// Set the norm directly.
    Direct,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SearchSpace, Method::Counterfactual, Method::Direct];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SearchSpace => "AR_SS",
            Method::Counterfactual => "AR_C",
            Method::Direct => "AR_DIRECT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "AR_SS" | "SS" => Some(Method::SearchSpace),
            "AR_C" | "C" => Some(Method::Counterfactual),
            "AR_DIRECT" | "DIRECT" => Some(Method::Direct),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub method: Method,
    pub initial_solutions: usize,
    pub final_solutions: usize,
    pub interactions: usize,
    pub final_fitness: f64,
}

/// What a single strategy step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// A query was asked; the proposer answered with `demand`.
    Asked { norm: f64, demand: u32 },
    /// The loop guard failed: unique solution or budget spent.
    Done,
    /// No informative query is left.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct ElicitationSession<'a> {
    estimator: &'a Estimator,
    sha: Profile,
    sha_value_demand: u32,
    /// Own demands and replies of the real rounds, in order.
    history: Vec<(u32, bool)>,
    working_obs: ObservationState,
    trace: ObservationTrace,
    solutions: SolutionSet,
    initial_solutions: usize,
    count: usize,
    max_int: usize,
    used_rounds: Vec<bool>,
    stalled: bool,
}

impl<'a> ElicitationSession<'a> {
    /// `history` holds the real rounds behind `trace` as `(demand, accepted)`.
    pub fn new(
        estimator: &'a Estimator,
        sha: Profile,
        history: Vec<(u32, bool)>,
        trace: ObservationTrace,
        max_int: usize,
    ) -> Result<Self> {
        let solutions = estimator.estimate(&trace)?;
        Ok(Self::with_solutions(
            estimator, sha, history, trace, solutions, max_int,
        ))
    }

    /// Like [`ElicitationSession::new`] but reuses an existing estimate of `trace`.
    pub fn with_solutions(
        estimator: &'a Estimator,
        sha: Profile,
        history: Vec<(u32, bool)>,
        trace: ObservationTrace,
        solutions: SolutionSet,
        max_int: usize,
    ) -> Self {
        let pie = estimator.pie();
        let mut working_obs = ObservationState::new(pie);
        for &(d, ok) in &history {
            working_obs.record(d, ok);
        }
        let k = history.len();
        Self {
            estimator,
            sha,
            sha_value_demand: value_demand(sha.di, pie),
            history,
            working_obs,
            trace,
            initial_solutions: solutions.len(),
            solutions,
            count: 0,
            max_int,
            used_rounds: vec![false; k],
            stalled: false,
        }
    }

    /// Session over the first `m` rounds of `proposer_id` in `log`.
    pub fn from_log(
        estimator: &'a Estimator,
        log: &RunLog,
        proposer_id: usize,
        m: usize,
        mode: NormMode,
        max_int: usize,
    ) -> Result<Self> {
        let trace = norm_inputs_for_estimation(log, proposer_id, m, mode)?;
        let sha = log
            .proposer(proposer_id)
            .ok_or(Error::UnknownProposer(proposer_id))?
            .profile;
        let history = log
            .proposer_records(proposer_id)
            .take(m)
            .map(|r| (r.demand, r.accepted))
            .collect();
        Self::new(estimator, sha, history, trace, max_int)
    }

    pub fn trace(&self) -> &ObservationTrace {
        &self.trace
    }

    pub fn solutions(&self) -> &SolutionSet {
        &self.solutions
    }

    pub fn working_obs(&self) -> &ObservationState {
        &self.working_obs
    }

    pub fn interactions(&self) -> usize {
        self.count
    }

    pub fn max_interactions(&self) -> usize {
        self.max_int
    }

    fn guard(&self) -> bool {
        self.solutions.is_ambiguous() && self.count < self.max_int
    }

    /// The proposer answers with its true profile; the answer joins the trace.
    fn ask(&mut self, norm: NormValue) -> Result<u32> {
        let demand = blend(
            self.sha.vw,
            self.sha_value_demand,
            norm.value,
            self.estimator.pie(),
        );
        self.trace.push(norm, demand);
        self.solutions = self.estimator.estimate(&self.trace)?;
        self.count += 1;
        Ok(demand)
    }

    fn report(&self, method: Method) -> ReductionReport {
        ReductionReport {
            method,
            initial_solutions: self.initial_solutions,
            final_solutions: self.solutions.len(),
            interactions: self.count,
            final_fitness: self.solutions.fitness,
        }
    }

    /// One AR-SS iteration: ask for the next demand under the working
    /// observations, then reject it if it is below every rejected demand or
    /// accept it if it is above every accepted one. A demand inside the
    /// explored band changes nothing, so the next answer would repeat and the
    /// strategy stops.
    pub fn search_space_step(&mut self) -> Result<Step> {
        if self.stalled {
            return Ok(Step::Exhausted);
        }
        if !self.guard() {
            return Ok(Step::Done);
        }
        let norm = match self.working_obs.computed_norm() {
            Some(v) => NormValue::new(v, NormSource::Computed),
            None => return Ok(Step::Exhausted),
        };
        let d = self.ask(norm)?;
        let below_rejects = self.working_obs.min_rejected().is_none_or(|r| d < r);
        let above_accepts = self.working_obs.max_accepted().is_none_or(|a| d > a);
        if below_rejects {
            self.working_obs.record(d, false);
        } else if above_accepts {
            self.working_obs.record(d, true);
        } else {
            self.stalled = true;
        }
        Ok(Step::Asked {
            norm: norm.value,
            demand: d,
        })
    }

    pub fn ar_ss(&mut self) -> Result<ReductionReport> {
        while let Step::Asked { .. } = self.search_space_step()? {}
        Ok(self.report(Method::SearchSpace))
    }

    /// Norm implied by flipping the reply of real round `i` (0-based), if the
    /// flip widens the observed band.
    pub fn counterfactual_norm(&self, i: usize) -> Option<f64> {
        let (d, accepted) = *self.history.get(i)?;
        let widens = if accepted {
            self.working_obs.min_rejected().is_none_or(|r| d < r)
        } else {
            self.working_obs.max_accepted().is_none_or(|a| d > a)
        };
        if !widens {
            return None;
        }
        let mut obs = self.working_obs.clone();
        obs.flip(d, accepted);
        obs.computed_norm()
    }

    /// One AR-C iteration: among unused real rounds whose flipped reply widens
    /// the band, pick the one whose counterfactual norm is farthest from every
    /// norm already in the trace (earliest round on ties) and ask for the
    /// demand under it.
    pub fn counterfactual_step(&mut self) -> Result<Step> {
        if !self.guard() {
            return Ok(Step::Done);
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.history.len() {
            if self.used_rounds[i] {
                continue;
            }
            let Some(norm) = self.counterfactual_norm(i) else {
                continue;
            };
            let score = min_distance(norm, self.trace.norms());
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((i, norm, score));
            }
        }
        match best {
            Some((i, norm, score)) if score > 0.0 => {
                self.used_rounds[i] = true;
                let d = self.ask(NormValue::new(norm, NormSource::Counterfactual))?;
                Ok(Step::Asked { norm, demand: d })
            }
            _ => Ok(Step::Exhausted),
        }
    }

    /// Runs AR-C with the budget set to the number of real rounds.
    pub fn ar_c(&mut self) -> Result<ReductionReport> {
        self.max_int = self.history.len();
        while let Step::Asked { .. } = self.counterfactual_step()? {}
        Ok(self.report(Method::Counterfactual))
    }

    /// One AR-DIRECT iteration: probe the integer norm in `[lo, hi]` farthest
    /// from the norms already in the trace.
    pub fn direct_step(&mut self, lo: u32, hi: u32) -> Result<Step> {
        if lo > hi || hi > self.estimator.pie() {
            return Err(Error::EmptyNormRange { lo, hi });
        }
        if !self.guard() {
            return Ok(Step::Done);
        }
        let (probe, score) = farthest_probe(self.trace.norms(), lo, hi);
        if score <= 0.0 {
            return Ok(Step::Exhausted);
        }
        let norm = f64::from(probe);
        let d = self.ask(NormValue::new(norm, NormSource::Probed))?;
        Ok(Step::Asked { norm, demand: d })
    }

    pub fn ar_direct(&mut self, lo: u32, hi: u32) -> Result<ReductionReport> {
        while let Step::Asked { .. } = self.direct_step(lo, hi)? {}
        Ok(self.report(Method::Direct))
    }

    /// Runs `method` with its default policy. `norm_range` is only used by
    /// AR-DIRECT.
    pub fn run(&mut self, method: Method, norm_range: (u32, u32)) -> Result<ReductionReport> {
        match method {
            Method::SearchSpace => self.ar_ss(),
            Method::Counterfactual => self.ar_c(),
            Method::Direct => self.ar_direct(norm_range.0, norm_range.1),
        }
    }
}

fn min_distance(x: f64, others: impl Iterator<Item = f64>) -> f64 {
    others.map(|o| (x - o).abs()).fold(f64::INFINITY, f64::min)
}

/// Integer in `[lo, hi]` maximising the distance to the nearest of `norms`,
/// lowest value on ties, together with that distance.
pub fn farthest_probe(norms: impl Iterator<Item = f64>, lo: u32, hi: u32) -> (u32, f64) {
    let norms: Vec<f64> = norms.collect();
    let mut best = (lo, f64::NEG_INFINITY);
    for c in lo..=hi {
        let score = min_distance(f64::from(c), norms.iter().copied());
        if score > best.1 {
            best = (c, score);
        }
    }
    best
}
