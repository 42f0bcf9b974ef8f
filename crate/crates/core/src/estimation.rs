//! Exhaustive grid estimation of `(di, vw)` from an observed demand trace.
//!
//! Every grid point is scored by the mean absolute deviation between the
//! demand it predicts and the demand observed, and *all* points sharing the
//! minimum are returned. More than one point means the observations cannot
//! tell the candidates apart.
//!
//! Scores are accumulated as integer sums of absolute deviations, so two
//! points tie exactly when their sums are equal; the reported fitness is the
//! sum divided by the trace length.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::game::RunLog;
use crate::model::{blend, value_demand, NormSource, NormValue, Profile, EMPIRICAL_DEMAND_MEAN};
use crate::stats::std_dev;

/// Inclusive rectangular grid over `(di, vw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub di_min: f64,
    pub di_max: f64,
    pub vw_min: f64,
    pub vw_max: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            di_min: -0.15,
            di_max: 1.79,
            vw_min: 0.0,
            vw_max: 1.0,
            step: 0.01,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.di_min.is_nan() || self.di_max.is_nan() || self.di_min > self.di_max {
            return Err(Error::InvalidGrid(format!(
                "di range [{}, {}] is empty",
                self.di_min, self.di_max
            )));
        }
        if self.vw_min.is_nan()
            || self.vw_max.is_nan()
            || self.vw_min > self.vw_max
            || self.vw_min < 0.0
            || self.vw_max > 1.0
        {
            return Err(Error::InvalidGrid(format!(
                "vw range [{}, {}] must be a non-empty part of [0, 1]",
                self.vw_min, self.vw_max
            )));
        }
        Ok(())
    }

    pub fn di_values(&self) -> Vec<f64> {
        axis(self.di_min, self.di_max, self.step)
    }

    pub fn vw_values(&self) -> Vec<f64> {
        axis(self.vw_min, self.vw_max, self.step)
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        axis_len(self.di_min, self.di_max, self.step)
            * axis_len(self.vw_min, self.vw_max, self.step)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn axis_len(min: f64, max: f64, step: f64) -> usize {
    ((max - min) / step + 1e-9).floor() as usize + 1
}

/// Axis values. When the step and origin are whole multiples of a decimal
/// unit the values are produced as `integer / scale`, which keeps e.g. `0.37`
/// bit-identical to the literal.
fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = axis_len(min, max, step);
    let scale = 1.0 / step;
    let origin = min * scale;
    let exact = (scale - scale.round()).abs() < 1e-9 && (origin - origin.round()).abs() < 1e-6;
    (0..n)
        .map(|i| {
            if exact {
                (origin.round() + i as f64) / scale.round()
            } else {
                min + i as f64 * step
            }
        })
        .collect()
}

/// One analysed round: the norm the proposer acted on and what it demanded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub round: usize,
    pub norm: NormValue,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTrace {
    pub proposer_id: usize,
    pub pie: u32,
    pub entries: Vec<TraceEntry>,
}

impl ObservationTrace {
    pub fn new(proposer_id: usize, pie: u32) -> Self {
        Self {
            proposer_id,
            pie,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry one round after the last.
    pub fn push(&mut self, norm: NormValue, demand: u32) {
        let round = self.entries.last().map_or(1, |e| e.round + 1);
        self.entries.push(TraceEntry {
            round,
            norm,
            demand,
        });
    }

    pub fn norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.norm.value)
    }

    pub fn norm_std(&self) -> f64 {
        std_dev(&self.norms().collect::<Vec<_>>())
    }

    /// The first `m` entries.
    pub fn prefix(&self, m: usize) -> ObservationTrace {
        ObservationTrace {
            proposer_id: self.proposer_id,
            pie: self.pie,
            entries: self.entries[..m.min(self.entries.len())].to_vec(),
        }
    }
}

/// How rounds played on an empty history are fed to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// Use the norm value the proposer actually drew.
    #[default]
    Oracle,
    /// Use the mean of the empirical demand distribution.
    Mean,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Oracle => "oracle_norm",
            NormMode::Mean => "mean_norm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle_norm" | "oracle" => Some(NormMode::Oracle),
            "mean_norm" | "mean" => Some(NormMode::Mean),
            _ => None,
        }
    }
}

/// Builds the trace of the first `m` rounds of proposer `proposer_id`.
pub fn norm_inputs_for_estimation(
    log: &RunLog,
    proposer_id: usize,
    m: usize,
    mode: NormMode,
) -> Result<ObservationTrace> {
    if log.proposer(proposer_id).is_none() {
        return Err(Error::UnknownProposer(proposer_id));
    }
    if m == 0 {
        return Err(Error::EmptyTrace);
    }
    let available = log.rounds_played();
    if m > available {
        return Err(Error::RoundsUnavailable {
            requested: m,
            available,
        });
    }
    let entries = log
        .proposer_records(proposer_id)
        .take(m)
        .map(|r| {
            let norm = match (r.proposer_norm.source, mode) {
                (NormSource::Drawn, NormMode::Mean) => {
                    NormValue::new(EMPIRICAL_DEMAND_MEAN, NormSource::Drawn)
                }
                _ => r.proposer_norm,
            };
            TraceEntry {
                round: r.round,
                norm,
                demand: r.demand,
            }
        })
        .collect();
    Ok(ObservationTrace {
        proposer_id,
        pie: log.config.pie,
        entries,
    })
}

/// Mean absolute deviation between the demands `profile` would make on the
/// trace's norms and the observed demands.
pub fn fitness(profile: &Profile, trace: &ObservationTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let vd = value_demand(profile.di, trace.pie);
    Ok(deviation_sum(profile.vw, vd, trace, u64::MAX) as f64 / trace.len() as f64)
}

/// Sum of absolute deviations, abandoning once it exceeds `bound`.
#[inline]
fn deviation_sum(vw: f64, vd: u32, trace: &ObservationTrace, bound: u64) -> u64 {
    let mut sum = 0u64;
    for e in &trace.entries {
        let d = blend(vw, vd, e.norm.value, trace.pie);
        sum += u64::from(d.abs_diff(e.demand));
        if sum > bound {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub di: f64,
    pub vw: f64,
    pub value_demand: u32,
}

impl GridPoint {
    pub fn profile(&self) -> Profile {
        Profile::new(self.di, self.vw)
    }
}

/// All grid points attaining the minimal fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub points: Vec<GridPoint>,
    pub fitness: f64,
    pub evaluated: usize,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_ambiguous(&self) -> bool {
        self.points.len() > 1
    }

    pub fn contains(&self, profile: &Profile) -> bool {
        self.points
            .iter()
            .any(|p| (p.di - profile.di).abs() < 1e-9 && (p.vw - profile.vw).abs() < 1e-9)
    }

    pub fn di_std(&self) -> f64 {
        std_dev(&self.points.iter().map(|p| p.di).collect::<Vec<_>>())
    }

    pub fn vw_std(&self) -> f64 {
        std_dev(&self.points.iter().map(|p| p.vw).collect::<Vec<_>>())
    }

    /// Root mean squared error between the demands predicted by every
    /// solution and the observed demands, pooled over solutions and rounds.
    pub fn rmse(&self, trace: &ObservationTrace) -> f64 {
        if self.points.is_empty() || trace.is_empty() {
            return 0.0;
        }
        let mut sq = 0.0;
        for p in &self.points {
            for e in &trace.entries {
                let d = blend(p.vw, p.value_demand, e.norm.value, trace.pie);
                let err = f64::from(d) - f64::from(e.demand);
                sq += err * err;
            }
        }
        (sq / (self.points.len() * trace.len()) as f64).sqrt()
    }

    /// Rows `di,vw,fitness`, a blank line, then `n_solutions,min_fitness,evaluated`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["di", "vw", "fitness"])?;
            for p in &self.points {
                w.write_record([fmt_sig(p.di), fmt_sig(p.vw), fmt_sig(self.fitness)])?;
            }
            w.flush()?;
        }
        writeln!(out)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_solutions", "min_fitness", "evaluated"])?;
        w.write_record([
            self.points.len().to_string(),
            fmt_sig(self.fitness),
            self.evaluated.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Grid search with the value demand of every `di` row precomputed.
#[derive(Debug, Clone)]
pub struct Estimator {
    grid: GridSpec,
    pie: u32,
    di: Vec<f64>,
    vw: Vec<f64>,
    value_demands: Vec<u32>,
    /// Distinct value demands with the rows that share them, in row order.
    classes: Vec<(u32, Vec<usize>)>,
    tolerance: f64,
}

impl Estimator {
    pub fn new(grid: GridSpec, pie: u32) -> Result<Self> {
        grid.validate()?;
        let di = grid.di_values();
        let vw = grid.vw_values();
        let value_demands: Vec<u32> = di.par_iter().map(|&d| value_demand(d, pie)).collect();
        let mut by_vd: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &vd) in value_demands.iter().enumerate() {
            by_vd.entry(vd).or_default().push(i);
        }
        Ok(Self {
            grid,
            pie,
            di,
            vw,
            value_demands,
            classes: by_vd.into_iter().collect(),
            tolerance: 0.0,
        })
    }

    /// Accept points within `tol` (demand units) of the minimal fitness.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol.max(0.0);
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn pie(&self) -> u32 {
        self.pie
    }

    pub fn di_values(&self) -> &[f64] {
        &self.di
    }

    pub fn vw_values(&self) -> &[f64] {
        &self.vw
    }

    /// Memoized value demand of every `di` row.
    pub fn value_demands(&self) -> &[u32] {
        &self.value_demands
    }

    /// Fitness of a grid point given by its row and column.
    pub fn fitness_at(
        &self,
        di_index: usize,
        vw_index: usize,
        trace: &ObservationTrace,
    ) -> Result<f64> {
        if trace.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let sum = deviation_sum(
            self.vw[vw_index],
            self.value_demands[di_index],
            trace,
            u64::MAX,
        );
        Ok(sum as f64 / trace.len() as f64)
    }

    pub fn estimate(&self, trace: &ObservationTrace) -> Result<SolutionSet> {
        if trace.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let m = trace.len() as f64;
        let slack = (self.tolerance * m).floor() as u64;

        // Rows with the same value demand score identically, so each class is
        // scored once. Candidates are (sum, vw index) within `slack` of the
        // class minimum.
        let scored: Vec<(u64, Vec<(u64, usize)>)> = self
            .classes
            .par_iter()
            .map(|(vd, _)| {
                let mut best = u64::MAX;
                let mut cands = Vec::new();
                for (j, &vw) in self.vw.iter().enumerate() {
                    let bound = best.saturating_add(slack);
                    let s = deviation_sum(vw, *vd, trace, bound);
                    if s <= bound {
                        best = best.min(s);
                        cands.push((s, j));
                    }
                }
                (best, cands)
            })
            .collect();

        let global = scored
            .iter()
            .map(|(b, _)| *b)
            .min()
            .expect("grid is non-empty");
        let cutoff = global.saturating_add(slack);

        let mut hits: Vec<(usize, usize)> = Vec::new();
        for ((_, rows), (_, cands)) in self.classes.iter().zip(&scored) {
            for &(s, j) in cands {
                if s <= cutoff {
                    hits.extend(rows.iter().map(|&i| (i, j)));
                }
            }
        }
        hits.sort_unstable();
        let points = hits
            .into_iter()
            .map(|(i, j)| GridPoint {
                di: self.di[i],
                vw: self.vw[j],
                value_demand: self.value_demands[i],
            })
            .collect();
        Ok(SolutionSet {
            points,
            fitness: global as f64 / m,
            evaluated: self.di.len() * self.vw.len(),
        })
    }
}

/// One-shot estimation; prefer reusing an [`Estimator`] in loops.
pub fn estimate(trace: &ObservationTrace, grid: &GridSpec) -> Result<SolutionSet> {
    Estimator::new(*grid, trace.pie)?.estimate(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{run_game, PopulationParams};
    use crate::model::{GameConfig, NormSource};

    fn computed(v: f64) -> NormValue {
        NormValue::new(v, NormSource::Computed)
    }

    #[test]
    fn default_grid_counts() {
        let g = GridSpec::default();
        assert_eq!(g.di_values().len(), 195);
        assert_eq!(g.vw_values().len(), 101);
        assert_eq!(g.len(), 19_695);
        assert_eq!(g.di_values()[0], -0.15);
        assert_eq!(g.di_values()[194], 1.79);
        assert_eq!(g.vw_values()[37], 0.37);
    }

    #[test]
    fn invalid_grids() {
        let g = GridSpec {
            step: 0.0,
            ..GridSpec::default()
        };
        assert!(g.validate().is_err());
        let g = GridSpec {
            vw_max: 1.5,
            ..GridSpec::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn fitness_examples() {
        let mut t = ObservationTrace::new(0, 1000);
        t.push(computed(575.0), 600);
        assert_eq!(fitness(&Profile::new(0.4, 0.0), &t).unwrap(), 25.0);
        assert!(matches!(
            fitness(&Profile::new(0.4, 0.0), &ObservationTrace::new(0, 1000)),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn fitness_matches_per_round_recomputation() {
        let mut t = ObservationTrace::new(0, 1000);
        t.push(computed(575.0), 610);
        t.push(computed(612.5), 640);
        t.push(computed(700.0), 690);
        let p = Profile::new(0.51, 0.31);
        // independent per-round evaluation of the weighted blend
        let vd = value_demand(0.51, 1000) as f64;
        let oracle: f64 = [(575.0, 610.0), (612.5, 640.0), (700.0, 690.0)]
            .iter()
            .map(|&(n, d)| ((0.31 * vd + 0.69 * n + 0.5).floor() - d).abs())
            .sum::<f64>()
            / 3.0;
        assert_eq!(fitness(&p, &t).unwrap(), oracle);
    }

    #[test]
    fn estimate_recovers_generator() {
        let est = Estimator::new(GridSpec::default(), 1000).unwrap();
        let (di, vw) = (est.di_values()[80], est.vw_values()[42]);
        let truth = Profile::new(di, vw);
        let mut t = ObservationTrace::new(0, 1000);
        for n in [575.0, 612.5, 700.0, 530.0, 810.0] {
            t.push(
                computed(n),
                crate::model::combined_demand(&truth, &computed(n), 1000),
            );
        }
        let s = est.estimate(&t).unwrap();
        assert_eq!(s.fitness, 0.0);
        assert!(s.contains(&truth));
        assert_eq!(s.evaluated, 19_695);
        // brute-force the same minimum set
        let mut brute = Vec::new();
        for (i, &d) in est.di_values().iter().enumerate() {
            for (j, &w) in est.vw_values().iter().enumerate() {
                if fitness(&Profile::new(d, w), &t).unwrap() == 0.0 {
                    brute.push((i, j));
                }
            }
        }
        assert_eq!(brute.len(), s.len());
    }

    #[test]
    fn tolerance_widens_set() {
        let est = Estimator::new(GridSpec::default(), 1000).unwrap();
        let mut t = ObservationTrace::new(0, 1000);
        t.push(computed(600.0), 650);
        t.push(computed(560.0), 620);
        let strict = est.estimate(&t).unwrap();
        let loose = est.clone().with_tolerance(2.0).estimate(&t).unwrap();
        assert!(loose.len() >= strict.len());
        assert_eq!(loose.fitness, strict.fitness);
    }

    #[test]
    fn trace_extraction() {
        let log = run_game(&PopulationParams::CALIBRATED, &GameConfig::default(), 3).unwrap();
        assert!(matches!(
            norm_inputs_for_estimation(&log, 0, 0, NormMode::Oracle),
            Err(Error::EmptyTrace)
        ));
        assert!(matches!(
            norm_inputs_for_estimation(&log, 99, 3, NormMode::Oracle),
            Err(Error::UnknownProposer(99))
        ));
        assert!(norm_inputs_for_estimation(&log, 0, 21, NormMode::Oracle).is_err());
        let t = norm_inputs_for_estimation(&log, 2, 1, NormMode::Oracle).unwrap();
        let first = log.proposer_records(2).next().unwrap();
        assert_eq!(t.entries[0].norm, first.proposer_norm);
        let t = norm_inputs_for_estimation(&log, 2, 1, NormMode::Mean).unwrap();
        assert_eq!(t.entries[0].norm.value, 561.8);
        let t = norm_inputs_for_estimation(&log, 2, 20, NormMode::Mean).unwrap();
        assert!(t.entries.windows(2).all(|w| w[0].round < w[1].round));
    }

    #[test]
    fn solution_csv_has_summary() {
        let est = Estimator::new(GridSpec::default(), 1000).unwrap();
        let mut t = ObservationTrace::new(0, 1000);
        t.push(computed(600.0), 650);
        let s = est.estimate(&t).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("di,vw,fitness\n"));
        assert!(text.contains(&format!(
            "n_solutions,min_fitness,evaluated\n{},0,19695",
            s.len()
        )));
    }
}
