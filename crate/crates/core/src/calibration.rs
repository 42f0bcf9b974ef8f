//! Fitting the population distributions to aggregate human play.
//!
//! For every candidate setting the game is simulated under several seeds,
//! round-1 and round-10 statistics are averaged over the seeds, and the
//! averaged statistics are scored against the human targets by NRMSE.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::game::{run_game, PopulationParams, RunLog, VwSampling};
use crate::model::GameConfig;
use crate::stats::{mean, std_dev};

/// Rounds the measures are compared on.
pub const CALIBRATION_ROUNDS: [usize; 2] = [1, 10];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerformanceMeasures {
    /// Mean demand.
    pub mu_d: f64,
    /// Standard deviation of demands.
    pub sigma_d: f64,
    /// Acceptance rate.
    pub mu_a: f64,
    /// Standard deviation of the acceptance indicator.
    pub sigma_a: f64,
    /// Standard deviation of value-only demands across proposers.
    pub sigma_vd: f64,
}

impl PerformanceMeasures {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.mu_d,
            self.sigma_d,
            self.mu_a,
            self.sigma_a,
            self.sigma_vd,
        ]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self {
            mu_d: a[0],
            sigma_d: a[1],
            mu_a: a[2],
            sigma_a: a[3],
            sigma_vd: a[4],
        }
    }
}

/// Human statistics for rounds 1 and 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalTargets {
    pub round1: PerformanceMeasures,
    pub round10: PerformanceMeasures,
}

impl EmpiricalTargets {
    pub const HUMAN: EmpiricalTargets = EmpiricalTargets {
        round1: PerformanceMeasures {
            mu_d: 561.8,
            sigma_d: 128.9,
            mu_a: 0.806,
            sigma_a: 0.40,
            sigma_vd: 128.9,
        },
        round10: PerformanceMeasures {
            mu_d: 584.2,
            sigma_d: 98.66,
            mu_a: 0.868,
            sigma_a: 0.34,
            sigma_vd: 122.5,
        },
    };
}

impl Default for EmpiricalTargets {
    fn default() -> Self {
        Self::HUMAN
    }
}

/// Statistics over the records of one round.
pub fn measure(log: &RunLog, round: usize) -> Result<PerformanceMeasures> {
    let records = log.round_records(round);
    if records.is_empty() {
        return Err(Error::RoundOutOfRange(round));
    }
    let demands: Vec<f64> = records.iter().map(|r| f64::from(r.demand)).collect();
    let accepts: Vec<f64> = records
        .iter()
        .map(|r| f64::from(u8::from(r.accepted)))
        .collect();
    let value_demands: Vec<f64> = log
        .proposers
        .iter()
        .map(|a| f64::from(a.value_demand))
        .collect();
    Ok(PerformanceMeasures {
        mu_d: mean(&demands),
        sigma_d: std_dev(&demands),
        mu_a: mean(&accepts),
        sigma_a: std_dev(&accepts),
        sigma_vd: std_dev(&value_demands),
    })
}

/// Component-wise mean over seeds.
pub fn average_measures(per_seed: &[[PerformanceMeasures; 2]]) -> [PerformanceMeasures; 2] {
    let mut out = [PerformanceMeasures::default(); 2];
    for (r, slot) in out.iter_mut().enumerate() {
        let mut acc = [0.0; 5];
        for m in per_seed {
            for (a, v) in acc.iter_mut().zip(m[r].as_array()) {
                *a += v;
            }
        }
        let n = per_seed.len().max(1) as f64;
        *slot = PerformanceMeasures::from_array(acc.map(|a| a / n));
    }
    out
}

/// Root mean square of the ten target-relative errors, times 100.
pub fn nrmse(measured: &[PerformanceMeasures; 2], targets: &EmpiricalTargets) -> f64 {
    let pairs = measured[0]
        .as_array()
        .into_iter()
        .zip(targets.round1.as_array())
        .chain(
            measured[1]
                .as_array()
                .into_iter()
                .zip(targets.round10.as_array()),
        );
    let mut sq = 0.0;
    let mut n = 0usize;
    for (m, t) in pairs {
        let rel = (m - t) / t;
        sq += rel * rel;
        n += 1;
    }
    100.0 * (sq / n as f64).sqrt()
}

/// Evenly spaced inclusive values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn fixed(v: f64) -> Self {
        Self {
            min: v,
            max: v,
            step: 1.0,
        }
    }

    /// Parses `min:max:step` or a single fixed value.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("bad axis `{s}`, expected `min:max:step` or a number");
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [v] => Ok(Self::fixed(v)),
            [min, max, step] if step > 0.0 && max >= min => Ok(Self { min, max, step }),
            _ => Err(bad()),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.step <= 0.0 || self.max < self.min {
            return vec![self.min];
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // rounded to 1e-9 so that e.g. 0.1 * 3 prints as 0.3
        (0..n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

/// Cartesian grid over the four population parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationGrid {
    pub mu_di: Axis,
    pub sigma_di: Axis,
    pub mu_vw: Axis,
    pub sigma_vw: Axis,
    pub vw_sampling: VwSampling,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            mu_di: Axis {
                min: -1.0,
                max: 1.0,
                step: 0.1,
            },
            sigma_di: Axis::fixed(PopulationParams::CALIBRATED.sigma_di),
            mu_vw: Axis {
                min: 0.0,
                max: 1.0,
                step: 0.1,
            },
            sigma_vw: Axis::fixed(PopulationParams::CALIBRATED.sigma_vw),
            vw_sampling: VwSampling::Clamp,
        }
    }
}

impl CalibrationGrid {
    pub fn points(&self) -> Vec<PopulationParams> {
        let mut out = Vec::new();
        for &mu_di in &self.mu_di.values() {
            for &sigma_di in &self.sigma_di.values() {
                for &mu_vw in &self.mu_vw.values() {
                    for &sigma_vw in &self.sigma_vw.values() {
                        out.push(PopulationParams {
                            mu_di,
                            sigma_di,
                            mu_vw,
                            sigma_vw,
                            vw_sampling: self.vw_sampling,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub params: PopulationParams,
    pub nrmse: f64,
    /// Seed-averaged measures for rounds 1 and 10.
    pub measures: [PerformanceMeasures; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub best_params: PopulationParams,
    pub nrmse: f64,
    pub table: Vec<CalibrationRow>,
}

/// Seed-averaged round-1 and round-10 measures for one setting.
pub fn simulate_setting(
    params: &PopulationParams,
    seeds: RangeInclusive<u64>,
    config: &GameConfig,
) -> Result<[PerformanceMeasures; 2]> {
    if config.rounds < CALIBRATION_ROUNDS[1] {
        return Err(Error::InvalidConfig(format!(
            "calibration needs at least {} rounds",
            CALIBRATION_ROUNDS[1]
        )));
    }
    let per_seed = seeds
        .map(|s| {
            let log = run_game(params, config, s)?;
            Ok([
                measure(&log, CALIBRATION_ROUNDS[0])?,
                measure(&log, CALIBRATION_ROUNDS[1])?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(average_measures(&per_seed))
}

/// Scores every grid setting and returns the one with the lowest NRMSE
/// (first in grid order on ties) with the full table.
pub fn calibrate(
    grid: &[PopulationParams],
    seeds: RangeInclusive<u64>,
    config: &GameConfig,
    targets: &EmpiricalTargets,
) -> Result<CalibrationResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("calibration grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed range is empty".into()));
    }
    let table = grid
        .par_iter()
        .map(|p| {
            let measures = simulate_setting(p, seeds.clone(), config)?;
            Ok(CalibrationRow {
                params: *p,
                nrmse: nrmse(&measures, targets),
                measures,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = table
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.nrmse.total_cmp(&b.1.nrmse).then(a.0.cmp(&b.0)))
        .map(|(_, r)| *r)
        .expect("non-empty table");
    Ok(CalibrationResult {
        best_params: best.params,
        nrmse: best.nrmse,
        table,
    })
}

pub const CALIBRATION_HEADER: [&str; 16] = [
    "mu_di",
    "sigma_di",
    "mu_vw",
    "sigma_vw",
    "nrmse",
    "r1_mu_d",
    "r1_sigma_d",
    "r1_mu_a",
    "r1_sigma_a",
    "r1_sigma_vd",
    "r10_mu_d",
    "r10_sigma_d",
    "r10_mu_a",
    "r10_sigma_a",
    "r10_sigma_vd",
    "best",
];

impl CalibrationResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CALIBRATION_HEADER)?;
        for row in &self.table {
            let p = row.params;
            let mut rec = vec![
                fmt_sig(p.mu_di),
                fmt_sig(p.sigma_di),
                fmt_sig(p.mu_vw),
                fmt_sig(p.sigma_vw),
                fmt_sig(row.nrmse),
            ];
            rec.extend(row.measures.iter().flat_map(|m| m.as_array()).map(fmt_sig));
            rec.push(u8::from(p == self.best_params && row.nrmse == self.nrmse).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
