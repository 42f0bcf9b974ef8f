//! Batch experiments: estimate every proposer of many games at several
//! observation lengths, optionally run the elicitation strategies on the
//! ambiguous cases, and aggregate.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{norm_inputs_for_estimation, Estimator, GridSpec, NormMode};
use crate::format::fmt_sig;
use crate::game::{run_game, PopulationParams, VwSampling};
use crate::model::GameConfig;
use crate::reduction::{ElicitationSession, Method, DEFAULT_MAX_INTERACTIONS};
use crate::rng::run_seed;
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_runs: usize,
    /// Observation lengths `m` to estimate from.
    pub rounds_range: Vec<usize>,
    pub norm_mode: NormMode,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub grid: GridSpec,
    pub population: PopulationParams,
    pub game: GameConfig,
    /// Budget for AR-SS and AR-DIRECT. AR-C always uses `m`.
    pub max_interactions: usize,
    pub direct_range: (u32, u32),
    /// Fitness tolerance for membership in the solution set.
    pub tolerance: f64,
    /// Observation length summarised in `table2.csv`.
    pub table_m: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_runs: 100,
            rounds_range: (1..=20).collect(),
            norm_mode: NormMode::Oracle,
            methods: vec![Method::SearchSpace, Method::Counterfactual],
            output_dir: PathBuf::from("out"),
            master_seed: 1,
            grid: GridSpec::default(),
            population: PopulationParams {
                vw_sampling: VwSampling::Truncate,
                ..PopulationParams::CALIBRATED
            },
            game: GameConfig::default(),
            max_interactions: DEFAULT_MAX_INTERACTIONS,
            direct_range: (0, 1000),
            tolerance: 0.0,
            table_m: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.grid.validate()?;
        self.population.validate()?;
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
        }
        if self.rounds_range.is_empty() {
            return Err(Error::InvalidConfig("rounds range is empty".into()));
        }
        if let Some(&m) = self
            .rounds_range
            .iter()
            .find(|&&m| m == 0 || m > self.game.rounds)
        {
            return Err(Error::InvalidConfig(format!(
                "m = {m} is outside 1..={}",
                self.game.rounds
            )));
        }
        let (lo, hi) = self.direct_range;
        if lo > hi || hi > self.game.pie {
            return Err(Error::EmptyNormRange { lo, hi });
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidConfig(
                "tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Applies the `key = value` lines of `path` on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::ConfigFile {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigFile {
                path: path.to_owned(),
                msg: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| Error::ConfigFile {
                    path: path.to_owned(),
                    msg: format!("line {}: {msg}", lineno + 1),
                })?;
        }
        Ok(())
    }

    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse()
                .map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        match key {
            "n_runs" | "runs" => self.n_runs = num(key, value)?,
            "rounds_range" | "m" => self.rounds_range = parse_range(value)?,
            "norm_mode" => {
                self.norm_mode =
                    NormMode::parse(value).ok_or_else(|| format!("unknown norm mode `{value}`"))?
            }
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Method::parse(s).ok_or_else(|| format!("unknown method `{s}`")))
                    .collect::<std::result::Result<_, _>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "di_min" => self.grid.di_min = num(key, value)?,
            "di_max" => self.grid.di_max = num(key, value)?,
            "vw_min" => self.grid.vw_min = num(key, value)?,
            "vw_max" => self.grid.vw_max = num(key, value)?,
            "step" => self.grid.step = num(key, value)?,
            "mu_di" => self.population.mu_di = num(key, value)?,
            "sigma_di" => self.population.sigma_di = num(key, value)?,
            "mu_vw" => self.population.mu_vw = num(key, value)?,
            "sigma_vw" => self.population.sigma_vw = num(key, value)?,
            "vw_sampling" => {
                self.population.vw_sampling = VwSampling::parse(value)
                    .ok_or_else(|| format!("unknown vw sampling `{value}`"))?
            }
            "pie" => self.game.pie = num(key, value)?,
            "game_rounds" => self.game.rounds = num(key, value)?,
            "proposers" => self.game.proposers = num(key, value)?,
            "responders" => self.game.responders = num(key, value)?,
            "max_interactions" => self.max_interactions = num(key, value)?,
            "direct_lo" => self.direct_range.0 = num(key, value)?,
            "direct_hi" => self.direct_range.1 = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "table_m" => self.table_m = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

/// Parses `a-b`, `a..b` (inclusive) or a comma list.
pub fn parse_range(s: &str) -> std::result::Result<Vec<usize>, String> {
    let bad = || format!("bad range `{s}`");
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..").or_else(|| s.split_once('-')) {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Baseline estimation or one of the strategies run on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Estimation,
    Reduction(Method),
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Estimation => "Estimation",
            Arm::Reduction(m) => m.as_str(),
        }
    }
}

/// Outcome for one (run, proposer, m, arm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseResult {
    pub arm: Arm,
    pub run_seed: u64,
    pub proposer_id: usize,
    pub m: usize,
    pub initial_solutions: usize,
    pub n_solutions: usize,
    pub interactions: usize,
    /// Whether the strategy ran, i.e. the baseline was ambiguous.
    pub reduced: bool,
    pub fitness: f64,
    /// Pooled RMSE in demand units.
    pub rmse: f64,
    pub std_or: f64,
    pub std_di_hat: f64,
    pub std_vw_hat: f64,
}

/// Averages over all cases of one arm at one `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub arm: Arm,
    pub m: usize,
    pub cases: usize,
    /// Mean pooled RMSE divided by the pie size.
    pub rmse: f64,
    pub pct_unique: f64,
    pub mean_solutions: f64,
    /// Mean interactions over the cases the strategy ran on.
    pub mean_interactions: f64,
    pub std_or: f64,
    pub std_di_hat: f64,
    pub std_vw_hat: f64,
}

impl AggregateRow {
    pub fn from_cases(arm: Arm, m: usize, cases: &[CaseResult], pie: u32) -> Self {
        let pick = |f: fn(&CaseResult) -> f64| mean(&cases.iter().map(f).collect::<Vec<_>>());
        let ran: Vec<f64> = cases
            .iter()
            .filter(|c| c.reduced)
            .map(|c| c.interactions as f64)
            .collect();
        let unique = cases.iter().filter(|c| c.n_solutions == 1).count();
        Self {
            arm,
            m,
            cases: cases.len(),
            rmse: pick(|c| c.rmse) / f64::from(pie),
            pct_unique: if cases.is_empty() {
                0.0
            } else {
                100.0 * unique as f64 / cases.len() as f64
            },
            mean_solutions: pick(|c| c.n_solutions as f64),
            mean_interactions: mean(&ran),
            std_or: pick(|c| c.std_or),
            std_di_hat: pick(|c| c.std_di_hat),
            std_vw_hat: pick(|c| c.std_vw_hat),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cases: Vec<CaseResult>,
    pub rows: Vec<AggregateRow>,
}

impl ExperimentOutput {
    pub fn row(&self, arm: Arm, m: usize) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.arm == arm && r.m == m)
    }
}

/// Groups cases by `(arm, m)` in arm-then-m order.
pub fn aggregate(cases: &[CaseResult], pie: u32) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Arm, usize), Vec<CaseResult>> = BTreeMap::new();
    for c in cases {
        groups.entry((c.arm, c.m)).or_default().push(*c);
    }
    groups
        .into_iter()
        .map(|((arm, m), cs)| AggregateRow::from_cases(arm, m, &cs, pie))
        .collect()
}

fn run_cases(config: &ExperimentConfig, methods: &[Method]) -> Result<Vec<CaseResult>> {
    config.validate()?;
    let estimator = Estimator::new(config.grid, config.game.pie)?.with_tolerance(config.tolerance);
    let per_run: Vec<Result<Vec<CaseResult>>> = (0..config.n_runs)
        .into_par_iter()
        .map(|r| run_one(config, &estimator, methods, run_seed(config.master_seed, r)))
        .collect();
    let mut cases = Vec::new();
    for r in per_run {
        cases.extend(r?);
    }
    Ok(cases)
}

fn run_one(
    config: &ExperimentConfig,
    estimator: &Estimator,
    methods: &[Method],
    seed: u64,
) -> Result<Vec<CaseResult>> {
    let log = run_game(&config.population, &config.game, seed)?;
    let mut out = Vec::new();
    for proposer_id in 0..config.game.proposers {
        for &m in &config.rounds_range {
            let trace = norm_inputs_for_estimation(&log, proposer_id, m, config.norm_mode)?;
            let base = estimator.estimate(&trace)?;
            let baseline = CaseResult {
                arm: Arm::Estimation,
                run_seed: seed,
                proposer_id,
                m,
                initial_solutions: base.len(),
                n_solutions: base.len(),
                interactions: 0,
                reduced: false,
                fitness: base.fitness,
                rmse: base.rmse(&trace),
                std_or: trace.norm_std(),
                std_di_hat: base.di_std(),
                std_vw_hat: base.vw_std(),
            };
            out.push(baseline);
            for &method in methods {
                if !base.is_ambiguous() {
                    out.push(CaseResult {
                        arm: Arm::Reduction(method),
                        ..baseline
                    });
                    continue;
                }
                let sha = log.proposer(proposer_id).expect("proposer exists").profile;
                let history = log
                    .proposer_records(proposer_id)
                    .take(m)
                    .map(|r| (r.demand, r.accepted))
                    .collect();
                let mut session = ElicitationSession::with_solutions(
                    estimator,
                    sha,
                    history,
                    trace.clone(),
                    base.clone(),
                    config.max_interactions,
                );
                let report = session.run(method, config.direct_range)?;
                let sols = session.solutions();
                out.push(CaseResult {
                    arm: Arm::Reduction(method),
                    run_seed: seed,
                    proposer_id,
                    m,
                    initial_solutions: report.initial_solutions,
                    n_solutions: report.final_solutions,
                    interactions: report.interactions,
                    reduced: true,
                    fitness: report.final_fitness,
                    rmse: sols.rmse(session.trace()),
                    std_or: session.trace().norm_std(),
                    std_di_hat: sols.di_std(),
                    std_vw_hat: sols.vw_std(),
                });
            }
        }
    }
    Ok(out)
}

/// Baseline estimation only.
pub fn experiment_estimation(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cases = run_cases(config, &[])?;
    let rows = aggregate(&cases, config.game.pie);
    Ok(ExperimentOutput { cases, rows })
}

/// Baseline plus every configured strategy.
pub fn experiment_reduction(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cases = run_cases(config, &config.methods)?;
    let rows = aggregate(&cases, config.game.pie);
    Ok(ExperimentOutput { cases, rows })
}

pub const AGGREGATE_HEADER: [&str; 11] = [
    "method",
    "m",
    "cases",
    "rmse_over_pie",
    "pct_unique",
    "mean_solutions",
    "mean_interactions",
    "std_or",
    "std_di_hat",
    "std_vw_hat",
    "rmse",
];

fn aggregate_record(r: &AggregateRow, pie: u32) -> Vec<String> {
    vec![
        r.arm.as_str().to_string(),
        r.m.to_string(),
        r.cases.to_string(),
        fmt_sig(r.rmse),
        fmt_sig(r.pct_unique),
        fmt_sig(r.mean_solutions),
        fmt_sig(r.mean_interactions),
        fmt_sig(r.std_or),
        fmt_sig(r.std_di_hat),
        fmt_sig(r.std_vw_hat),
        fmt_sig(r.rmse * f64::from(pie)),
    ]
}

pub fn write_aggregate_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = &'a AggregateRow>,
    pie: u32,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record(aggregate_record(r, pie))?;
    }
    w.flush()?;
    Ok(())
}

pub const CASE_HEADER: [&str; 13] = [
    "method",
    "run_seed",
    "proposer_id",
    "m",
    "initial_solutions",
    "final_solutions",
    "interactions",
    "final_fitness",
    "rmse",
    "std_or",
    "std_di_hat",
    "std_vw_hat",
    "reduced",
];

pub fn write_cases_csv<'a, W: Write>(
    out: W,
    cases: impl IntoIterator<Item = &'a CaseResult>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CASE_HEADER)?;
    for c in cases {
        w.write_record([
            c.arm.as_str().to_string(),
            c.run_seed.to_string(),
            c.proposer_id.to_string(),
            c.m.to_string(),
            c.initial_solutions.to_string(),
            c.n_solutions.to_string(),
            c.interactions.to_string(),
            fmt_sig(c.fitness),
            fmt_sig(c.rmse),
            fmt_sig(c.std_or),
            fmt_sig(c.std_di_hat),
            fmt_sig(c.std_vw_hat),
            u8::from(c.reduced).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `estimates.csv` and `fig2.csv`.
pub fn write_fig2(config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    let dir = &config.output_dir;
    write_cases_csv(create(dir, "estimates.csv")?, &out.cases)?;
    write_aggregate_csv(
        create(dir, "fig2.csv")?,
        out.rows.iter().filter(|r| r.arm == Arm::Estimation),
        config.game.pie,
    )
}

/// Writes `estimates.csv`, `reduction.csv` and `fig3.csv`.
pub fn write_fig3(config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    let dir = &config.output_dir;
    write_cases_csv(
        create(dir, "estimates.csv")?,
        out.cases.iter().filter(|c| c.arm == Arm::Estimation),
    )?;
    write_cases_csv(
        create(dir, "reduction.csv")?,
        out.cases.iter().filter(|c| c.arm != Arm::Estimation),
    )?;
    write_aggregate_csv(create(dir, "fig3.csv")?, &out.rows, config.game.pie)
}

/// Writes `table2.csv`: one row per arm at `config.table_m`.
pub fn write_table2(config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(&config.output_dir, "table2.csv")?);
    w.write_record([
        "method",
        "m",
        "precision",
        "pct_unique",
        "rounds_on_ar",
        "std_or",
        "std_di_hat",
        "std_vw_hat",
    ])?;
    for r in out.rows.iter().filter(|r| r.m == config.table_m) {
        w.write_record([
            r.arm.as_str().to_string(),
            r.m.to_string(),
            fmt_sig(r.rmse),
            fmt_sig(r.pct_unique),
            if r.arm == Arm::Estimation {
                "-".to_string()
            } else {
                fmt_sig(r.mean_interactions)
            },
            fmt_sig(r.std_or),
            fmt_sig(r.std_di_hat),
            fmt_sig(r.std_vw_hat),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1-4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_range("1, 5,10").unwrap(), vec![1, 5, 10]);
        assert!(parse_range("5-1").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn config_keys() {
        let mut c = ExperimentConfig::default();
        c.set("methods", "AR_SS, AR_DIRECT").unwrap();
        assert_eq!(c.methods, vec![Method::SearchSpace, Method::Direct]);
        c.set("norm_mode", "mean_norm").unwrap();
        assert_eq!(c.norm_mode, NormMode::Mean);
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("n_runs", "many").is_err());
        c.set("m", "25").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_reduction_is_consistent() {
        let cfg = ExperimentConfig {
            n_runs: 2,
            rounds_range: vec![3],
            methods: Method::ALL.to_vec(),
            ..ExperimentConfig::default()
        };
        let out = experiment_reduction(&cfg).unwrap();
        assert_eq!(out.cases.len(), 2 * 16 * 4);
        let base: Vec<_> = out
            .cases
            .iter()
            .filter(|c| c.arm == Arm::Estimation)
            .collect();
        for c in out.cases.iter().filter(|c| c.arm != Arm::Estimation) {
            let b = base
                .iter()
                .find(|b| b.run_seed == c.run_seed && b.proposer_id == c.proposer_id)
                .unwrap();
            assert_eq!(c.initial_solutions, b.n_solutions);
            assert_eq!(c.reduced, b.n_solutions > 1);
            if !c.reduced {
                assert_eq!(c.interactions, 0);
            }
        }
        for r in &out.rows {
            assert!((0.0..=100.0).contains(&r.pct_unique));
            assert!(r.std_or >= 0.0 && r.std_di_hat >= 0.0 && r.std_vw_hat >= 0.0);
        }
    }
}
