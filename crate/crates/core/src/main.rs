use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use valnorm::calibration::{calibrate, Axis, CalibrationGrid, EmpiricalTargets};
use valnorm::estimation::{norm_inputs_for_estimation, Estimator};
use valnorm::experiments::{
    experiment_estimation, experiment_reduction, write_fig2, write_fig3, write_table2,
    ExperimentConfig,
};
use valnorm::format::fmt_sig;
use valnorm::game::{run_game, RunLog, VwSampling};
use valnorm::reduction::{ElicitationSession, Method};
use valnorm::rng::run_seed;
use valnorm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "valnorm",
    version,
    about = "Value/norm Ultimatum Game simulator and profile estimator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Play games and write runs.csv and population.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of games, seeded master, master+1, ...
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Grid-search the population parameters against human statistics.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Seeds per setting, starting at the master seed.
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        /// `min:max:step` or a single value.
        #[arg(long, default_value = "-1:1:0.1", allow_hyphen_values = true)]
        mu_di: String,
        #[arg(long, default_value = "0.25")]
        sigma_di: String,
        #[arg(long, default_value = "0:1:0.1", allow_hyphen_values = true)]
        mu_vw: String,
        #[arg(long, default_value = "1.14")]
        sigma_vw: String,
    },
    /// Estimate one proposer of one game from its first `m` rounds.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposer: usize,
        #[arg(long)]
        m: usize,
    },
    /// Run one elicitation strategy on one proposer.
    Reduce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposer: usize,
        #[arg(long)]
        m: usize,
        /// AR_SS, AR_C or AR_DIRECT.
        #[arg(long)]
        method: String,
    },
    /// Batch experiments.
    Experiment {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        common: Common,
        /// Number of games.
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Fig2,
    Fig3,
    Table2,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("valnorm: error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
/// Simulation and calibration clamp `vw` unless told otherwise; the
/// estimation commands default to truncated sampling.
fn load(common: &Common, sampling: VwSampling) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.population.vw_sampling = sampling;
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(Error::InvalidConfig)?;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn game(cfg: &ExperimentConfig) -> Result<RunLog> {
    run_game(&cfg.population, &cfg.game, cfg.master_seed)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, runs } => {
            let cfg = load(&common, VwSampling::Clamp)?;
            cfg.game.validate()?;
            cfg.population.validate()?;
            let mut runs_csv = create(&cfg.output_dir, "runs.csv")?;
            let mut pop_csv = create(&cfg.output_dir, "population.csv")?;
            for i in 0..runs {
                let log = run_game(&cfg.population, &cfg.game, run_seed(cfg.master_seed, i))?;
                log.write_runs_csv(&mut runs_csv, i == 0)?;
                log.write_population_csv(&mut pop_csv, i == 0)?;
            }
            runs_csv.flush()?;
            pop_csv.flush()?;
        }
        Command::Calibrate {
            common,
            seeds,
            mu_di,
            sigma_di,
            mu_vw,
            sigma_vw,
        } => {
            let cfg = load(&common, VwSampling::Clamp)?;
            if seeds == 0 {
                return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
            }
            let axis = |s: &str| Axis::parse(s).map_err(Error::InvalidConfig);
            let grid = CalibrationGrid {
                mu_di: axis(&mu_di)?,
                sigma_di: axis(&sigma_di)?,
                mu_vw: axis(&mu_vw)?,
                sigma_vw: axis(&sigma_vw)?,
                vw_sampling: cfg.population.vw_sampling,
            };
            let first = cfg.master_seed;
            let last = first
                .checked_add(seeds - 1)
                .ok_or_else(|| Error::InvalidConfig("seed range overflows".into()))?;
            let result = calibrate(
                &grid.points(),
                first..=last,
                &cfg.game,
                &EmpiricalTargets::HUMAN,
            )?;
            let mut w = create(&cfg.output_dir, "calibration.csv")?;
            result.write_csv(&mut w)?;
            w.flush()?;
            let p = result.best_params;
            println!(
                "best mu_di={} sigma_di={} mu_vw={} sigma_vw={} nrmse={}",
                fmt_sig(p.mu_di),
                fmt_sig(p.sigma_di),
                fmt_sig(p.mu_vw),
                fmt_sig(p.sigma_vw),
                fmt_sig(result.nrmse)
            );
        }
        Command::Estimate {
            common,
            proposer,
            m,
        } => {
            let cfg = load(&common, VwSampling::Truncate)?;
            let log = game(&cfg)?;
            let trace = norm_inputs_for_estimation(&log, proposer, m, cfg.norm_mode)?;
            let est = Estimator::new(cfg.grid, cfg.game.pie)?.with_tolerance(cfg.tolerance);
            let solutions = est.estimate(&trace)?;
            match &common.out {
                Some(_) => {
                    let mut w = create(&cfg.output_dir, "solutions.csv")?;
                    solutions.write_csv(&mut w)?;
                    w.flush()?;
                }
                None => solutions.write_csv(io::stdout().lock())?,
            }
        }
        Command::Reduce {
            common,
            proposer,
            m,
            method,
        } => {
            let cfg = load(&common, VwSampling::Truncate)?;
            let method = Method::parse(&method)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{method}`")))?;
            let log = game(&cfg)?;
            let est = Estimator::new(cfg.grid, cfg.game.pie)?.with_tolerance(cfg.tolerance);
            let mut session = ElicitationSession::from_log(
                &est,
                &log,
                proposer,
                m,
                cfg.norm_mode,
                cfg.max_interactions,
            )?;
            let report = session.run(method, cfg.direct_range)?;
            let write = |mut w: &mut dyn Write| -> Result<()> {
                writeln!(
                    w,
                    "method,initial_solutions,final_solutions,interactions,final_fitness"
                )?;
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    report.method,
                    report.initial_solutions,
                    report.final_solutions,
                    report.interactions,
                    fmt_sig(report.final_fitness)
                )?;
                writeln!(w)?;
                session.solutions().write_csv(&mut w)
            };
            match &common.out {
                Some(_) => {
                    let mut w = create(&cfg.output_dir, "reduction.csv")?;
                    write(&mut w)?;
                    w.flush()?;
                }
                None => write(&mut io::stdout().lock())?,
            }
        }
        Command::Experiment {
            which,
            common,
            runs,
        } => {
            let mut cfg = load(&common, VwSampling::Truncate)?;
            if let Some(n) = runs {
                cfg.n_runs = n;
            }
            match which {
                Which::Fig2 => write_fig2(&cfg, &experiment_estimation(&cfg)?)?,
                Which::Fig3 => write_fig3(&cfg, &experiment_reduction(&cfg)?)?,
                Which::Table2 => write_table2(&cfg, &experiment_reduction(&cfg)?)?,
            }
        }
    }
    Ok(())
}
