//! C ABI for `valnorm`.
//!
//! Every fallible function returns a [`VnStatus`]; on failure the message is
//! available from [`vn_last_error`] on the same thread. Objects crossing the
//! boundary are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use valnorm::estimation::{norm_inputs_for_estimation, Estimator, GridSpec, NormMode, SolutionSet};
use valnorm::game::{run_game, PopulationParams, RunLog, VwSampling};
use valnorm::model::{self, GameConfig, NormSource, NormValue, Profile};
use valnorm::reduction::{ElicitationSession, Method};
use valnorm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Io = 4,
    Internal = 5,
}

pub const VN_VW_CLAMP: u32 = 0;
pub const VN_VW_TRUNCATE: u32 = 1;

pub const VN_NORM_ORACLE: u32 = 0;
pub const VN_NORM_MEAN: u32 = 1;

pub const VN_METHOD_AR_SS: u32 = 0;
pub const VN_METHOD_AR_C: u32 = 1;
pub const VN_METHOD_AR_DIRECT: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnPopulationParams {
    pub mu_di: f64,
    pub sigma_di: f64,
    pub mu_vw: f64,
    pub sigma_vw: f64,
    /// `VN_VW_CLAMP` or `VN_VW_TRUNCATE`.
    pub vw_sampling: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VnGameConfig {
    pub pie: u32,
    pub rounds: u32,
    pub proposers: u32,
    pub responders: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnGridSpec {
    pub di_min: f64,
    pub di_max: f64,
    pub vw_min: f64,
    pub vw_max: f64,
    pub step: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnRoundRecord {
    pub round: u32,
    pub proposer_id: u32,
    pub responder_id: u32,
    pub demand: u32,
    pub accepted: bool,
    pub norm_value: f64,
    /// 0 computed, 1 drawn, 2 counterfactual, 3 probed.
    pub norm_source: u32,
    pub threshold: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VnReductionReport {
    pub initial_solutions: u32,
    pub final_solutions: u32,
    pub interactions: u32,
    pub final_fitness: f64,
}

/// Game history returned by [`vn_run_game`].
pub struct VnRunLog(RunLog);

/// Grid estimator with cached value demands.
pub struct VnEstimator(Estimator);

/// Minimum-fitness grid points.
pub struct VnSolutionSet(SolutionSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VnStatus, msg: impl Into<String>) -> VnStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> VnStatus {
    match e {
        Error::DemandOutOfRange { .. }
        | Error::UnknownProposer(_)
        | Error::RoundsUnavailable { .. }
        | Error::RoundOutOfRange(_) => VnStatus::OutOfRange,
        Error::InvalidConfig(_)
        | Error::InvalidGrid(_)
        | Error::EmptyTrace
        | Error::EmptyNormRange { .. }
        | Error::ConfigFile { .. } => VnStatus::InvalidArgument,
        Error::Io(_) | Error::Csv(_) => VnStatus::Io,
    }
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), VnStatus>) -> VnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VnStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(VnStatus::Internal, "panic inside valnorm"),
    }
}

fn lift<T>(r: valnorm::Result<T>) -> Result<T, VnStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

/// # Safety
/// `p` must be null or valid for reads of `T`.
unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, VnStatus> {
    p.as_ref()
        .ok_or_else(|| fail(VnStatus::NullPointer, format!("{what} is null")))
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn put<T>(p: *mut T, value: T, what: &str) -> Result<(), VnStatus> {
    if p.is_null() {
        return Err(fail(VnStatus::NullPointer, format!("{what} is null")));
    }
    p.write(value);
    Ok(())
}

/// # Safety
/// `p` must be null or a nul-terminated string.
unsafe fn path_arg(p: *const c_char) -> Result<String, VnStatus> {
    if p.is_null() {
        return Err(fail(VnStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(VnStatus::InvalidArgument, "path is not UTF-8"))
}

fn sampling(code: u32) -> Result<VwSampling, VnStatus> {
    match code {
        VN_VW_CLAMP => Ok(VwSampling::Clamp),
        VN_VW_TRUNCATE => Ok(VwSampling::Truncate),
        _ => Err(fail(
            VnStatus::InvalidArgument,
            format!("unknown vw sampling {code}"),
        )),
    }
}

fn norm_mode(code: u32) -> Result<NormMode, VnStatus> {
    match code {
        VN_NORM_ORACLE => Ok(NormMode::Oracle),
        VN_NORM_MEAN => Ok(NormMode::Mean),
        _ => Err(fail(
            VnStatus::InvalidArgument,
            format!("unknown norm mode {code}"),
        )),
    }
}

fn method(code: u32) -> Result<Method, VnStatus> {
    match code {
        VN_METHOD_AR_SS => Ok(Method::SearchSpace),
        VN_METHOD_AR_C => Ok(Method::Counterfactual),
        VN_METHOD_AR_DIRECT => Ok(Method::Direct),
        _ => Err(fail(
            VnStatus::InvalidArgument,
            format!("unknown method {code}"),
        )),
    }
}

impl TryFrom<&VnPopulationParams> for PopulationParams {
    type Error = VnStatus;
    fn try_from(p: &VnPopulationParams) -> Result<Self, VnStatus> {
        Ok(PopulationParams {
            mu_di: p.mu_di,
            sigma_di: p.sigma_di,
            mu_vw: p.mu_vw,
            sigma_vw: p.sigma_vw,
            vw_sampling: sampling(p.vw_sampling)?,
        })
    }
}

impl From<&VnGameConfig> for GameConfig {
    fn from(c: &VnGameConfig) -> Self {
        GameConfig {
            pie: c.pie,
            rounds: c.rounds as usize,
            proposers: c.proposers as usize,
            responders: c.responders as usize,
        }
    }
}

impl From<&VnGridSpec> for GridSpec {
    fn from(g: &VnGridSpec) -> Self {
        GridSpec {
            di_min: g.di_min,
            di_max: g.di_max,
            vw_min: g.vw_min,
            vw_max: g.vw_max,
            step: g.step,
        }
    }
}

fn source_code(s: NormSource) -> u32 {
    match s {
        NormSource::Computed => 0,
        NormSource::Drawn => 1,
        NormSource::Counterfactual => 2,
        NormSource::Probed => 3,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `vn_` call on the same thread.
#[no_mangle]
pub extern "C" fn vn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Calibrated population parameters (clamped `vw` sampling).
#[no_mangle]
pub extern "C" fn vn_default_population() -> VnPopulationParams {
    let p = PopulationParams::CALIBRATED;
    VnPopulationParams {
        mu_di: p.mu_di,
        sigma_di: p.sigma_di,
        mu_vw: p.mu_vw,
        sigma_vw: p.sigma_vw,
        vw_sampling: VN_VW_CLAMP,
    }
}

#[no_mangle]
pub extern "C" fn vn_default_game() -> VnGameConfig {
    let g = GameConfig::default();
    VnGameConfig {
        pie: g.pie,
        rounds: g.rounds as u32,
        proposers: g.proposers as u32,
        responders: g.responders as u32,
    }
}

#[no_mangle]
pub extern "C" fn vn_default_grid() -> VnGridSpec {
    let g = GridSpec::default();
    VnGridSpec {
        di_min: g.di_min,
        di_max: g.di_max,
        vw_min: g.vw_min,
        vw_max: g.vw_max,
        step: g.step,
    }
}

/// Value-only utility of demanding `demand` out of `pie`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_utility(demand: u32, di: f64, pie: u32, out: *mut f64) -> VnStatus {
    guard(|| {
        let u = lift(model::utility(demand, di, pie))?;
        put(out, u, "out")
    })
}

/// Utility-maximising demand.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_value_demand(di: f64, pie: u32, out: *mut u32) -> VnStatus {
    guard(|| {
        if pie == 0 || !di.is_finite() {
            return Err(fail(
                VnStatus::InvalidArgument,
                "pie must be positive and di finite",
            ));
        }
        put(out, model::value_demand(di, pie), "out")
    })
}

/// Demand of an agent with profile `(di, vw)` facing `norm`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_combined_demand(
    di: f64,
    vw: f64,
    norm: f64,
    pie: u32,
    out: *mut u32,
) -> VnStatus {
    guard(|| {
        if pie == 0 || !di.is_finite() || !vw.is_finite() || !norm.is_finite() {
            return Err(fail(
                VnStatus::InvalidArgument,
                "pie must be positive and inputs finite",
            ));
        }
        let d = model::combined_demand(
            &Profile::new(di, vw),
            &NormValue::new(norm, NormSource::Probed),
            pie,
        );
        put(out, d, "out")
    })
}

/// Plays one game.
///
/// # Safety
/// `params` and `config` must point to valid structs, `out` must be valid
/// for writes. The handle written to `out` is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn vn_run_game(
    params: *const VnPopulationParams,
    config: *const VnGameConfig,
    seed: u64,
    out: *mut *mut VnRunLog,
) -> VnStatus {
    guard(|| {
        let params = PopulationParams::try_from(get(params, "params")?)?;
        let config = GameConfig::from(get(config, "config")?);
        let log = lift(run_game(&params, &config, seed))?;
        put(out, Box::into_raw(Box::new(VnRunLog(log))), "out")
    })
}

/// # Safety
/// `log` must be null or a handle from [`vn_run_game`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vn_run_log_free(log: *mut VnRunLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Number of records (rounds times proposers).
///
/// # Safety
/// `log` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_run_log_len(log: *const VnRunLog, out: *mut usize) -> VnStatus {
    guard(|| put(out, get(log, "log")?.0.records.len(), "out"))
}

/// Copies record `index` in play order.
///
/// # Safety
/// `log` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_run_log_record(
    log: *const VnRunLog,
    index: usize,
    out: *mut VnRoundRecord,
) -> VnStatus {
    guard(|| {
        let log = &get(log, "log")?.0;
        let r = log
            .records
            .get(index)
            .ok_or_else(|| fail(VnStatus::OutOfRange, format!("record {index} out of range")))?;
        put(
            out,
            VnRoundRecord {
                round: r.round as u32,
                proposer_id: r.proposer_id as u32,
                responder_id: r.responder_id as u32,
                demand: r.demand,
                accepted: r.accepted,
                norm_value: r.proposer_norm.value,
                norm_source: source_code(r.proposer_norm.source),
                threshold: r.responder_threshold,
            },
            "out",
        )
    })
}

/// Writes `runs.csv`-format rows to `path`, with header.
///
/// # Safety
/// `log` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vn_run_log_write_csv(
    log: *const VnRunLog,
    path: *const c_char,
) -> VnStatus {
    guard(|| {
        let log = &get(log, "log")?.0;
        let path = path_arg(path)?;
        let f = lift(File::create(&path).map_err(Error::from))?;
        lift(log.write_runs_csv(BufWriter::new(f), true))
    })
}

/// # Safety
/// `grid` must point to a valid struct and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_estimator_new(
    grid: *const VnGridSpec,
    pie: u32,
    tolerance: f64,
    out: *mut *mut VnEstimator,
) -> VnStatus {
    guard(|| {
        let grid = GridSpec::from(get(grid, "grid")?);
        if tolerance.is_nan() || tolerance < 0.0 {
            return Err(fail(
                VnStatus::InvalidArgument,
                "tolerance must be non-negative",
            ));
        }
        let est = lift(Estimator::new(grid, pie))?.with_tolerance(tolerance);
        put(out, Box::into_raw(Box::new(VnEstimator(est))), "out")
    })
}

/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vn_estimator_free(est: *mut VnEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Estimates proposer `proposer_id` from its first `m` rounds of `log`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_estimate(
    est: *const VnEstimator,
    log: *const VnRunLog,
    proposer_id: usize,
    m: usize,
    mode: u32,
    out: *mut *mut VnSolutionSet,
) -> VnStatus {
    guard(|| {
        let est = &get(est, "estimator")?.0;
        let log = &get(log, "log")?.0;
        let trace = lift(norm_inputs_for_estimation(
            log,
            proposer_id,
            m,
            norm_mode(mode)?,
        ))?;
        let set = lift(est.estimate(&trace))?;
        put(out, Box::into_raw(Box::new(VnSolutionSet(set))), "out")
    })
}

/// Runs one elicitation strategy. `norm_lo`/`norm_hi` bound AR-DIRECT
/// probes and are ignored by the other methods. `out_set` may be null.
///
/// # Safety
/// Handles must be live, `report` valid for writes, `out_set` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_reduce(
    est: *const VnEstimator,
    log: *const VnRunLog,
    proposer_id: usize,
    m: usize,
    mode: u32,
    method_code: u32,
    max_interactions: usize,
    norm_lo: u32,
    norm_hi: u32,
    report: *mut VnReductionReport,
    out_set: *mut *mut VnSolutionSet,
) -> VnStatus {
    guard(|| {
        let est = &get(est, "estimator")?.0;
        let log = &get(log, "log")?.0;
        let method = method(method_code)?;
        let mut session = lift(ElicitationSession::from_log(
            est,
            log,
            proposer_id,
            m,
            norm_mode(mode)?,
            max_interactions,
        ))?;
        let r = lift(session.run(method, (norm_lo, norm_hi)))?;
        put(
            report,
            VnReductionReport {
                initial_solutions: r.initial_solutions as u32,
                final_solutions: r.final_solutions as u32,
                interactions: r.interactions as u32,
                final_fitness: r.final_fitness,
            },
            "report",
        )?;
        if !out_set.is_null() {
            out_set.write(Box::into_raw(Box::new(VnSolutionSet(
                session.solutions().clone(),
            ))));
        }
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vn_solution_set_free(set: *mut VnSolutionSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// # Safety
/// `set` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_solution_set_len(
    set: *const VnSolutionSet,
    out: *mut usize,
) -> VnStatus {
    guard(|| put(out, get(set, "set")?.0.len(), "out"))
}

/// Shared minimum fitness (mean absolute demand error).
///
/// # Safety
/// `set` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_solution_set_fitness(
    set: *const VnSolutionSet,
    out: *mut f64,
) -> VnStatus {
    guard(|| put(out, get(set, "set")?.0.fitness, "out"))
}

/// # Safety
/// `set` must be a live handle; `di` and `vw` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vn_solution_set_point(
    set: *const VnSolutionSet,
    index: usize,
    di: *mut f64,
    vw: *mut f64,
) -> VnStatus {
    guard(|| {
        let set = &get(set, "set")?.0;
        let p = set
            .points
            .get(index)
            .ok_or_else(|| fail(VnStatus::OutOfRange, format!("point {index} out of range")))?;
        put(di, p.di, "di")?;
        put(vw, p.vw, "vw")
    })
}

/// # Safety
/// `set` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vn_solution_set_write_csv(
    set: *const VnSolutionSet,
    path: *const c_char,
) -> VnStatus {
    guard(|| {
        let set = &get(set, "set")?.0;
        let path = path_arg(path)?;
        let f = lift(File::create(&path).map_err(Error::from))?;
        lift(set.write_csv(BufWriter::new(f)))
    })
}
