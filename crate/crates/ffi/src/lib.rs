//! C interface to the twinfl solver and simulator.
//!
//! Objects are opaque handles created by `*_new`/`*_from_text` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`TwinflStatus`]; on failure [`twinfl_last_error`] describes what went
//! wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twinfl::scenario::Scenario;
use twinfl::sim::{self, Simulation};
use twinfl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwinflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Infeasible = 4,
    NotConverged = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Scenario configuration.
pub struct TwinflScenario {
    inner: Scenario,
}

/// Result of a single allocation round.
pub struct TwinflAllocation {
    inner: twinfl::baseline::Allocation,
}

/// A running simulation.
pub struct TwinflSimulation {
    inner: Simulation,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwinflClientDecision {
    pub id: usize,
    /// Transmit power in W.
    pub power: f64,
    /// CPU frequency in Hz; infinite for the ideal scheme.
    pub frequency: f64,
    /// Fraction of local data mapped to the twin.
    pub fraction: f64,
    /// Share of the server CPU.
    pub alpha: f64,
    /// Uplink rate in bit/s.
    pub rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwinflCost {
    /// Round latency `T` in s.
    pub latency: f64,
    /// Round energy `E` in J.
    pub energy: f64,
    pub total: f64,
    pub t_cmp: f64,
    pub t_com: f64,
    pub t_server: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwinflRoundMetrics {
    pub round: usize,
    pub accuracy: f64,
    pub cost: TwinflCost,
    /// Updates excluded by screening.
    pub ni_count: usize,
    pub selected_count: usize,
    /// Clients dropped as infeasible before allocation succeeded.
    pub dropped_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> TwinflStatus {
    match e {
        Error::Infeasible { .. } | Error::InfeasibleTransmission(_) | Error::EmptyFeasibleSet => {
            TwinflStatus::Infeasible
        }
        Error::NotConverged { .. } => TwinflStatus::NotConverged,
        Error::Config(_) => TwinflStatus::Config,
        Error::Io(_) | Error::Csv(_) | Error::Mnist(_) => TwinflStatus::Io,
        _ => TwinflStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (TwinflStatus, String)>) -> TwinflStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TwinflStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TwinflStatus::Panic
        }
    }
}

fn lib(e: Error) -> (TwinflStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TwinflStatus, String) {
    (TwinflStatus::NullPointer, format!("{what} is null"))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TwinflStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            TwinflStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (TwinflStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TwinflStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn twinfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn twinfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Scenario with every key at its default.
#[no_mangle]
pub extern "C" fn twinfl_scenario_new() -> *mut TwinflScenario {
    Box::into_raw(Box::new(TwinflScenario {
        inner: Scenario::default(),
    }))
}

/// Parses `key = value` lines on top of the defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twinfl_scenario_from_text(
    text: *const c_char,
    result: *mut *mut TwinflScenario,
) -> TwinflStatus {
    guard(|| {
        let result = out(result, "result")?;
        *result = ptr::null_mut();
        let s = Scenario::from_text(utf8(text, "text")?).map_err(lib)?;
        *result = Box::into_raw(Box::new(TwinflScenario { inner: s }));
        Ok(())
    })
}

/// Sets one key. The scenario is left unchanged on error.
///
/// # Safety
/// `scenario` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn twinfl_scenario_set(
    scenario: *mut TwinflScenario,
    key: *const c_char,
    value: *const c_char,
) -> TwinflStatus {
    guard(|| {
        let s = out(scenario, "scenario")?;
        let mut next = s.inner.clone();
        next.set(utf8(key, "key")?, utf8(value, "value")?)
            .map_err(lib)?;
        s.inner = next;
        Ok(())
    })
}

/// Writes the scenario as `key = value` text into `buffer`. `needed`
/// receives the required size including the terminating NUL; with a null or
/// too small buffer nothing is written and `OutOfRange` is returned.
///
/// # Safety
/// `buffer` must hold `capacity` bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn twinfl_scenario_to_text(
    scenario: *const TwinflScenario,
    buffer: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> TwinflStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let text = s.inner.to_text();
        let size = text.len() + 1;
        if let Some(n) = needed.as_mut() {
            *n = size;
        }
        if buffer.is_null() || capacity < size {
            return Err((
                TwinflStatus::OutOfRange,
                format!("buffer needs {size} bytes"),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buffer.cast::<u8>(), text.len());
        *buffer.add(text.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn twinfl_scenario_free(scenario: *mut TwinflScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Solves one allocation round for the top-`N` clients under the
/// scenario's scheme, without reselection.
///
/// # Safety
/// `scenario` must come from this library and `result` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twinfl_solve(
    scenario: *const TwinflScenario,
    round: usize,
    result: *mut *mut TwinflAllocation,
) -> TwinflStatus {
    guard(|| {
        let result = out(result, "result")?;
        *result = ptr::null_mut();
        let s = handle(scenario, "scenario")?;
        let (_, a) = sim::solve_round(&s.inner, round).map_err(lib)?;
        *result = Box::into_raw(Box::new(TwinflAllocation { inner: a }));
        Ok(())
    })
}

/// Number of clients in the allocation, 0 for a null handle.
///
/// # Safety
/// `allocation` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn twinfl_allocation_len(allocation: *const TwinflAllocation) -> usize {
    allocation
        .as_ref()
        .map_or(0, |a| a.inner.decision.clients.len())
}

/// # Safety
/// `allocation` must come from this library and `decision` be valid.
#[no_mangle]
pub unsafe extern "C" fn twinfl_allocation_client(
    allocation: *const TwinflAllocation,
    index: usize,
    decision: *mut TwinflClientDecision,
) -> TwinflStatus {
    guard(|| {
        let a = handle(allocation, "allocation")?;
        let d = out(decision, "decision")?;
        let clients = &a.inner.decision.clients;
        let c = clients.get(index).ok_or_else(|| {
            (
                TwinflStatus::OutOfRange,
                format!("index {index} out of {} clients", clients.len()),
            )
        })?;
        *d = TwinflClientDecision {
            id: c.id,
            power: c.power,
            frequency: c.frequency,
            fraction: c.fraction,
            alpha: c.alpha,
            rate: c.rate,
        };
        Ok(())
    })
}

/// # Safety
/// `allocation` must come from this library and `cost` be valid.
#[no_mangle]
pub unsafe extern "C" fn twinfl_allocation_cost(
    allocation: *const TwinflAllocation,
    cost: *mut TwinflCost,
) -> TwinflStatus {
    guard(|| {
        let a = handle(allocation, "allocation")?;
        *out(cost, "cost")? = cost_of(&a.inner);
        Ok(())
    })
}

fn cost_of(a: &twinfl::baseline::Allocation) -> TwinflCost {
    TwinflCost {
        latency: a.report.latency,
        energy: a.report.energy,
        total: a.report.total_cost(),
        t_cmp: a.decision.t_cmp,
        t_com: a.decision.t_com,
        t_server: a.decision.t_server,
    }
}

/// # Safety
/// `allocation` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn twinfl_allocation_free(allocation: *mut TwinflAllocation) {
    if !allocation.is_null() {
        drop(Box::from_raw(allocation));
    }
}

/// Builds the clients, datasets and initial model for a simulation.
///
/// # Safety
/// `scenario` must come from this library and `result` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twinfl_simulation_new(
    scenario: *const TwinflScenario,
    result: *mut *mut TwinflSimulation,
) -> TwinflStatus {
    guard(|| {
        let result = out(result, "result")?;
        *result = ptr::null_mut();
        let s = handle(scenario, "scenario")?;
        let sim = Simulation::new(&s.inner).map_err(lib)?;
        *result = Box::into_raw(Box::new(TwinflSimulation { inner: sim }));
        Ok(())
    })
}

/// Runs one round and reports its metrics.
///
/// # Safety
/// `simulation` must come from this library and `metrics` be valid.
#[no_mangle]
pub unsafe extern "C" fn twinfl_simulation_step(
    simulation: *mut TwinflSimulation,
    metrics: *mut TwinflRoundMetrics,
) -> TwinflStatus {
    guard(|| {
        let sim = out(simulation, "simulation")?;
        let m = out(metrics, "metrics")?;
        let r = sim.inner.step().map_err(lib)?.row;
        *m = TwinflRoundMetrics {
            round: r.round,
            accuracy: r.accuracy,
            cost: TwinflCost {
                latency: r.latency,
                energy: r.energy,
                total: r.total_cost,
                t_cmp: r.t_cmp,
                t_com: r.t_com,
                t_server: r.t_server,
            },
            ni_count: r.ni_count,
            selected_count: r.selected.len(),
            dropped_count: r.dropped.len(),
        };
        Ok(())
    })
}

/// # Safety
/// `simulation` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn twinfl_simulation_free(simulation: *mut TwinflSimulation) {
    if !simulation.is_null() {
        drop(Box::from_raw(simulation));
    }
}

/// Runs every round of the scenario and writes the metrics CSV to `path`.
///
/// # Safety
/// `scenario` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn twinfl_simulate_csv(
    scenario: *const TwinflScenario,
    path: *const c_char,
) -> TwinflStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let path = utf8(path, "path")?;
        let rows = sim::run_simulation(&s.inner).map_err(lib)?;
        let file = std::fs::File::create(path).map_err(|e| lib(e.into()))?;
        sim::write_csv(&rows, std::io::BufWriter::new(file)).map_err(lib)
    })
}
