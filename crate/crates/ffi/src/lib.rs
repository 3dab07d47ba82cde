//! C ABI for `stlddp`.
//!
//! Scenarios and results are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`StlddpStatus`]; on
//! failure [`stlddp_last_error_message`] describes the error for the calling
//! thread. No function unwinds across the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use stlddp::cli::{bundled_scenario, run_scenario, CliError, RunOutcome, Scenario};
use stlddp::smoothing::SmoothParams;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlddpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Scenario schema or value error.
    Config = 3,
    Io = 4,
    /// Malformed CSV input.
    Parse = 5,
    Solve = 6,
    /// Specification or predicate error.
    Spec = 7,
    /// Caller buffer too small.
    BufferTooSmall = 8,
    NotFound = 9,
    Internal = 10,
}

/// Opaque scenario handle.
pub struct StlddpScenario {
    inner: Scenario,
}

/// Opaque result handle.
pub struct StlddpResult {
    inner: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<Vec<u8>>) {
    let mut bytes = message.into();
    bytes.retain(|b| *b != 0);
    let msg = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &CliError) -> StlddpStatus {
    match e {
        CliError::Config { .. } => StlddpStatus::Config,
        CliError::Io { .. } => StlddpStatus::Io,
        CliError::Parse { .. } => StlddpStatus::Parse,
        CliError::Solve(_) | CliError::Dynamics(_) | CliError::Cost(_) => StlddpStatus::Solve,
        CliError::Stl(_) => StlddpStatus::Spec,
        CliError::Unsound(_) => StlddpStatus::Internal,
    }
}

fn fail(status: StlddpStatus, message: impl Into<Vec<u8>>) -> StlddpStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> StlddpStatus) -> StlddpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(StlddpStatus::Internal, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, StlddpStatus> {
    if p.is_null() {
        return Err(fail(StlddpStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(StlddpStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn emit_scenario(out: *mut *mut StlddpScenario, result: Result<Scenario, CliError>) -> StlddpStatus {
    match result {
        Ok(s) => {
            *out = Box::into_raw(Box::new(StlddpScenario { inner: s }));
            StlddpStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Message for the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn stlddp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn stlddp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario from JSON text. Relative file paths inside it resolve
/// against the working directory.
#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_from_json(json: *const c_char, out: *mut *mut StlddpScenario) -> StlddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(StlddpStatus::NullPointer, "null output pointer");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        emit_scenario(out, Scenario::from_json(text, None))
    })
}

/// Loads a scenario file.
#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_load(path: *const c_char, out: *mut *mut StlddpScenario) -> StlddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(StlddpStatus::NullPointer, "null output pointer");
        }
        let path = match str_arg(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        emit_scenario(out, Scenario::load(Path::new(path)))
    })
}

/// One of the scenarios compiled into the library, e.g. `"reach_avoid"`.
#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_bundled(name: *const c_char, out: *mut *mut StlddpScenario) -> StlddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(StlddpStatus::NullPointer, "null output pointer");
        }
        let name = match str_arg(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match bundled_scenario(name) {
            Some(s) => emit_scenario(out, Ok(s)),
            None => fail(StlddpStatus::NotFound, format!("no bundled scenario `{name}`")),
        }
    })
}

unsafe fn with_scenario(s: *mut StlddpScenario, f: impl FnOnce(&mut Scenario) -> StlddpStatus) -> StlddpStatus {
    guard(|| match s.as_mut() {
        Some(s) => f(&mut s.inner),
        None => fail(StlddpStatus::NullPointer, "null scenario handle"),
    })
}

/// Sets the seed of a random initialization; no effect for other policies.
#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_set_seed(s: *mut StlddpScenario, seed: u64) -> StlddpStatus {
    with_scenario(s, |s| {
        s.set_seed(seed);
        StlddpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_set_smoothing(s: *mut StlddpScenario, k1: f64, k2: f64) -> StlddpStatus {
    with_scenario(s, |s| match SmoothParams::new(k1, k2) {
        Ok(p) => {
            s.smoothing = p;
            StlddpStatus::Ok
        }
        Err(e) => fail(StlddpStatus::Config, e.to_string()),
    })
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_set_max_iterations(s: *mut StlddpScenario, max_iterations: usize) -> StlddpStatus {
    with_scenario(s, |s| {
        s.solver.max_iterations = max_iterations;
        StlddpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_set_retries(s: *mut StlddpScenario, retries: usize) -> StlddpStatus {
    with_scenario(s, |s| {
        s.retry.budget = retries;
        StlddpStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_scenario_free(s: *mut StlddpScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Compiles, solves and certifies the scenario, with its retry policy.
/// A result is produced whether or not the trajectory is certified.
#[no_mangle]
pub unsafe extern "C" fn stlddp_solve(s: *const StlddpScenario, out: *mut *mut StlddpResult) -> StlddpStatus {
    guard(|| {
        let Some(s) = s.as_ref() else {
            return fail(StlddpStatus::NullPointer, "null scenario handle");
        };
        if out.is_null() {
            return fail(StlddpStatus::NullPointer, "null output pointer");
        }
        match run_scenario(&s.inner) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(StlddpResult { inner: outcome }));
                StlddpStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// 1 if the trajectory is certified, 0 if not or on a null handle.
#[no_mangle]
pub unsafe extern "C" fn stlddp_result_satisfied(r: *const StlddpResult) -> i32 {
    r.as_ref().map_or(0, |r| r.inner.is_satisfied() as i32)
}

/// Exact robustness of the specification on the result; NaN on a null handle.
#[no_mangle]
pub unsafe extern "C" fn stlddp_result_robustness(r: *const StlddpResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.report.exact_robustness)
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_result_iterations(r: *const StlddpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.report.total_iterations)
}

/// Number of samples `T + 1`.
#[no_mangle]
pub unsafe extern "C" fn stlddp_result_samples(r: *const StlddpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.result.trajectory.states.len())
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_result_state_dim(r: *const StlddpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.problem.model.state_dim())
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_result_control_dim(r: *const StlddpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.problem.model.control_dim())
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_result_output_dim(r: *const StlddpResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.problem.model.output_dim())
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlddpSeries {
    States = 0,
    Controls = 1,
    Outputs = 2,
}

/// Copies a series row-major (one row per timestep) into `buf`, which must
/// hold `samples * dim` values. `written` receives the count needed.
#[no_mangle]
pub unsafe extern "C" fn stlddp_result_copy(r: *const StlddpResult, series: StlddpSeries, buf: *mut f64, len: usize, written: *mut usize) -> StlddpStatus {
    guard(|| {
        let Some(r) = r.as_ref() else {
            return fail(StlddpStatus::NullPointer, "null result handle");
        };
        let traj = &r.inner.result.trajectory;
        let rows = match series {
            StlddpSeries::States => &traj.states,
            StlddpSeries::Controls => &traj.controls,
            StlddpSeries::Outputs => &traj.outputs,
        };
        let needed: usize = rows.iter().map(|v| v.len()).sum();
        if !written.is_null() {
            *written = needed;
        }
        if buf.is_null() {
            return fail(StlddpStatus::NullPointer, "null buffer");
        }
        if len < needed {
            return fail(StlddpStatus::BufferTooSmall, format!("buffer holds {len} values, {needed} needed"));
        }
        let out = std::slice::from_raw_parts_mut(buf, needed);
        for (dst, src) in out.iter_mut().zip(rows.iter().flat_map(|v| v.iter())) {
            *dst = *src;
        }
        StlddpStatus::Ok
    })
}

/// Run report as a JSON string; release with [`stlddp_string_free`].
/// Null on a null handle.
#[no_mangle]
pub unsafe extern "C" fn stlddp_result_report_json(r: *const StlddpResult) -> *mut c_char {
    let Some(r) = r.as_ref() else {
        set_error("null result handle");
        return ptr::null_mut();
    };
    match serde_json::to_string(&r.inner.report).ok().and_then(|s| CString::new(s).ok()) {
        Some(c) => c.into_raw(),
        None => {
            set_error("report could not be serialized");
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn stlddp_result_free(r: *mut StlddpResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
