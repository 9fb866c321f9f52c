//! C ABI over the iterlab library.
//!
//! Every function returns an [`IterlabStatus`]; on failure a message is
//! available from [`iterlab_last_error`] until the next call on the same
//! thread. Handles are opaque and must be released with their `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use iterlab::harness::{execute, parse_config};
use iterlab::kernel::{builtin_kernel, Bandwidth, DensityState};
use iterlab::monte_carlo::plan_sample_size;
use iterlab::numerics::linspace;
use iterlab::regression::{evaluate_ratio, RegressionState};
use iterlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    UnknownExperiment = 4,
    Numeric = 5,
    Io = 6,
    Utf8 = 7,
    Panic = 8,
}

impl From<&Error> for IterlabStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::OutOfRange { .. } | Error::DegenerateStep(_) | Error::InvalidMatrix(_) => IterlabStatus::InvalidArgument,
            Error::CesaroPole(_) | Error::UndefinedBandwidth(_) | Error::InfiniteEstimate(_) => IterlabStatus::Numeric,
            Error::Config { .. } => IterlabStatus::Config,
            Error::UnknownExperiment(_) => IterlabStatus::UnknownExperiment,
            Error::Io(_) => IterlabStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: IterlabStatus, msg: impl Into<String>) -> IterlabStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), IterlabStatus>) -> IterlabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IterlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(IterlabStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> IterlabStatus {
    let s = IterlabStatus::from(&e);
    fail(s, e.to_string())
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), IterlabStatus> {
    if p.is_null() {
        Err(fail(IterlabStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, IterlabStatus> {
    non_null(p, what)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(IterlabStatus::Utf8, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call.
#[no_mangle]
pub extern "C" fn iterlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iterlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Sample size for a Monte Carlo estimate within `epsilon` with the given
/// confidence, under a variance bound.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iterlab_mc_plan(epsilon: f64, confidence: f64, variance_bound: f64, out: *mut u64) -> IterlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = plan_sample_size(epsilon, confidence, variance_bound).map_err(lib)?;
        *out = p.n_required as u64;
        Ok(())
    })
}

/// Runs a registered experiment. `params_json` may be null (defaults).
/// On success `*out_json` holds the JSON summary; free it with
/// [`iterlab_string_free`].
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iterlab_run_experiment(id: *const c_char, params_json: *const c_char, seed: u64, out_json: *mut *mut c_char) -> IterlabStatus {
    guard(|| {
        non_null(out_json, "out_json")?;
        *out_json = ptr::null_mut();
        let id = str_arg(id, "id")?;
        let mut cfg = parse_config(id, None, &[], Some(seed), None, ".").map_err(lib)?;
        if !params_json.is_null() {
            let text = str_arg(params_json, "params_json")?;
            cfg.params = serde_json::from_str(text).map_err(|e| fail(IterlabStatus::Config, e.to_string()))?;
        }
        let s = execute(&cfg).map_err(lib)?;
        *out_json = CString::new(s.to_json()).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// Streaming kernel density estimate on a uniform grid.
pub struct IterlabDensity(DensityState);

/// Creates a recursive density estimator with bandwidth h_i = c·i^{−β} on
/// `points` grid nodes spanning [lo, hi].
///
/// # Safety
/// `kernel` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iterlab_density_new(kernel: *const c_char, lo: f64, hi: f64, points: usize, c: f64, beta: f64, out: *mut *mut IterlabDensity) -> IterlabStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let k = builtin_kernel(str_arg(kernel, "kernel")?).map_err(lib)?;
        let st = DensityState::new(linspace(lo, hi, points), k, Bandwidth::rule(c, beta)).map_err(lib)?;
        *out = Box::into_raw(Box::new(IterlabDensity(st)));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iterlab_density_update(h: *mut IterlabDensity, x: f64) -> IterlabStatus {
    guard(|| {
        non_null(h, "handle")?;
        (*h).0.update(x).map_err(lib)
    })
}

/// Copies the current estimate into `values[0..len]`; `len` must equal the
/// grid size.
///
/// # Safety
/// `h` must be live and `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn iterlab_density_values(h: *const IterlabDensity, values: *mut f64, len: usize) -> IterlabStatus {
    guard(|| {
        non_null(h, "handle")?;
        non_null(values, "values")?;
        let v = (*h).0.values();
        if len != v.len() {
            return Err(fail(IterlabStatus::InvalidArgument, format!("buffer length {len}, grid has {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), values, len);
        Ok(())
    })
}

/// Number of observations absorbed so far (0 on a null handle).
///
/// # Safety
/// `h` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn iterlab_density_count(h: *const IterlabDensity) -> usize {
    h.as_ref().map_or(0, |d| d.0.count())
}

/// # Safety
/// `h` must come from [`iterlab_density_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iterlab_density_free(h: *mut IterlabDensity) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Streaming kernel regression estimate on a uniform grid.
pub struct IterlabRegression(RegressionState);

/// # Safety
/// `kernel` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iterlab_regression_new(kernel: *const c_char, lo: f64, hi: f64, points: usize, c: f64, beta: f64, out: *mut *mut IterlabRegression) -> IterlabStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let k = builtin_kernel(str_arg(kernel, "kernel")?).map_err(lib)?;
        let st = RegressionState::new(linspace(lo, hi, points), k, Bandwidth::rule(c, beta)).map_err(lib)?;
        *out = Box::into_raw(Box::new(IterlabRegression(st)));
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iterlab_regression_update(h: *mut IterlabRegression, x: f64, y: f64) -> IterlabStatus {
    guard(|| {
        non_null(h, "handle")?;
        (*h).0.update(x, y).map_err(lib)
    })
}

/// Writes the ratio estimate into `values` and `defined` (1 where the
/// denominator is large enough, else 0 and the value is NaN).
///
/// # Safety
/// `h` must be live; both buffers must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn iterlab_regression_values(h: *const IterlabRegression, values: *mut f64, defined: *mut u8, len: usize) -> IterlabStatus {
    guard(|| {
        non_null(h, "handle")?;
        non_null(values, "values")?;
        non_null(defined, "defined")?;
        let est = evaluate_ratio(&(*h).0).estimate.function;
        if len != est.len() {
            return Err(fail(IterlabStatus::InvalidArgument, format!("buffer length {len}, grid has {}", est.len())));
        }
        for i in 0..len {
            let ok = est.is_defined(i);
            *values.add(i) = if ok { est.values[i] } else { f64::NAN };
            *defined.add(i) = ok as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`iterlab_regression_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iterlab_regression_free(h: *mut IterlabRegression) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
