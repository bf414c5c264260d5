//! C ABI for the xynoise sweep engine.
//!
//! Conventions: handle constructors return NULL on failure; every fallible
//! call returns an `XyStatus`; the failure message for the most recent call
//! on the current thread is available from `xy_last_error` until the next
//! API call on that thread. Handles are freed exactly once with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use xynoise::experiments::{classify_effect, run_sweep, ResponseCurve, SweepConfig};
use xynoise::operators::{ChainSpec, NoisePlacement};
use xynoise::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[allow(non_camel_case_types)]
pub enum XyStatus {
    XY_OK = 0,
    XY_INVALID_ARGUMENT = 1,
    XY_NUMERICAL = 2,
    XY_INSUFFICIENT_DATA = 3,
    XY_NULL_POINTER = 4,
    XY_BUFFER_TOO_SMALL = 5,
}

/// Opaque sweep configuration handle.
pub struct XyConfig {
    inner: SweepConfig,
}

/// Opaque response-curve handle.
pub struct XyCurve {
    inner: ResponseCurve,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::default());
}

fn status_of(e: &Error) -> XyStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidPreparation(_) | Error::Config(_) => {
            XyStatus::XY_INVALID_ARGUMENT
        }
        Error::InsufficientData { .. } => XyStatus::XY_INSUFFICIENT_DATA,
        Error::SweepPoint { source, .. } => status_of(source),
        _ => XyStatus::XY_NUMERICAL,
    }
}

fn fail(e: &Error) -> XyStatus {
    set_error(&e.to_string());
    status_of(e)
}

/// Message describing the most recent failure on this thread; empty string
/// when the last call succeeded. Valid until the next API call on the same
/// thread.
#[no_mangle]
pub extern "C" fn xy_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xy_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION.get_or_init(|| CString::new(xynoise::VERSION).unwrap()).as_ptr()
}

/// New sweep configuration for a catalog preparation (or e/g product label)
/// with noise applied to the given 1-based qubits. Chain parameters default
/// to the reference set for the preparation's length; grid, budget, step and
/// threshold default like the CLI. Returns NULL on error.
///
/// # Safety
/// `preparation` must be a NUL-terminated string; `placement` must point to
/// `placement_len` readable u32 values.
#[no_mangle]
pub unsafe extern "C" fn xy_config_new(
    preparation: *const c_char,
    placement: *const u32,
    placement_len: usize,
) -> *mut XyConfig {
    clear_error();
    if preparation.is_null() || (placement.is_null() && placement_len > 0) {
        set_error("null pointer argument");
        return std::ptr::null_mut();
    }
    let key = match CStr::from_ptr(preparation).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("preparation is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    let qubits: Vec<usize> =
        std::slice::from_raw_parts(placement, placement_len).iter().map(|&q| q as usize).collect();
    let built = catch_unwind(AssertUnwindSafe(|| {
        let prep = xynoise::states::Preparation::from_key(key)?;
        SweepConfig::new(key, ChainSpec::reference(prep.n_qubits), NoisePlacement::new(qubits, 0.0))
    }));
    match built {
        Ok(Ok(cfg)) => Box::into_raw(Box::new(XyConfig { inner: cfg })),
        Ok(Err(e)) => {
            fail(&e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Replace the chain parameters (couplings given as Jx, Jy).
///
/// # Safety
/// `config` must be a live handle from `xy_config_new`.
#[no_mangle]
pub unsafe extern "C" fn xy_config_set_chain(
    config: *mut XyConfig,
    n_qubits: u32,
    jx: f64,
    jy: f64,
    omega0: f64,
    gamma: f64,
    nbar: f64,
    periodic: bool,
) -> XyStatus {
    clear_error();
    let Some(cfg) = config.as_mut() else {
        set_error("null config handle");
        return XyStatus::XY_NULL_POINTER;
    };
    let spec =
        ChainSpec { n_qubits: n_qubits as usize, j_x: jx, j_y: jy, omega0, gamma, nbar, periodic };
    if let Err(e) = spec.validate() {
        return fail(&e);
    }
    cfg.inner.spec = spec;
    XyStatus::XY_OK
}

/// Replace the noise-strength grid (must start at 0, strictly increasing).
///
/// # Safety
/// `config` must be live; `grid` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn xy_config_set_grid(
    config: *mut XyConfig,
    grid: *const f64,
    len: usize,
) -> XyStatus {
    clear_error();
    let Some(cfg) = config.as_mut() else {
        set_error("null config handle");
        return XyStatus::XY_NULL_POINTER;
    };
    if grid.is_null() {
        set_error("null grid pointer");
        return XyStatus::XY_NULL_POINTER;
    }
    cfg.inner.grid = std::slice::from_raw_parts(grid, len).to_vec();
    XyStatus::XY_OK
}

/// Set the integration budget, output step and concurrence threshold.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn xy_config_set_integration(
    config: *mut XyConfig,
    t_max: f64,
    dt: f64,
    epsilon: f64,
) -> XyStatus {
    clear_error();
    let Some(cfg) = config.as_mut() else {
        set_error("null config handle");
        return XyStatus::XY_NULL_POINTER;
    };
    cfg.inner.t_max = t_max;
    cfg.inner.dt = dt;
    cfg.inner.epsilon = epsilon;
    XyStatus::XY_OK
}

/// # Safety
/// `config` must come from `xy_config_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn xy_config_free(config: *mut XyConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the sweep; returns a curve handle, or NULL on error.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn xy_run_sweep(config: *const XyConfig) -> *mut XyCurve {
    clear_error();
    let Some(cfg) = config.as_ref() else {
        set_error("null config handle");
        return std::ptr::null_mut();
    };
    match catch_unwind(AssertUnwindSafe(|| run_sweep(&cfg.inner))) {
        Ok(Ok(curve)) => Box::into_raw(Box::new(XyCurve { inner: curve })),
        Ok(Err(e)) => {
            fail(&e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Number of grid points in the curve.
///
/// # Safety
/// `curve` must be a live handle (NULL returns 0).
#[no_mangle]
pub unsafe extern "C" fn xy_curve_len(curve: *const XyCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.inner.len())
}

/// Read one sweep point.
///
/// # Safety
/// `curve` must be live; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn xy_curve_point(
    curve: *const XyCurve,
    index: usize,
    m_out: *mut f64,
    response_out: *mut f64,
    censored_out: *mut bool,
) -> XyStatus {
    clear_error();
    let Some(c) = curve.as_ref() else {
        set_error("null curve handle");
        return XyStatus::XY_NULL_POINTER;
    };
    if index >= c.inner.len() {
        set_error(&format!("index {index} out of range ({} points)", c.inner.len()));
        return XyStatus::XY_INVALID_ARGUMENT;
    }
    if let Some(m) = m_out.as_mut() {
        *m = c.inner.m_values[index];
    }
    if let Some(r) = response_out.as_mut() {
        *r = c.inner.responses[index];
    }
    if let Some(cen) = censored_out.as_mut() {
        *cen = c.inner.censored[index];
    }
    XyStatus::XY_OK
}

/// Classify the curve and write the snake_case label (NUL-terminated) into
/// `label_out`.
///
/// # Safety
/// `curve` must be live; `label_out` must have `label_cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn xy_classify(
    curve: *const XyCurve,
    rel_tol: f64,
    label_out: *mut c_char,
    label_cap: usize,
) -> XyStatus {
    clear_error();
    let Some(c) = curve.as_ref() else {
        set_error("null curve handle");
        return XyStatus::XY_NULL_POINTER;
    };
    if label_out.is_null() {
        set_error("null label buffer");
        return XyStatus::XY_NULL_POINTER;
    }
    let classification = match catch_unwind(AssertUnwindSafe(|| classify_effect(&c.inner, rel_tol)))
    {
        Ok(Ok(cl)) => cl,
        Ok(Err(e)) => return fail(&e),
        Err(_) => {
            set_error("internal panic");
            return XyStatus::XY_NUMERICAL;
        }
    };
    let label = classification.label.as_str();
    if label.len() + 1 > label_cap {
        set_error(&format!("label needs {} bytes, buffer has {label_cap}", label.len() + 1));
        return XyStatus::XY_BUFFER_TOO_SMALL;
    }
    std::ptr::copy_nonoverlapping(label.as_ptr(), label_out as *mut u8, label.len());
    *label_out.add(label.len()) = 0;
    XyStatus::XY_OK
}

/// # Safety
/// `curve` must come from `xy_run_sweep` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn xy_curve_free(curve: *mut XyCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}
