//! C ABI over the anchored-ensemble library.
//!
//! Conventions: functions return [`SaeStatus`] (0 = success) and write results
//! through out-pointers; handle constructors return null on failure. The last
//! error message for the calling thread is available via [`sae_last_error`].
//! The generated header lives at `include/sae.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use sae_core::ensemble::{allocate_budget, load_ensemble, Ensemble};
use sae_core::error::Error;
use sae_core::harness::{run_experiment, ExperimentConfig};
use sae_core::metrics;
use sae_core::nn::Matrix;

/// Status codes mirroring the CLI exit codes: 2 config, 3 numeric, 4 i/o.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaeStatus {
    Ok = 0,
    /// A required pointer argument was null or an index was out of range.
    InvalidArgument = 1,
    ConfigError = 2,
    NumericError = 3,
    IoError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(message).unwrap_or_default());
    });
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn status_of(err: &Error) -> SaeStatus {
    match err.exit_code() {
        2 => SaeStatus::ConfigError,
        3 => SaeStatus::NumericError,
        _ => SaeStatus::IoError,
    }
}

fn fail(err: &Error) -> SaeStatus {
    set_last_error(err.to_string());
    status_of(err)
}

fn invalid(message: &str) -> SaeStatus {
    set_last_error(message);
    SaeStatus::InvalidArgument
}

/// Opaque handle to a loaded ensemble.
pub struct SaeEnsemble {
    inner: Ensemble,
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn sae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error on this thread, or null when the last call
/// succeeded. The pointer stays valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn sae_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SaeStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{name} must not be null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| invalid(&format!("{name} is not valid UTF-8")))
}

/// Splits an epoch budget into chains of one long plus `m` short trainings.
///
/// Writes the per-chain sequential member count and the total member count.
///
/// # Safety
/// `out_members_per_chain` and `out_total_members` must be valid writable
/// pointers (either may be null to skip that result).
#[no_mangle]
pub unsafe extern "C" fn sae_allocate_budget(
    total_epochs: u64,
    chains: u64,
    initial_epochs: u64,
    sequential_epochs: u64,
    out_members_per_chain: *mut u64,
    out_total_members: *mut u64,
) -> SaeStatus {
    clear_last_error();
    match allocate_budget(
        total_epochs as usize,
        chains as usize,
        initial_epochs as usize,
        sequential_epochs as usize,
    ) {
        Ok(plan) => {
            if !out_members_per_chain.is_null() {
                unsafe { *out_members_per_chain = plan.members_per_chain_after_first as u64 };
            }
            if !out_total_members.is_null() {
                unsafe { *out_total_members = plan.total_members as u64 };
            }
            SaeStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Runs a full experiment from a JSON config document (the same schema the
/// CLI reads; `method` and `out_dir` must be set). Artifacts are written to
/// the config's output directory.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sae_run_experiment(config_json: *const c_char) -> SaeStatus {
    clear_last_error();
    let json = match unsafe { cstr_arg(config_json, "config_json") } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let cfg = match ExperimentConfig::from_json(json) {
        Ok(cfg) => cfg,
        Err(err) => return fail(&err),
    };
    match run_experiment(&cfg) {
        Ok(_) => SaeStatus::Ok,
        Err(err) => fail(&err),
    }
}

/// Loads an ensemble file written by a training run. Returns null on failure
/// (see [`sae_last_error`]). Free with [`sae_ensemble_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_load(path: *const c_char) -> *mut SaeEnsemble {
    clear_last_error();
    let path = match unsafe { cstr_arg(path, "path") } {
        Ok(s) => PathBuf::from(s),
        Err(_) => return std::ptr::null_mut(),
    };
    match load_ensemble(&path) {
        Ok(inner) => Box::into_raw(Box::new(SaeEnsemble { inner })),
        Err(err) => {
            set_last_error(err.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases an ensemble handle. Null is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer returned by [`sae_ensemble_load`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_free(handle: *mut SaeEnsemble) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

unsafe fn ensemble_ref<'a>(handle: *const SaeEnsemble) -> Option<&'a Ensemble> {
    unsafe { handle.as_ref() }.map(|h| &h.inner)
}

/// Number of members; 0 when the handle is null.
///
/// # Safety
/// `handle` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_member_count(handle: *const SaeEnsemble) -> u64 {
    unsafe { ensemble_ref(handle) }.map_or(0, |e| e.len() as u64)
}

/// Flat parameter count per member; 0 when the handle is null.
///
/// # Safety
/// `handle` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_parameter_count(handle: *const SaeEnsemble) -> u64 {
    unsafe { ensemble_ref(handle) }.map_or(0, |e| e.arch().parameter_count() as u64)
}

/// Total epochs spent training the ensemble; 0 when the handle is null.
///
/// # Safety
/// `handle` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_total_epochs(handle: *const SaeEnsemble) -> u64 {
    unsafe { ensemble_ref(handle) }.map_or(0, |e| e.total_epochs() as u64)
}

/// Copies member `index`'s flat parameter vector into `out` (`len` must equal
/// the parameter count).
///
/// # Safety
/// `handle` must be a live ensemble handle and `out` writable for `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sae_ensemble_member(
    handle: *const SaeEnsemble,
    index: u64,
    out: *mut f64,
    len: u64,
) -> SaeStatus {
    clear_last_error();
    let Some(ensemble) = (unsafe { ensemble_ref(handle) }) else {
        return invalid("handle must not be null");
    };
    if out.is_null() {
        return invalid("out must not be null");
    }
    let Some(member) = ensemble.members().get(index as usize) else {
        return invalid(&format!(
            "member index {index} out of range ({} members)",
            ensemble.len()
        ));
    };
    if len as usize != member.len() {
        return invalid(&format!(
            "out length {len} does not match parameter count {}",
            member.len()
        ));
    }
    unsafe { std::ptr::copy_nonoverlapping(member.as_slice().as_ptr(), out, member.len()) };
    SaeStatus::Ok
}

unsafe fn probs_matrix(
    ptr: *const f64,
    rows: u64,
    classes: u64,
    name: &str,
) -> Result<Matrix, SaeStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{name} must not be null")));
    }
    if rows == 0 || classes == 0 {
        return Err(invalid("rows and classes must both be >= 1"));
    }
    let len = (rows * classes) as usize;
    let data = unsafe { std::slice::from_raw_parts(ptr, len) }.to_vec();
    Matrix::new(data, rows as usize, classes as usize).map_err(|e| {
        set_last_error(e.to_string());
        SaeStatus::ConfigError
    })
}

/// Fraction of rows whose argmax class matches, over two row-major
/// `rows x classes` probability matrices.
///
/// # Safety
/// `reference` and `approx` must point to `rows * classes` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sae_agreement(
    reference: *const f64,
    approx: *const f64,
    rows: u64,
    classes: u64,
    out: *mut f64,
) -> SaeStatus {
    clear_last_error();
    if out.is_null() {
        return invalid("out must not be null");
    }
    let p = match unsafe { probs_matrix(reference, rows, classes, "reference") } {
        Ok(m) => m,
        Err(s) => return s,
    };
    let q = match unsafe { probs_matrix(approx, rows, classes, "approx") } {
        Ok(m) => m,
        Err(s) => return s,
    };
    match metrics::agreement(&p, &q) {
        Ok(v) => {
            unsafe { *out = v };
            SaeStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// Mean per-row total variation over two row-major `rows x classes`
/// probability matrices.
///
/// # Safety
/// Same contract as [`sae_agreement`].
#[no_mangle]
pub unsafe extern "C" fn sae_total_variation(
    reference: *const f64,
    approx: *const f64,
    rows: u64,
    classes: u64,
    out: *mut f64,
) -> SaeStatus {
    clear_last_error();
    if out.is_null() {
        return invalid("out must not be null");
    }
    let p = match unsafe { probs_matrix(reference, rows, classes, "reference") } {
        Ok(m) => m,
        Err(s) => return s,
    };
    let q = match unsafe { probs_matrix(approx, rows, classes, "approx") } {
        Ok(m) => m,
        Err(s) => return s,
    };
    match metrics::total_variation(&p, &q) {
        Ok(v) => {
            unsafe { *out = v };
            SaeStatus::Ok
        }
        Err(err) => fail(&err),
    }
}

/// One-dimensional empirical Wasserstein-2 distance between two sample sets.
///
/// # Safety
/// `samples_p` / `samples_q` must point to `len_p` / `len_q` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sae_wasserstein2(
    samples_p: *const f64,
    len_p: u64,
    samples_q: *const f64,
    len_q: u64,
    out: *mut f64,
) -> SaeStatus {
    clear_last_error();
    if out.is_null() {
        return invalid("out must not be null");
    }
    if samples_p.is_null() || samples_q.is_null() {
        return invalid("sample pointers must not be null");
    }
    let p = unsafe { std::slice::from_raw_parts(samples_p, len_p as usize) };
    let q = unsafe { std::slice::from_raw_parts(samples_q, len_q as usize) };
    match metrics::wasserstein2(p, q) {
        Ok(v) => {
            unsafe { *out = v };
            SaeStatus::Ok
        }
        Err(err) => fail(&err),
    }
}
