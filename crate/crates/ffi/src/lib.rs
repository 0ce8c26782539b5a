//! C ABI over the verification suite: parse a JSON configuration, run its
//! suites, and read the report back as JSON or text.
//!
//! Every fallible call returns an [`AmalgamStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`amalgam_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use amalgam::cli::{parse_config, run_suite, Report, SuiteConfig};
use amalgam::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmalgamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    SchemaError = 4,
    Panic = 5,
}

/// Opaque parsed configuration.
pub struct AmalgamConfig(SuiteConfig);

/// Opaque verification report.
pub struct AmalgamReport(Report);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: AmalgamStatus, msg: impl Into<String>) -> AmalgamStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> AmalgamStatus) -> AmalgamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AmalgamStatus::Panic, "internal panic"),
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amalgam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn amalgam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parse a JSON configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn amalgam_config_parse(text: *const c_char, out: *mut *mut AmalgamConfig) -> AmalgamStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return fail(AmalgamStatus::NullPointer, "null argument");
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let text = match unsafe { CStr::from_ptr(text) }.to_str() {
            Ok(t) => t,
            Err(e) => return fail(AmalgamStatus::InvalidUtf8, e.to_string()),
        };
        match parse_config(text) {
            Ok(cfg) => {
                // SAFETY: checked non-null.
                unsafe { *out = Box::into_raw(Box::new(AmalgamConfig(cfg))) };
                AmalgamStatus::Ok
            }
            Err(e @ Error::Parse { .. }) => fail(AmalgamStatus::ParseError, e.to_string()),
            Err(e) => fail(AmalgamStatus::SchemaError, e.to_string()),
        }
    })
}

/// Override the truncation level of a parsed configuration.
///
/// # Safety
/// `cfg` must come from [`amalgam_config_parse`] and not be freed.
#[no_mangle]
pub unsafe extern "C" fn amalgam_config_set_truncation(cfg: *mut AmalgamConfig, truncation: usize) -> AmalgamStatus {
    guarded(|| {
        // SAFETY: the caller guarantees `cfg` is live or null.
        let Some(cfg) = (unsafe { cfg.as_mut() }) else {
            return fail(AmalgamStatus::NullPointer, "null configuration");
        };
        cfg.0.truncation = Some(truncation);
        AmalgamStatus::Ok
    })
}

/// # Safety
/// `cfg` must come from [`amalgam_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_config_free(cfg: *mut AmalgamConfig) {
    if !cfg.is_null() {
        // SAFETY: allocated by `Box::into_raw` in `amalgam_config_parse`.
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Run the enabled suites. Suite failures are part of the report; a
/// non-`Ok` status means no report was produced.
///
/// # Safety
/// `cfg` must be a live configuration and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn amalgam_run(cfg: *const AmalgamConfig, out: *mut *mut AmalgamReport) -> AmalgamStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AmalgamStatus::NullPointer, "null output");
        }
        // SAFETY: the caller guarantees `cfg` is live or null.
        let Some(cfg) = (unsafe { cfg.as_ref() }) else {
            return fail(AmalgamStatus::NullPointer, "null configuration");
        };
        if let Err(e) = cfg.0.tolerance() {
            return fail(AmalgamStatus::SchemaError, e.to_string());
        }
        let report = run_suite(&cfg.0);
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AmalgamReport(report))) };
        AmalgamStatus::Ok
    })
}

/// 1 when every suite passed, 0 otherwise or for a null report.
///
/// # Safety
/// `report` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_report_passed(report: *const AmalgamReport) -> i32 {
    // SAFETY: the caller guarantees `report` is live or null.
    unsafe { report.as_ref() }.is_some_and(|r| r.0.passed) as i32
}

/// Process exit code of the report: 0 when all suites pass, 1 otherwise.
///
/// # Safety
/// `report` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_report_exit_code(report: *const AmalgamReport) -> i32 {
    // SAFETY: the caller guarantees `report` is live or null.
    unsafe { report.as_ref() }.map_or(2, |r| r.0.exit_code())
}

/// The report as JSON; release with [`amalgam_string_free`].
///
/// # Safety
/// `report` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_report_json(report: *const AmalgamReport, include_timings: bool) -> *mut c_char {
    // SAFETY: the caller guarantees `report` is live or null.
    match unsafe { report.as_ref() } {
        Some(r) => into_c_string(r.0.to_json(include_timings)),
        None => ptr::null_mut(),
    }
}

/// The report as text; release with [`amalgam_string_free`].
///
/// # Safety
/// `report` must be a live report or null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_report_text(report: *const AmalgamReport) -> *mut c_char {
    // SAFETY: the caller guarantees `report` is live or null.
    match unsafe { report.as_ref() } {
        Some(r) => into_c_string(r.0.to_text()),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `report` must come from [`amalgam_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_report_free(report: *mut AmalgamReport) {
    if !report.is_null() {
        // SAFETY: allocated by `Box::into_raw` in `amalgam_run`.
        drop(unsafe { Box::from_raw(report) });
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn amalgam_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by `CString::into_raw`.
        drop(unsafe { CString::from_raw(s) });
    }
}
