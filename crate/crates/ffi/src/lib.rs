//! C ABI over the probrel engine.
//!
//! Systems are parsed once into an opaque [`ProbrelSystem`] handle and then
//! queried. Every query writes a JSON result record into `*out_json`; free
//! it with [`probrel_string_free`]. Functions return a [`ProbrelStatus`];
//! on failure [`probrel_last_error`] describes what went wrong on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use probrel::cli::{self, Exit, Report};
use probrel::dsl::{parse_system, SystemFile};
use probrel::sampling::SampleConfig;

/// Status codes. The first four match the exit codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbrelStatus {
    Ok = 0,
    NotEstablished = 1,
    UserError = 2,
    InternalError = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
}

/// A parsed system. Opaque to C.
pub struct ProbrelSystem {
    sys: SystemFile,
    source: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn probrel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn probrel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ProbrelStatus> {
    if p.is_null() {
        set_last_error(&format!("{what} is NULL"));
        return Err(ProbrelStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_last_error(&format!("{what} is not valid UTF-8"));
        ProbrelStatus::InvalidUtf8
    })
}

fn guarded(f: impl FnOnce() -> Result<ProbrelStatus, ProbrelStatus>) -> ProbrelStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => {
            set_last_error("internal panic");
            ProbrelStatus::InternalError
        }
    }
}

/// Parse system text into a new handle stored in `*out`.
///
/// # Safety
/// `text` must be NULL or a NUL-terminated string; `out` must be NULL or
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn probrel_system_parse(text: *const c_char, out: *mut *mut ProbrelSystem) -> ProbrelStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("out is NULL");
            return Err(ProbrelStatus::NullArgument);
        }
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        match parse_system(text) {
            Ok(sys) => {
                *out = Box::into_raw(Box::new(ProbrelSystem {
                    sys,
                    source: text.to_string(),
                }));
                Ok(ProbrelStatus::Ok)
            }
            Err(e) => {
                set_last_error(&e.to_string());
                Err(ProbrelStatus::UserError)
            }
        }
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `sys` must be NULL or a handle from [`probrel_system_parse`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn probrel_system_free(sys: *mut ProbrelSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn probrel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn system<'a>(p: *const ProbrelSystem) -> Result<&'a ProbrelSystem, ProbrelStatus> {
    p.as_ref().ok_or_else(|| {
        set_last_error("system is NULL");
        ProbrelStatus::NullArgument
    })
}

/// Write the record for `report` to `*out_json` and map its exit status.
unsafe fn emit(command: &str, digest: &str, report: Report, out_json: *mut *mut c_char) -> Result<ProbrelStatus, ProbrelStatus> {
    let rec = cli::record(command, digest, &report, None);
    let text = serde_json::to_string(&rec).map_err(|e| {
        set_last_error(&e.to_string());
        ProbrelStatus::InternalError
    })?;
    *out_json = CString::new(text).expect("JSON has no NUL bytes").into_raw();
    let status = match report.exit {
        Exit::Success => ProbrelStatus::Ok,
        Exit::NotEstablished => ProbrelStatus::NotEstablished,
        Exit::UserError => ProbrelStatus::UserError,
        Exit::Internal => ProbrelStatus::InternalError,
    };
    if status != ProbrelStatus::Ok && status != ProbrelStatus::NotEstablished {
        set_last_error(&report.text);
    }
    Ok(status)
}

unsafe fn out_arg(out_json: *mut *mut c_char) -> Result<(), ProbrelStatus> {
    if out_json.is_null() {
        set_last_error("out_json is NULL");
        return Err(ProbrelStatus::NullArgument);
    }
    *out_json = ptr::null_mut();
    Ok(())
}

/// Exact probability of `event`.
///
/// # Safety
/// Pointers must be NULL or valid as documented on [`probrel_system_parse`].
#[no_mangle]
pub unsafe extern "C" fn probrel_eval(
    sys: *const ProbrelSystem,
    event: *const c_char,
    out_json: *mut *mut c_char,
) -> ProbrelStatus {
    guarded(|| {
        out_arg(out_json)?;
        let s = system(sys)?;
        let event = str_arg(event, "event")?;
        let digest = cli::inputs_digest(&["eval", &s.source, event]);
        emit("eval", &digest, cli::cmd_eval(&s.sys, event), out_json)
    })
}

/// Monte-Carlo estimate of `event` with `n` samples.
///
/// # Safety
/// Pointers must be NULL or valid as documented on [`probrel_system_parse`].
#[no_mangle]
pub unsafe extern "C" fn probrel_simulate(
    sys: *const ProbrelSystem,
    event: *const c_char,
    n: u64,
    seed: u64,
    gamma: f64,
    out_json: *mut *mut c_char,
) -> ProbrelStatus {
    guarded(|| {
        out_arg(out_json)?;
        let s = system(sys)?;
        let event = str_arg(event, "event")?;
        let cfg = SampleConfig::new(n, seed).with_gamma(gamma);
        let params = format!("n={n} seed={seed} gamma={gamma}");
        let digest = cli::inputs_digest(&["simulate", &s.source, event, &params]);
        emit("simulate", &digest, cli::cmd_simulate(&s.sys, event, &cfg), out_json)
    })
}

/// Rewrite the system body with a proof script; `event` may be NULL
/// (meaning `true`).
///
/// # Safety
/// Pointers must be NULL or valid as documented on [`probrel_system_parse`].
#[no_mangle]
pub unsafe extern "C" fn probrel_rewrite(
    sys: *const ProbrelSystem,
    script: *const c_char,
    event: *const c_char,
    out_json: *mut *mut c_char,
) -> ProbrelStatus {
    guarded(|| {
        out_arg(out_json)?;
        let s = system(sys)?;
        let script = str_arg(script, "script")?;
        let event = if event.is_null() { "true" } else { str_arg(event, "event")? };
        let digest = cli::inputs_digest(&["rewrite", &s.source, script, event]);
        emit("rewrite", &digest, cli::cmd_rewrite(&s.sys, script, None, event), out_json)
    })
}

/// Try to establish `goal`; `script` may be NULL.
///
/// # Safety
/// Pointers must be NULL or valid as documented on [`probrel_system_parse`].
#[no_mangle]
pub unsafe extern "C" fn probrel_check(
    sys: *const ProbrelSystem,
    goal: *const c_char,
    script: *const c_char,
    out_json: *mut *mut c_char,
) -> ProbrelStatus {
    guarded(|| {
        out_arg(out_json)?;
        let s = system(sys)?;
        let goal = str_arg(goal, "goal")?;
        let script = if script.is_null() { None } else { Some(str_arg(script, "script")?) };
        let digest = cli::inputs_digest(&["check", &s.source, goal, script.unwrap_or("")]);
        emit("check", &digest, cli::cmd_check(&s.sys, goal, script, None), out_json)
    })
}
