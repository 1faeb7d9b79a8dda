//! C ABI over the `gmcf` library.
//!
//! Experiments and runs are opaque handles created and released through this
//! interface. Fallible calls return a [`GmcfStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`gmcf_last_error_message`]. Strings returned as `char *` are owned by the
//! caller and must be released with [`gmcf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gmcf::config::{parse_config, records_to_csv, summary_json};
use gmcf::maps::FAMILIES;
use gmcf::{DiagnosticsRecord, Error, ExperimentConfig, RunOutcome, StopKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmcfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Numeric = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Why a run stopped; values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmcfStopKind {
    Converged = 0,
    MaxTimeReached = 2,
    InvariantBreach = 3,
    NonFinite = 4,
}

impl From<StopKind> for GmcfStopKind {
    fn from(k: StopKind) -> Self {
        match k {
            StopKind::Converged => Self::Converged,
            StopKind::MaxTimeReached => Self::MaxTimeReached,
            StopKind::InvariantBreach => Self::InvariantBreach,
            StopKind::NonFinite => Self::NonFinite,
        }
    }
}

/// One diagnostics sample. `min_det2`/`max_det2` are meaningful only when
/// `has_det2` is non-zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GmcfRecord {
    pub t: f64,
    pub step: u64,
    pub dt: f64,
    pub area: f64,
    pub min_j: f64,
    pub max_speed: f64,
    pub has_det2: i32,
    pub min_det2: f64,
    pub max_det2: f64,
    pub max_two_dilation: f64,
    pub max_grad: f64,
}

impl From<&DiagnosticsRecord> for GmcfRecord {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            step: r.step,
            dt: r.dt,
            area: r.area,
            min_j: r.min_j,
            max_speed: r.max_speed,
            has_det2: i32::from(r.min_det2.is_some()),
            min_det2: r.min_det2.unwrap_or(f64::NAN),
            max_det2: r.max_det2.unwrap_or(f64::NAN),
            max_two_dilation: r.max_two_dilation,
            max_grad: r.max_grad,
        }
    }
}

/// Config text plus `--key=value` overrides, validated on every change.
pub struct GmcfExperiment {
    text: String,
    overrides: Vec<String>,
    config: ExperimentConfig,
}

/// A finished run.
pub struct GmcfRun {
    config: ExperimentConfig,
    outcome: RunOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GmcfStatus {
    match e {
        Error::Io(_) => GmcfStatus::Io,
        Error::MalformedLine { .. }
        | Error::UnknownKey(_)
        | Error::InvalidEnum { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownFamily(_) => GmcfStatus::Config,
        _ => GmcfStatus::Numeric,
    }
}

struct Failure(GmcfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> GmcfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmcfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GmcfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(GmcfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            GmcfStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(GmcfStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(GmcfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gmcf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses config text into a new experiment handle stored in `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmcf_experiment_parse(
    text: *const c_char,
    out: *mut *mut GmcfExperiment,
) -> GmcfStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        let text = str_arg(text, "text")?.to_string();
        let config = parse_config(&text, &[])?;
        let exp = GmcfExperiment {
            text,
            overrides: Vec::new(),
            config,
        };
        *out = Box::into_raw(Box::new(exp));
        Ok(())
    })
}

/// Overrides one config key, as `--key=value` would on the command line. On
/// failure the experiment is left unchanged.
///
/// # Safety
/// `exp` must come from [`gmcf_experiment_parse`]; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gmcf_experiment_set(
    exp: *mut GmcfExperiment,
    key: *const c_char,
    value: *const c_char,
) -> GmcfStatus {
    guarded(|| {
        let exp = exp
            .as_mut()
            .ok_or_else(|| Failure(GmcfStatus::NullPointer, "experiment is null".to_string()))?;
        let flag = format!("--{}={}", str_arg(key, "key")?, str_arg(value, "value")?);
        let mut overrides = exp.overrides.clone();
        overrides.push(flag);
        exp.config = parse_config(&exp.text, &overrides)?;
        exp.overrides = overrides;
        Ok(())
    })
}

/// Resolved config of the experiment as `key = value` text.
///
/// # Safety
/// `exp` must be null or come from [`gmcf_experiment_parse`].
#[no_mangle]
pub unsafe extern "C" fn gmcf_experiment_resolved(exp: *const GmcfExperiment) -> *mut c_char {
    match exp.as_ref() {
        Some(e) => into_c_string(e.config.to_config_text()),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `exp` must be null or come from [`gmcf_experiment_parse`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmcf_experiment_free(exp: *mut GmcfExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs the experiment to a stop condition. Stops such as an invariant
/// breach are not errors: they are reported by [`gmcf_run_status`]. Output
/// paths in the config are ignored; use [`gmcf_run_csv`] and
/// [`gmcf_run_summary_json`].
///
/// # Safety
/// `exp` must come from [`gmcf_experiment_parse`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gmcf_run(
    exp: *const GmcfExperiment,
    out: *mut *mut GmcfRun,
) -> GmcfStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        let exp = handle(exp, "experiment")?;
        let outcome = gmcf::run(&exp.config)?;
        let run = GmcfRun {
            config: exp.config.clone(),
            outcome,
        };
        *out = Box::into_raw(Box::new(run));
        Ok(())
    })
}

/// Stop kind, final step and final time of a run. Any of the out pointers
/// may be null.
///
/// # Safety
/// `run` must come from [`gmcf_run`]; non-null out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_status(
    run: *const GmcfRun,
    kind: *mut GmcfStopKind,
    step: *mut u64,
    t: *mut f64,
) -> GmcfStatus {
    guarded(|| {
        let status = &handle(run, "run")?.outcome.status;
        if !kind.is_null() {
            *kind = status.kind.into();
        }
        if !step.is_null() {
            *step = status.step;
        }
        if !t.is_null() {
            *t = status.t;
        }
        Ok(())
    })
}

/// Number of diagnostics records; 0 for a null handle.
///
/// # Safety
/// `run` must be null or come from [`gmcf_run`].
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_record_count(run: *const GmcfRun) -> usize {
    run.as_ref().map_or(0, |r| r.outcome.records.len())
}

/// Copies record `index` into `*out`.
///
/// # Safety
/// `run` must come from [`gmcf_run`] and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_record(
    run: *const GmcfRun,
    index: usize,
    out: *mut GmcfRecord,
) -> GmcfStatus {
    guarded(|| {
        out_ptr(out, "out")?;
        let records = &handle(run, "run")?.outcome.records;
        let r = records.get(index).ok_or_else(|| {
            Failure(
                GmcfStatus::OutOfRange,
                format!("record {index} out of range (have {})", records.len()),
            )
        })?;
        *out = r.into();
        Ok(())
    })
}

/// CSV time series of the run, identical to what `gmcf run` writes.
///
/// # Safety
/// `run` must be null or come from [`gmcf_run`].
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_csv(run: *const GmcfRun) -> *mut c_char {
    match run.as_ref() {
        Some(r) => into_c_string(records_to_csv(&r.outcome.records)),
        None => ptr::null_mut(),
    }
}

/// JSON run summary with the resolved config embedded.
///
/// # Safety
/// `run` must be null or come from [`gmcf_run`].
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_summary_json(run: *const GmcfRun) -> *mut c_char {
    match run.as_ref() {
        Some(r) => {
            let v = summary_json(&r.config, &r.outcome);
            into_c_string(serde_json::to_string_pretty(&v).unwrap_or_default())
        }
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `run` must be null or come from [`gmcf_run`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmcf_run_free(run: *mut GmcfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Map families and their parameters, one block per family.
#[no_mangle]
pub extern "C" fn gmcf_list_families() -> *mut c_char {
    into_c_string(FAMILIES.iter().map(ToString::to_string).collect())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by a `gmcf_` function, released once.
#[no_mangle]
pub unsafe extern "C" fn gmcf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
