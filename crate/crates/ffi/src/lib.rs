//! C ABI over `jcc-core`.
//!
//! Models and solve reports are opaque heap handles created by the library
//! and released with the matching `*_free` function. Every entry point
//! returns a [`JccStatus`]; on failure a message is available from
//! [`jcc_last_error_message`] on the calling thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use jcc_core::dual::{self, BooleEval, SolveReport, Status};
use jcc_core::model::io::{from_json_slice, read_model};
use jcc_core::model::{
    build_fishery, build_mdp_from_spec, build_unicycle, GriddedMdp, UnicycleVariant,
};
use jcc_core::numfmt::to_json_vec;
use jcc_core::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidModel = 5,
    Panic = 6,
}

/// Outcome of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JccSolveStatus {
    Solved = 0,
    Trivial = 1,
    Infeasible = 2,
    MaxIters = 3,
}

/// How the Boole baseline scores the safety of its policies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JccBooleEval {
    Exact = 0,
    Bound = 1,
}

/// Member of a mixed policy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JccPolicyMember {
    Over = 0,
    Under = 1,
}

/// Opaque gridded model.
pub struct JccModel {
    mdp: GriddedMdp,
    initial_state: usize,
}

/// Opaque solve report.
pub struct JccReport {
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(JccStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => JccStatus::Io,
            Error::Json(_) => JccStatus::Parse,
            Error::InvalidSpec { .. } | Error::InvalidModel(_) | Error::ShapeMismatch(_) => {
                JccStatus::InvalidModel
            }
            _ => JccStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(JccStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(JccStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any error or panic for [`jcc_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JccStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            JccStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn model_ref<'a>(p: *const JccModel) -> Result<&'a JccModel, Failure> {
    p.as_ref().ok_or_else(|| null("model"))
}

unsafe fn report_ref<'a>(p: *const JccReport) -> Result<&'a JccReport, Failure> {
    p.as_ref().ok_or_else(|| null("report"))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed_model(mdp: GriddedMdp, initial_state: usize) -> *mut JccModel {
    Box::into_raw(Box::new(JccModel { mdp, initial_state }))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jcc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads a JSON model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_load(path: *const c_char, out: *mut *mut JccModel) -> JccStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mdp = read_model(Path::new(path))?;
        put(out, boxed_model(mdp, 0), "out")
    })
}

/// Parses a JSON model from `len` bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_from_json(
    json: *const u8,
    len: usize,
    out: *mut *mut JccModel,
) -> JccStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = std::slice::from_raw_parts(json, len);
        let mdp = from_json_slice(bytes)?;
        put(out, boxed_model(mdp, 0), "out")
    })
}

/// Grids a built-in system: `"unicycle-a"`, `"unicycle-b"` or `"fishery"`.
/// The model's initial state is the system's default starting cell.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_builtin(
    name: *const c_char,
    out: *mut *mut JccModel,
) -> JccStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = match name {
            "unicycle-a" => build_unicycle(UnicycleVariant::A),
            "unicycle-b" => build_unicycle(UnicycleVariant::B),
            "fishery" => build_fishery(),
            other => return Err(invalid(format!("unknown built-in system `{other}`"))),
        };
        let mdp = build_mdp_from_spec(&spec)?;
        let x0 = match (&spec.initial_state, mdp.grid()) {
            (Some(p), Some(g)) => g.cell_of(p),
            _ => 0,
        };
        put(out, boxed_model(mdp, x0), "out")
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_free(model: *mut JccModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states, actions and the horizon. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_dims(
    model: *const JccModel,
    num_states: *mut usize,
    num_actions: *mut usize,
    horizon: *mut usize,
) -> JccStatus {
    guard(|| {
        let m = &model_ref(model)?.mdp;
        for (out, v) in [
            (num_states, m.num_states()),
            (num_actions, m.num_actions()),
            (horizon, m.horizon()),
        ] {
            if !out.is_null() {
                out.write(v);
            }
        }
        Ok(())
    })
}

/// Default initial cell: the system's starting point for built-ins, else 0.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_model_initial_state(
    model: *const JccModel,
    out: *mut usize,
) -> JccStatus {
    guard(|| {
        let m = model_ref(model)?;
        put(out, m.initial_state, "out")
    })
}

fn boxed_report(report: SolveReport) -> *mut JccReport {
    Box::into_raw(Box::new(JccReport { report }))
}

/// Solves the chance-constrained problem from cell `x0` at level `alpha`
/// until the certificate is at most `delta` or `max_iters` bisection steps.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_solve(
    model: *const JccModel,
    x0: usize,
    alpha: f64,
    delta: f64,
    max_iters: usize,
    out: *mut *mut JccReport,
) -> JccStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = dual::solve(&m.mdp, x0, alpha, delta, max_iters)?;
        put(out, boxed_report(r), "out")
    })
}

/// The Boole-inequality baseline with the given safety evaluation.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_solve_boole(
    model: *const JccModel,
    x0: usize,
    alpha: f64,
    delta: f64,
    max_iters: usize,
    eval: JccBooleEval,
    out: *mut *mut JccReport,
) -> JccStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let eval = match eval {
            JccBooleEval::Exact => BooleEval::Exact,
            JccBooleEval::Bound => BooleEval::Bound,
        };
        let r = dual::solve_boole(&m.mdp, x0, alpha, delta, max_iters, eval)?;
        put(out, boxed_report(r), "out")
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jcc_report_free(report: *mut JccReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Scalar results of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JccSummary {
    pub status: JccSolveStatus,
    pub cost: f64,
    pub safety: f64,
    /// Suboptimality certificate.
    pub delta: f64,
    /// Probability of following the over-safe member.
    pub p_over: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub iterations: usize,
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_report_summary(
    report: *const JccReport,
    out: *mut JccSummary,
) -> JccStatus {
    guard(|| {
        let r = &report_ref(report)?.report;
        let status = match r.status {
            Status::Solved => JccSolveStatus::Solved,
            Status::Trivial => JccSolveStatus::Trivial,
            Status::Infeasible => JccSolveStatus::Infeasible,
            Status::MaxIters => JccSolveStatus::MaxIters,
        };
        put(
            out,
            JccSummary {
                status,
                cost: r.cost,
                safety: r.safety,
                delta: r.delta,
                p_over: r.p_over,
                lambda_lower: r.lambda_lower,
                lambda_upper: r.lambda_upper,
                iterations: r.iterations,
            },
            "out",
        )
    })
}

/// Action of one member of the solved policy at step `k`, cell `state` and
/// flag `safe` (non-zero while the trajectory has stayed safe).
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_report_action(
    report: *const JccReport,
    member: JccPolicyMember,
    k: usize,
    state: usize,
    safe: i32,
    out: *mut usize,
) -> JccStatus {
    guard(|| {
        let r = &report_ref(report)?.report;
        let mixed = r
            .policy
            .as_ref()
            .ok_or_else(|| invalid("report carries no policy"))?;
        let p = match member {
            JccPolicyMember::Over => &mixed.pi_over,
            JccPolicyMember::Under => &mixed.pi_under,
        };
        if k >= p.horizon() || state >= p.num_states() {
            return Err(invalid(format!(
                "step {k} or state {state} out of range ({} steps, {} states)",
                p.horizon(),
                p.num_states()
            )));
        }
        put(out, p.action(k, state, safe != 0), "out")
    })
}

/// The full report as a NUL-terminated JSON string, released with
/// [`jcc_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jcc_report_to_json(
    report: *const JccReport,
    out: *mut *mut c_char,
) -> JccStatus {
    guard(|| {
        let r = &report_ref(report)?.report;
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = to_json_vec(r).map_err(Error::from)?;
        let s = CString::new(bytes).map_err(|_| invalid("report JSON contains NUL"))?;
        put(out, s.into_raw(), "out")
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jcc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
