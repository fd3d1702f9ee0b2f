//! C ABI over the `initshape` solver.
//!
//! Curves and reports cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible call returns an
//! [`InitshapeError`] code; the message of the last failure on the calling
//! thread is available from [`initshape_last_error_message`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use initshape::{
    extract_initial_geometry, read_curve, solve, AffineShearVolumetricField, BoundaryCurve,
    ConvergenceReport, DisplacementField, Error, JacobianMode, Point2, SchemeKind,
    SingularFallback, SolverConfig, Status, Vector2,
};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitshapeError {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    FieldEvaluation = 5,
    NoAnalyticJacobian = 6,
    SingularSystem = 7,
    External = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Opaque ordered boundary curve.
pub struct InitshapeCurve(BoundaryCurve);

/// Opaque convergence report of a solve.
pub struct InitshapeReport(ConvergenceReport);

/// Scheme I: no corrective term.
pub const INITSHAPE_SCHEME_I: u32 = 1;
/// Scheme II: exact 2x2 corrective term.
pub const INITSHAPE_SCHEME_II: u32 = 2;
/// Scheme III: small-strain corrective term.
pub const INITSHAPE_SCHEME_III: u32 = 3;

pub const INITSHAPE_JACOBIAN_ANALYTIC: u32 = 0;
pub const INITSHAPE_JACOBIAN_FD: u32 = 1;

pub const INITSHAPE_FALLBACK_SCHEME_III: u32 = 0;
pub const INITSHAPE_FALLBACK_SCHEME_I: u32 = 1;
pub const INITSHAPE_FALLBACK_FAIL: u32 = 2;

/// Same values as the command-line exit status.
pub const INITSHAPE_STATUS_CONVERGED: c_int = 0;
pub const INITSHAPE_STATUS_MAX_ITERATIONS: c_int = 2;
pub const INITSHAPE_STATUS_DIVERGED: c_int = 3;

/// Solver settings. Obtain defaults from [`initshape_solver_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct InitshapeSolverOptions {
    /// One of `INITSHAPE_SCHEME_*`.
    pub scheme: u32,
    /// Stopping tolerance on the max residual norm.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// One of `INITSHAPE_JACOBIAN_*`.
    pub jacobian: u32,
    /// Central-difference step; zero or negative selects the default.
    pub fd_step: f64,
    /// One of `INITSHAPE_FALLBACK_*`.
    pub fallback: u32,
}

/// Displacement callback: writes `U(x, y)` into `ux`, `uy` and returns 0 on
/// success. It must be a pure function of its arguments.
pub type InitshapeFieldFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, x: f64, y: f64, ux: *mut f64, uy: *mut f64) -> c_int>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn code_for(e: &Error) -> InitshapeError {
    match e {
        Error::InvalidArgument(_) | Error::SingularInverse { .. } => InitshapeError::InvalidArgument,
        Error::Parse { .. } => InitshapeError::Parse,
        Error::Io { .. } => InitshapeError::Io,
        Error::FieldEvaluation { .. } => InitshapeError::FieldEvaluation,
        Error::NoAnalyticJacobian => InitshapeError::NoAnalyticJacobian,
        Error::SingularSystem { .. } => InitshapeError::SingularSystem,
        Error::External { .. } => InitshapeError::External,
    }
}

fn fail(code: InitshapeError, msg: impl Into<String>) -> InitshapeError {
    set_last_error(msg);
    code
}

fn guard(f: impl FnOnce() -> Result<(), InitshapeError>) -> InitshapeError {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => InitshapeError::Ok,
        Ok(Err(code)) => code,
        Err(_) => fail(InitshapeError::Panic, "internal panic"),
    }
}

fn lift<T>(r: initshape::Result<T>) -> Result<T, InitshapeError> {
    r.map_err(|e| fail(code_for(&e), e.to_string()))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, InitshapeError> {
    p.as_mut()
        .ok_or_else(|| fail(InitshapeError::NullPointer, "null output pointer"))
}

unsafe fn in_ref<'a, T>(p: *const T) -> Result<&'a T, InitshapeError> {
    p.as_ref()
        .ok_or_else(|| fail(InitshapeError::NullPointer, "null handle"))
}

/// Message of the last error on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn initshape_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Equally spaced points on a circle, counter-clockwise from angle 0.
#[no_mangle]
pub unsafe extern "C" fn initshape_curve_new_disc(
    radius: f64,
    n_points: usize,
    center_x: f64,
    center_y: f64,
    out: *mut *mut InitshapeCurve,
) -> InitshapeError {
    guard(|| {
        let out = out_ptr(out)?;
        let c = lift(initshape::make_disc(radius, n_points, Point2::new(center_x, center_y)))?;
        *out = Box::into_raw(Box::new(InitshapeCurve(c)));
        Ok(())
    })
}

/// Curve from `len` coordinate pairs.
#[no_mangle]
pub unsafe extern "C" fn initshape_curve_from_xy(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out: *mut *mut InitshapeCurve,
) -> InitshapeError {
    guard(|| {
        let out = out_ptr(out)?;
        if xs.is_null() || ys.is_null() {
            return Err(fail(InitshapeError::NullPointer, "null coordinate array"));
        }
        let xs = std::slice::from_raw_parts(xs, len);
        let ys = std::slice::from_raw_parts(ys, len);
        let pts = xs.iter().zip(ys).map(|(&x, &y)| Point2::new(x, y)).collect();
        let c = lift(BoundaryCurve::new(pts, "ffi"))?;
        *out = Box::into_raw(Box::new(InitshapeCurve(c)));
        Ok(())
    })
}

/// Reads a geometry CSV (`x,y` header) from a file path.
#[no_mangle]
pub unsafe extern "C" fn initshape_curve_read_csv(
    path: *const c_char,
    out: *mut *mut InitshapeCurve,
) -> InitshapeError {
    guard(|| {
        let out = out_ptr(out)?;
        let path = in_ref(path)?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(InitshapeError::InvalidArgument, "path is not UTF-8"))?;
        let f = std::fs::File::open(path)
            .map_err(|e| fail(InitshapeError::Io, format!("{path}: {e}")))?;
        let c = lift(read_curve(f))?;
        *out = Box::into_raw(Box::new(InitshapeCurve(c)));
        Ok(())
    })
}

/// Number of points, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn initshape_curve_len(curve: *const InitshapeCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn initshape_curve_point(
    curve: *const InitshapeCurve,
    index: usize,
    x: *mut f64,
    y: *mut f64,
) -> InitshapeError {
    guard(|| {
        let c = in_ref(curve)?;
        let (x, y) = (out_ptr(x)?, out_ptr(y)?);
        let p = c.0.points().get(index).ok_or_else(|| {
            fail(
                InitshapeError::OutOfRange,
                format!("point {index} out of range (len {})", c.0.len()),
            )
        })?;
        *x = p.x;
        *y = p.y;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn initshape_curve_free(curve: *mut InitshapeCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Default options for a scheme: analytic Jacobians, 1000 iterations,
/// scheme III fallback.
#[no_mangle]
pub extern "C" fn initshape_solver_options_default(scheme: u32, epsilon: f64) -> InitshapeSolverOptions {
    InitshapeSolverOptions {
        scheme,
        epsilon,
        max_iterations: 1000,
        jacobian: INITSHAPE_JACOBIAN_ANALYTIC,
        fd_step: 0.0,
        fallback: INITSHAPE_FALLBACK_SCHEME_III,
    }
}

fn to_config(o: &InitshapeSolverOptions) -> Result<SolverConfig, InitshapeError> {
    let scheme = match o.scheme {
        INITSHAPE_SCHEME_I => SchemeKind::SchemeI,
        INITSHAPE_SCHEME_II => SchemeKind::SchemeII,
        INITSHAPE_SCHEME_III => SchemeKind::SchemeIII,
        s => return Err(fail(InitshapeError::InvalidArgument, format!("unknown scheme {s}"))),
    };
    let jacobian_mode = match o.jacobian {
        INITSHAPE_JACOBIAN_ANALYTIC => JacobianMode::Analytic,
        INITSHAPE_JACOBIAN_FD => JacobianMode::FiniteDifference {
            step: (o.fd_step > 0.0).then_some(o.fd_step),
        },
        j => return Err(fail(InitshapeError::InvalidArgument, format!("unknown Jacobian mode {j}"))),
    };
    let fallback = match o.fallback {
        INITSHAPE_FALLBACK_SCHEME_III => SingularFallback::SchemeIii,
        INITSHAPE_FALLBACK_SCHEME_I => SingularFallback::SchemeI,
        INITSHAPE_FALLBACK_FAIL => SingularFallback::Fail,
        f => return Err(fail(InitshapeError::InvalidArgument, format!("unknown fallback {f}"))),
    };
    let config = SolverConfig {
        scheme,
        epsilon: o.epsilon,
        max_iterations: o.max_iterations,
        jacobian_mode,
        singular_fallback: fallback,
    };
    lift(config.validate())?;
    Ok(config)
}

unsafe fn run_solve<F: DisplacementField>(
    desired: *const InitshapeCurve,
    field: &F,
    options: *const InitshapeSolverOptions,
    out: *mut *mut InitshapeReport,
) -> Result<(), InitshapeError> {
    let out = out_ptr(out)?;
    let desired = in_ref(desired)?;
    let config = to_config(in_ref(options)?)?;
    let report = lift(solve(&desired.0, field, &config))?;
    *out = Box::into_raw(Box::new(InitshapeReport(report)));
    Ok(())
}

/// Solves against the shear/volumetric field `U = (alpha (x + y), alpha (x - y))`.
#[no_mangle]
pub unsafe extern "C" fn initshape_solve_affine(
    desired: *const InitshapeCurve,
    alpha: f64,
    options: *const InitshapeSolverOptions,
    out: *mut *mut InitshapeReport,
) -> InitshapeError {
    guard(|| {
        let field = lift(AffineShearVolumetricField::new(alpha))?;
        run_solve(desired, &field, options, out)
    })
}

struct CallbackField {
    f: unsafe extern "C" fn(*mut c_void, f64, f64, *mut f64, *mut f64) -> c_int,
    user_data: *mut c_void,
}

// The callback contract requires a pure, thread-safe function.
unsafe impl Send for CallbackField {}
unsafe impl Sync for CallbackField {}

impl DisplacementField for CallbackField {
    fn evaluate(&self, p: Point2) -> initshape::Result<Vector2> {
        let (mut ux, mut uy) = (0.0, 0.0);
        let rc = unsafe { (self.f)(self.user_data, p.x, p.y, &mut ux, &mut uy) };
        if rc != 0 {
            return Err(Error::FieldEvaluation {
                index: 0,
                message: format!("callback returned {rc} at ({}, {})", p.x, p.y),
            });
        }
        Ok(Vector2::new(ux, uy))
    }
}

/// Solves against a caller-supplied displacement field. Only
/// `INITSHAPE_JACOBIAN_FD` gives schemes II and III their gradients here.
#[no_mangle]
pub unsafe extern "C" fn initshape_solve_callback(
    desired: *const InitshapeCurve,
    field: InitshapeFieldFn,
    user_data: *mut c_void,
    options: *const InitshapeSolverOptions,
    out: *mut *mut InitshapeReport,
) -> InitshapeError {
    guard(|| {
        let f = field.ok_or_else(|| fail(InitshapeError::NullPointer, "null field callback"))?;
        run_solve(desired, &CallbackField { f, user_data }, options, out)
    })
}

/// One of `INITSHAPE_STATUS_*`, or -1 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn initshape_report_status(report: *const InitshapeReport) -> c_int {
    match report.as_ref().map(|r| r.0.status) {
        Some(Status::Converged) => INITSHAPE_STATUS_CONVERGED,
        Some(Status::MaxIterationsReached) => INITSHAPE_STATUS_MAX_ITERATIONS,
        Some(Status::Diverged) => INITSHAPE_STATUS_DIVERGED,
        None => -1,
    }
}

/// Number of iteration records, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn initshape_report_iterations(report: *const InitshapeReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.iterations())
}

/// Max residual norm of record `index` (0-based; record `index` is iteration `index + 1`).
#[no_mangle]
pub unsafe extern "C" fn initshape_report_max_residual_norm(
    report: *const InitshapeReport,
    index: usize,
    out: *mut f64,
) -> InitshapeError {
    guard(|| {
        let r = in_ref(report)?;
        let out = out_ptr(out)?;
        let rec = r.0.records.get(index).ok_or_else(|| {
            fail(InitshapeError::OutOfRange, format!("record {index} out of range"))
        })?;
        *out = rec.max_residual_norm;
        Ok(())
    })
}

/// Measured rate `k` (0-based): max residual norm of record `k + 1` over record `k`.
#[no_mangle]
pub unsafe extern "C" fn initshape_report_rate(
    report: *const InitshapeReport,
    index: usize,
    out: *mut f64,
) -> InitshapeError {
    guard(|| {
        let r = in_ref(report)?;
        let out = out_ptr(out)?;
        *out = *r.0.measured_rates.get(index).ok_or_else(|| {
            fail(InitshapeError::OutOfRange, format!("rate {index} out of range"))
        })?;
        Ok(())
    })
}

/// Final estimate of the initial geometry as a new curve handle.
#[no_mangle]
pub unsafe extern "C" fn initshape_report_initial_geometry(
    report: *const InitshapeReport,
    out: *mut *mut InitshapeCurve,
) -> InitshapeError {
    guard(|| {
        let r = in_ref(report)?;
        let out = out_ptr(out)?;
        *out = Box::into_raw(Box::new(InitshapeCurve(extract_initial_geometry(&r.0))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn initshape_report_free(report: *mut InitshapeReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
