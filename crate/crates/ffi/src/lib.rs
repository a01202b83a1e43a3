//! C ABI for `dbvp-core`.
//!
//! Problems and fields are opaque handles created and released by this
//! library. Every fallible function returns a [`DbvpStatus`]; on failure a
//! description is available from [`dbvp_last_error_message`] on the same
//! thread. Panics never cross the boundary: they are reported as
//! [`DbvpStatus::Panic`].

use dbvp_core::cli::resolved_operator;
use dbvp_core::config::RunConfig;
use dbvp_core::error::DbvpError;
use dbvp_core::field::DiscreteField;
use dbvp_core::resolvent::{random_values, resolvent_norm_trial, ResolventEngine, ResolventOperator, SpectralPoint};
use dbvp_core::roots::kappa_pair;
use num_complex::Complex64 as C64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DbvpStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// Configuration text rejected.
    Config = 2,
    /// Numerical precondition failed (ellipticity, boundary coefficients, solver).
    Precondition = 3,
    /// A probe did not converge.
    Instability = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// An argument had an invalid value (length mismatch, bad UTF-8, ...).
    InvalidArgument = 6,
    /// The library panicked; the handle arguments should be considered unusable.
    Panic = 7,
}

/// Complex number with the memory layout of `double _Complex`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbvpComplex {
    pub re: f64,
    pub im: f64,
}

/// Characteristic roots κ± and the leading coefficient a_nn.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbvpKappa {
    pub kplus: DbvpComplex,
    pub kminus: DbvpComplex,
    pub a_n: DbvpComplex,
}

/// Opaque problem handle: operator, boundary operator and grid.
pub struct DbvpProblem {
    config: RunConfig,
    spec: dbvp_core::operator::EllipticOperatorSpec,
    engine: ResolventEngine,
}

/// Opaque discrete field handle.
pub struct DbvpField {
    field: DiscreteField,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type FfiResult<T> = std::result::Result<T, (DbvpStatus, String)>;

fn core_err(e: DbvpError) -> (DbvpStatus, String) {
    let s = match &e {
        DbvpError::Io(_) => DbvpStatus::Io,
        DbvpError::Config(_) => DbvpStatus::Config,
        DbvpError::Argument(_) => DbvpStatus::InvalidArgument,
        DbvpError::Instability(_) => DbvpStatus::Instability,
        _ => DbvpStatus::Precondition,
    };
    (s, e.to_string())
}

fn null(name: &str) -> (DbvpStatus, String) {
    (DbvpStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> DbvpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DbvpStatus::Ok
        }
        Ok(Err((s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {m}"));
            DbvpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DbvpStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, v: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(v);
    Ok(())
}

fn to_c(z: C64) -> DbvpComplex {
    DbvpComplex { re: z.re, im: z.im }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dbvp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn dbvp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a problem from configuration text (the `key = value` format of
/// the command-line tool).
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` a valid pointer
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dbvp_problem_from_config(config_text: *const c_char, out: *mut *mut DbvpProblem) -> DbvpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(config_text, "config_text")?;
        let config = RunConfig::parse(text).map_err(core_err)?;
        let spec = resolved_operator(&config).map_err(core_err)?;
        let bspec = config.boundary_spec().map_err(core_err)?;
        let tg = config.tangential_grid().map_err(core_err)?;
        let ng = config.normal_grid().map_err(core_err)?;
        let engine = ResolventEngine::new(&spec, &bspec, tg, ng).map_err(core_err)?;
        write_out(out, Box::into_raw(Box::new(DbvpProblem { config, spec, engine })), "out")
    })
}

/// Release a problem (null is ignored).
///
/// # Safety
/// `problem` must be null or a handle from [`dbvp_problem_from_config`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn dbvp_problem_free(problem: *mut DbvpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Grid dimensions (tangential points, normal points) of a problem.
///
/// # Safety
/// `problem` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_problem_grid(
    problem: *const DbvpProblem,
    tangential_points: *mut usize,
    normal_points: *mut usize,
) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        write_out(tangential_points, p.engine.tgrid().points, "tangential_points")?;
        write_out(normal_points, p.engine.ngrid().len(), "normal_points")
    })
}

/// Zero field on the problem grid.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_zeros(problem: *const DbvpProblem, out: *mut *mut DbvpField) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let field = DiscreteField::zeros(p.engine.tgrid(), p.engine.ngrid().clone());
        write_out(out, Box::into_raw(Box::new(DbvpField { field })), "out")
    })
}

/// Field on the problem grid from `len` values in tangential-major order
/// (value (j, i) at index j·normal_points + i).
///
/// # Safety
/// `data` must point to `len` readable values; `problem` must be a live
/// handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_from_data(
    problem: *const DbvpProblem,
    data: *const DbvpComplex,
    len: usize,
    out: *mut *mut DbvpField,
) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let vals: Vec<C64> = std::slice::from_raw_parts(data, len).iter().map(|z| C64::new(z.re, z.im)).collect();
        let field =
            DiscreteField::from_values(p.engine.tgrid(), p.engine.ngrid().clone(), vals).map_err(core_err)?;
        write_out(out, Box::into_raw(Box::new(DbvpField { field })), "out")
    })
}

/// Number of values of a field (0 for null).
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_len(field: *const DbvpField) -> usize {
    field.as_ref().map_or(0, |f| f.field.values.len())
}

/// Copy the field values into `dst`, which must hold exactly `len` values.
///
/// # Safety
/// `field` must be a live handle and `dst` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_read(field: *const DbvpField, dst: *mut DbvpComplex, len: usize) -> DbvpStatus {
    guard(|| {
        let f = ref_arg(field, "field")?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        if len != f.field.values.len() {
            return Err((
                DbvpStatus::InvalidArgument,
                format!("buffer holds {len} values, field has {}", f.field.values.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(dst, len);
        for (o, v) in out.iter_mut().zip(&f.field.values) {
            *o = to_c(*v);
        }
        Ok(())
    })
}

/// Discrete L² norm of a field.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_l2_norm(field: *const DbvpField, out: *mut f64) -> DbvpStatus {
    guard(|| {
        let f = ref_arg(field, "field")?;
        write_out(out, f.field.norm(), "out")
    })
}

/// Release a field (null is ignored).
///
/// # Safety
/// `field` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_free(field: *mut DbvpField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Write a field to `path` (binary file plus `path.json` descriptor).
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_save(field: *const DbvpField, path: *const c_char) -> DbvpStatus {
    guard(|| {
        let f = ref_arg(field, "field")?;
        let path = str_arg(path, "path")?;
        f.field.save(Path::new(path)).map_err(core_err)
    })
}

/// Read a field written by [`dbvp_field_save`] or the command-line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_field_load(path: *const c_char, out: *mut *mut DbvpField) -> DbvpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let field = DiscreteField::load(Path::new(path)).map_err(core_err)?;
        write_out(out, Box::into_raw(Box::new(DbvpField { field })), "out")
    })
}

/// Roots κ± of the boundary symbol at tangential point x1, frequency
/// ξ1, spectral parameter ζ and sector angle θ.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_kappa_roots(
    problem: *const DbvpProblem,
    x1: f64,
    xi1: f64,
    zeta: f64,
    theta: f64,
    out: *mut DbvpKappa,
) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let k = kappa_pair(&p.spec, &[x1], &[xi1], zeta, theta, false).map_err(core_err)?;
        write_out(out, DbvpKappa { kplus: to_c(k.kplus), kminus: to_c(k.kminus), a_n: to_c(k.a_n) }, "out")
    })
}

/// New field (A_T − λ)^{−1}f.
///
/// # Safety
/// `problem` and `f` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_apply_resolvent(
    problem: *const DbvpProblem,
    lambda_re: f64,
    lambda_im: f64,
    f: *const DbvpField,
    out: *mut *mut DbvpField,
) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        let f = ref_arg(f, "f")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if f.field.tgrid != p.engine.tgrid() || &f.field.ngrid != p.engine.ngrid() {
            return Err((DbvpStatus::InvalidArgument, "field does not live on the problem grid".into()));
        }
        let sp = SpectralPoint::from_lambda(C64::new(lambda_re, lambda_im)).map_err(core_err)?;
        let v = p.engine.apply(&sp, &f.field.values).map_err(core_err)?;
        write_out(out, Box::into_raw(Box::new(DbvpField { field: f.field.with_values(v) })), "out")
    })
}

/// Estimate of ‖λ(A_T − λ)^{−1}‖ at −λ = e^{iθ}μ² from `trials` random
/// start fields (streams 0..trials of `seed`) and `power_steps` power
/// iterations each.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dbvp_sector_norm(
    problem: *const DbvpProblem,
    theta: f64,
    mu: f64,
    trials: u32,
    power_steps: u32,
    seed: u64,
    out: *mut f64,
) -> DbvpStatus {
    guard(|| {
        let p = ref_arg(problem, "problem")?;
        if trials == 0 {
            return Err((DbvpStatus::InvalidArgument, "trials must be at least 1".into()));
        }
        let sp = SpectralPoint::new(theta, mu).map_err(core_err)?;
        let len = p.engine.tgrid().points * p.engine.ngrid().len();
        let mut best = 0.0f64;
        for t in 0..trials as u64 {
            let start = random_values(len, seed, t);
            best = best.max(resolvent_norm_trial(&p.engine, sp.lambda, &start, power_steps as usize).map_err(core_err)?);
        }
        write_out(out, best, "out")
    })
}

impl DbvpProblem {
    /// Configuration the problem was built from.
    pub fn config(&self) -> &RunConfig {
        &self.config
    }
}
