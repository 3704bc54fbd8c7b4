//! C ABI over `kernreg`.
//!
//! Objects are opaque handles created by `kr_*_new` style functions and
//! released with the matching `kr_*_free`. Every fallible call returns a
//! [`KrStatus`]; on failure the message is kept per thread and can be read
//! with [`kr_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use kernreg::regfunc::fixed_point_for;
use kernreg::solver::{default_eta_grid, Frontier};
use kernreg::synth::{make_target, power_coefficients};
use kernreg::{Constants, EigenSpec, Error, FittedFunction, RegressionTask, RegularizerKind, RegularizerSpec, SampleSet};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Eigen-decomposed kernel on `[0, 1]`.
pub struct KrSpectrum(Arc<EigenSpec>);

/// Regression problem with a known target.
pub struct KrTask(RegressionTask);

/// Observations `(x_i, y_i)`.
pub struct KrSample(SampleSet);

/// Function selected by regularized least squares.
pub struct KrFit(FittedFunction);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> KrStatus {
    match e {
        Error::InvalidParameter { .. } | Error::Config(_) | Error::Malformed(_) | Error::NotApplicable(_) => {
            KrStatus::InvalidArgument
        }
        Error::Io { .. } => KrStatus::Io,
        _ => KrStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (KrStatus, String)>) -> KrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            KrStatus::Panic
        }
    }
}

fn lib<T>(r: kernreg::Result<T>) -> Result<T, (KrStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (KrStatus, String) {
    (KrStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (KrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (KrStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string and returns its full length in bytes, excluding
/// the terminator. A null `buf` or zero `len` only reports the length.
#[no_mangle]
pub unsafe extern "C" fn kr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Spectrum with decay `p` truncated to `n_terms` eigenvalues, basis bound √2.
#[no_mangle]
pub unsafe extern "C" fn kr_spectrum_new(p: f64, n_terms: usize, out: *mut *mut KrSpectrum) -> KrStatus {
    guard(|| {
        let spec = lib(EigenSpec::build(p, n_terms, std::f64::consts::SQRT_2))?;
        put(out, KrSpectrum(Arc::new(spec)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn kr_spectrum_free(spec: *mut KrSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

#[no_mangle]
pub unsafe extern "C" fn kr_spectrum_len(spec: *const KrSpectrum) -> usize {
    spec.as_ref().map_or(0, |s| s.0.n_terms())
}

/// Writes the eigenvalues into `out`, which must hold `kr_spectrum_len` values.
#[no_mangle]
pub unsafe extern "C" fn kr_spectrum_eigenvalues(spec: *const KrSpectrum, out: *mut f64, len: usize) -> KrStatus {
    guard(|| {
        let s = get(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let values = s.0.eigenvalues();
        if len < values.len() {
            return Err((
                KrStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        Ok(())
    })
}

/// `K(x, y)` for `x, y` in `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn kr_spectrum_kernel(spec: *const KrSpectrum, x: f64, y: f64, out: *mut f64) -> KrStatus {
    guard(|| {
        let s = get(spec, "spec")?;
        let v = lib(s.0.kernel_eval(x, y))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Smallest positive solution of the localization fixed-point equation.
#[no_mangle]
pub unsafe extern "C" fn kr_fixed_point(spec: *const KrSpectrum, n: f64, c_tilde: f64, out: *mut f64) -> KrStatus {
    guard(|| {
        let s = get(spec, "spec")?;
        let v = lib(fixed_point_for(&s.0, n, c_tilde))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Target with coefficients `λ_i^σ i^{-q}` (1-based `i`) and uniform
/// response noise of half-width `noise`.
#[no_mangle]
pub unsafe extern "C" fn kr_task_new(
    spec: *const KrSpectrum,
    sigma: f64,
    q: f64,
    noise: f64,
    out: *mut *mut KrTask,
) -> KrStatus {
    guard(|| {
        let s = get(spec, "spec")?;
        let g = power_coefficients(s.0.n_terms(), q);
        let task = lib(make_target(s.0.clone(), sigma, &g).and_then(|t| t.with_noise(noise)))?;
        put(out, KrTask(task))
    })
}

#[no_mangle]
pub unsafe extern "C" fn kr_task_free(task: *mut KrTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Target value `f(x)`.
#[no_mangle]
pub unsafe extern "C" fn kr_task_eval(task: *const KrTask, x: f64, out: *mut f64) -> KrStatus {
    guard(|| {
        let t = get(task, "task")?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.0.eval(x);
        Ok(())
    })
}

/// Draws `n` observations; the same seed gives the same sample.
#[no_mangle]
pub unsafe extern "C" fn kr_task_sample(task: *const KrTask, n: usize, seed: u64, out: *mut *mut KrSample) -> KrStatus {
    guard(|| {
        let t = get(task, "task")?;
        let sample = lib(t.0.draw_sample(n, seed))?;
        put(out, KrSample(sample))
    })
}

/// Population excess risk `‖f − f_target‖²` of a fit.
#[no_mangle]
pub unsafe extern "C" fn kr_task_excess(task: *const KrTask, fit: *const KrFit, out: *mut f64) -> KrStatus {
    guard(|| {
        let t = get(task, "task")?;
        let f = get(fit, "fit")?;
        let v = lib(t.0.population_risk_excess(&f.0.coefficients))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Sample from caller-owned arrays of length `n`; the data are copied.
#[no_mangle]
pub unsafe extern "C" fn kr_sample_new(xs: *const f64, ys: *const f64, n: usize, out: *mut *mut KrSample) -> KrStatus {
    guard(|| {
        if n > 0 && (xs.is_null() || ys.is_null()) {
            return Err(null("xs/ys"));
        }
        let (xs, ys) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            (
                std::slice::from_raw_parts(xs, n).to_vec(),
                std::slice::from_raw_parts(ys, n).to_vec(),
            )
        };
        let sample = lib(SampleSet::new(xs, ys))?;
        put(out, KrSample(sample))
    })
}

#[no_mangle]
pub unsafe extern "C" fn kr_sample_free(sample: *mut KrSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

#[no_mangle]
pub unsafe extern "C" fn kr_sample_len(sample: *const KrSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.len())
}

/// Regularized least squares with the named regularizer (`"sublinear"`,
/// `"improved"`, `"quadratic"`, `"ridge_baseline"` or `"null"`) and default
/// constants apart from the multiplier `kappa1`.
#[no_mangle]
pub unsafe extern "C" fn kr_fit(
    spec: *const KrSpectrum,
    sample: *const KrSample,
    kind: *const c_char,
    kappa1: f64,
    out: *mut *mut KrFit,
) -> KrStatus {
    guard(|| {
        let s = get(spec, "spec")?;
        let sample = get(sample, "sample")?;
        if kind.is_null() {
            return Err(null("kind"));
        }
        let name = CStr::from_ptr(kind)
            .to_str()
            .map_err(|_| (KrStatus::InvalidArgument, "kind is not UTF-8".to_string()))?;
        let kind: RegularizerKind = lib(name.parse())?;
        if !(kappa1 > 0.0 && kappa1.is_finite()) {
            return Err((KrStatus::InvalidArgument, format!("kappa1 must be positive, got {kappa1}")));
        }
        let constants = Constants {
            kappa1,
            ..Constants::default()
        };
        let u = constants.u;
        let n = sample.0.len() as f64;
        let reg = lib(RegularizerSpec::new(kind, constants, &s.0, n))?;
        let frontier = lib(Frontier::for_sample(s.0.clone(), &sample.0, &default_eta_grid()))?;
        let fit = lib(frontier.regularized_erm(&reg, u))?;
        put(out, KrFit(fit))
    })
}

#[no_mangle]
pub unsafe extern "C" fn kr_fit_free(fit: *mut KrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// `f(x)` of a fit.
#[no_mangle]
pub unsafe extern "C" fn kr_fit_eval(fit: *const KrFit, x: f64, out: *mut f64) -> KrStatus {
    guard(|| {
        let f = get(fit, "fit")?;
        *out.as_mut().ok_or_else(|| null("out"))? = f.0.eval(x);
        Ok(())
    })
}

/// RKHS norm of a fit; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kr_fit_norm(fit: *const KrFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.h)
}

/// Mean squared training error of a fit; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kr_fit_loss(fit: *const KrFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_truncates_and_terminates() {
        set_error("abcdef");
        let mut buf = [1 as c_char; 4];
        let len = unsafe { kr_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(len, 6);
        assert_eq!(buf[3], 0);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, KrStatus::Panic);
        let len = unsafe { kr_last_error_message(ptr::null_mut(), 0) };
        assert!(len > 0);
    }
}
