//! C ABI over the `condnorm` library.
//!
//! Series are passed as `n` doubles with NaN marking a missing value.
//! Covariates are an `n x p` column-major matrix; column `j` is named `z{j}`
//! and gets a natural cubic smooth of dimension `k`. Every function that can
//! fail returns a [`CnStatus`]; the message of the last failure on the calling
//! thread is available from [`cn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use condnorm::basis::BasisSpec;
use condnorm::corr::{conditional_ccf, estimate_lag_time, evaluation_rows};
use condnorm::gam::{corr_link, corr_link_inv, Frame, Term};
use condnorm::impute::{impute_series, ImputeOptions};
use condnorm::normalize::ConditionalNormalizer;
use condnorm::series::{CovariateSet, TimeSeries};
use condnorm::Error;

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Input, schema or alignment problem in the data.
    Input = 3,
    /// A model could not be fitted.
    Estimation = 4,
    Bootstrap = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(e: &Error) -> CnStatus {
    match e {
        Error::Alignment(_) | Error::Range(_) | Error::Schema(_) | Error::Io { .. } | Error::Input { .. } => {
            CnStatus::Input
        }
        Error::Config(_) => CnStatus::InvalidArgument,
        Error::Estimation(_) | Error::Basis(_) | Error::Fit { .. } | Error::Contract(_) => CnStatus::Estimation,
        Error::Bootstrap { .. } => CnStatus::Bootstrap,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any failure and converts it into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CnStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("`{name}` is a null pointer"));
            CnStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            CnStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CnStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn series(name: &str, values: &[f64]) -> Result<TimeSeries, Failure> {
    Ok(TimeSeries::from_values(name, 0, 1, values.to_vec())?)
}

unsafe fn covariates(z: *const f64, n: usize, p: usize) -> Result<CovariateSet, Failure> {
    if n == 0 {
        return Err(Failure::Invalid("series length must be positive".into()));
    }
    let len = n
        .checked_mul(p)
        .ok_or_else(|| Failure::Invalid("covariate matrix is too large".into()))?;
    let z = slice(z, len, "z")?;
    let mut cols: Vec<TimeSeries> = (0..p)
        .map(|j| series(&format!("z{j}"), &z[j * n..(j + 1) * n]))
        .collect::<Result<_, _>>()?;
    if cols.is_empty() {
        // carries the grid for intercept-only models
        cols.push(TimeSeries::from_values("grid", 0, 1, vec![0.0; n])?);
    }
    Ok(CovariateSet::new(cols)?)
}

fn terms(p: usize, k: usize) -> Vec<Term> {
    (0..p)
        .map(|j| Term::new(format!("z{j}"), BasisSpec::natural_cubic(k)))
        .collect()
}

fn frame(z: &CovariateSet) -> Frame {
    Frame::from_covariates(z, &(0..z.len()).collect::<Vec<_>>())
}

fn into_c_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::Invalid("string contains a nul byte".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Correlation link `log((1 + c) / (1 - c))`.
#[no_mangle]
pub extern "C" fn cn_corr_link(c: f64) -> f64 {
    corr_link(c)
}

/// Inverse correlation link, mapping the real line onto `(-1, 1)`.
#[no_mangle]
pub extern "C" fn cn_corr_link_inv(u: f64) -> f64 {
    corr_link_inv(u)
}

/// Fitted conditional mean and variance model.
pub struct CnNormalizer {
    inner: ConditionalNormalizer,
    covariates: usize,
}

/// Fits a conditional normalizer of `y` on the covariates.
///
/// # Safety
/// `y` must point to `n` doubles, `z` to `n * p` doubles and `out` must be
/// writable. Free the handle with [`cn_normalizer_free`].
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_fit(
    y: *const f64,
    n: usize,
    z: *const f64,
    p: usize,
    k: usize,
    out: *mut *mut CnNormalizer,
) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let zs = covariates(z, n, p)?;
        let ys = series("y", slice(y, n, "y")?)?;
        let inner = ConditionalNormalizer::fit(&ys, &zs, &terms(p, k))?;
        *out = Box::into_raw(Box::new(CnNormalizer { inner, covariates: p }));
        Ok(())
    })
}

/// Restores a normalizer from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_from_json(json: *const c_char, out: *mut *mut CnNormalizer) -> CnStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure::Invalid("json is not valid UTF-8".into()))?;
        let inner = ConditionalNormalizer::from_json(text)?;
        let covariates = inner.covariates().len();
        *out = Box::into_raw(Box::new(CnNormalizer { inner, covariates }));
        Ok(())
    })
}

/// Number of covariate columns the model expects.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_covariates(h: *const CnNormalizer) -> usize {
    h.as_ref().map_or(0, |h| h.covariates)
}

unsafe fn handle<'a>(h: *const CnNormalizer) -> Result<&'a CnNormalizer, Failure> {
    h.as_ref().ok_or(Failure::Null("handle"))
}

fn check_width(h: &CnNormalizer, p: usize) -> Result<(), Failure> {
    if h.covariates != p {
        return Err(Failure::Invalid(format!(
            "model has {} covariates, {p} given",
            h.covariates
        )));
    }
    Ok(())
}

/// Writes `(y - m(z)) / sqrt(v(z))` into `out`; NaN where `y` or a covariate is missing.
///
/// # Safety
/// `h` must be a live handle, `y` and `out` must hold `n` doubles and `z` `n * p`.
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_normalize(
    h: *const CnNormalizer,
    y: *const f64,
    n: usize,
    z: *const f64,
    p: usize,
    out: *mut f64,
) -> CnStatus {
    guard(|| {
        let h = handle(h)?;
        check_width(h, p)?;
        let zs = covariates(z, n, p)?;
        let ys = series("y", slice(y, n, "y")?)?;
        let out = slice_mut(out, n, "out")?;
        let norm = h.inner.normalize(&ys, &zs)?;
        out.copy_from_slice(norm.y_star.raw_values());
        Ok(())
    })
}

/// Writes `y* sqrt(v(z)) + m(z)` into `out`.
///
/// # Safety
/// As for [`cn_normalizer_normalize`].
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_unnormalize(
    h: *const CnNormalizer,
    y_star: *const f64,
    n: usize,
    z: *const f64,
    p: usize,
    out: *mut f64,
) -> CnStatus {
    guard(|| {
        let h = handle(h)?;
        check_width(h, p)?;
        let zs = covariates(z, n, p)?;
        let ys = slice(y_star, n, "y_star")?;
        let out = slice_mut(out, n, "out")?;
        out.copy_from_slice(&h.inner.unnormalize(ys, &frame(&zs))?);
        Ok(())
    })
}

/// Serializes the model to JSON. Free the string with [`cn_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_to_json(h: *const CnNormalizer, out: *mut *mut c_char) -> CnStatus {
    guard(|| {
        let h = handle(h)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        into_c_string(h.inner.to_json(), out)
    })
}

/// Releases a normalizer handle.
///
/// # Safety
/// `h` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cn_normalizer_free(h: *mut CnNormalizer) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Fills missing values of `y` by conditional normalization and AR smoothing.
///
/// `out` receives the filled series (observed values unchanged, NaN where no
/// fill was possible). `lo95` and `hi95` may be null.
///
/// # Safety
/// `y`, `out` and non-null bound buffers must hold `n` doubles, `z` `n * p`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cn_impute(
    y: *const f64,
    n: usize,
    z: *const f64,
    p: usize,
    k: usize,
    max_order: usize,
    out: *mut f64,
    lo95: *mut f64,
    hi95: *mut f64,
) -> CnStatus {
    guard(|| {
        let zs = covariates(z, n, p)?;
        let ys = series("y", slice(y, n, "y")?)?;
        let out = slice_mut(out, n, "out")?;
        let opts = ImputeOptions {
            max_order,
            ..Default::default()
        };
        let imp = impute_series(&ys, &zs, &terms(p, k), &opts)?;
        out.copy_from_slice(imp.series.raw_values());
        if !lo95.is_null() {
            slice_mut(lo95, n, "lo95")?.copy_from_slice(&imp.lo95);
        }
        if !hi95.is_null() {
            slice_mut(hi95, n, "hi95")?.copy_from_slice(&imp.hi95);
        }
        Ok(())
    })
}

/// Estimates the lag time from upstream `x` to downstream `y` as the argmax
/// over lags `1..=max_lag` of the conditional cross-correlation.
///
/// Both series are conditionally normalized first. `lag` receives the lag
/// time per grid row and `c_max` the maximal correlation; rows outside the
/// evaluation set get 0 and NaN.
///
/// # Safety
/// `x`, `y`, `c_max` must hold `n` doubles, `lag` `n` entries, `z` `n * p`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cn_lagtime(
    x: *const f64,
    y: *const f64,
    n: usize,
    z: *const f64,
    p: usize,
    k: usize,
    max_lag: usize,
    lag: *mut usize,
    c_max: *mut f64,
) -> CnStatus {
    guard(|| {
        let zs = covariates(z, n, p)?;
        let xs = series("x", slice(x, n, "x")?)?;
        let ys = series("y", slice(y, n, "y")?)?;
        let lag = slice_mut(lag, n, "lag")?;
        let c_max = slice_mut(c_max, n, "c_max")?;
        let t = terms(p, k);
        let x_star = ConditionalNormalizer::fit(&xs, &zs, &t)?.normalize(&xs, &zs)?.y_star;
        let y_star = ConditionalNormalizer::fit(&ys, &zs, &t)?.normalize(&ys, &zs)?.y_star;
        let models = conditional_ccf(&x_star, &y_star, &zs, max_lag, &t)?;
        let rows = evaluation_rows(&models, &zs);
        let est = estimate_lag_time(&models, &zs, &rows)?;
        lag.fill(0);
        c_max.fill(f64::NAN);
        for (i, r) in est.rows.iter().enumerate() {
            lag[*r] = est.lag_time[i];
            c_max[*r] = est.c_max[i];
        }
        Ok(())
    })
}
