//! C ABI over `cluster_edgeworth`.
//!
//! Datasets live behind an opaque `CeDataset` handle created by
//! `ce_dataset_new` or `ce_dataset_from_csv` and released with
//! `ce_dataset_free`. Every fallible call returns a `CeStatus`; on failure
//! `ce_last_error_message` describes the error for the calling thread.
//! No function unwinds across the boundary.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use cluster_edgeworth::data::{DataTable, PanelSchema};
use cluster_edgeworth::edgeworth::hermite;
use cluster_edgeworth::methods::{
    evaluate, student_cv, Method, MethodDetails, MethodOptions, StudentVariant,
};
use cluster_edgeworth::ols::fit;
use cluster_edgeworth::rng::StreamKey;
use cluster_edgeworth::{ClusterBlock, ClusteredDataset, Error, Hypothesis, MomentOptions};
use nalgebra::{DMatrix, DVector};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad argument value (dimensions, alpha, draw count, method domain).
    InvalidArgument = 2,
    /// Input data rejected (schema, parse, validation, i/o).
    InvalidData = 3,
    /// Singular Gram matrix or vanishing variance.
    Numerical = 4,
    /// Internal error; the library caught a panic.
    Internal = 5,
}

/// Small-sample adjustment for `ce_student_cv`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeStudentVariant {
    D1 = 1,
    D2 = 2,
    D3 = 3,
}

/// Opaque dataset handle.
pub struct CeDataset {
    inner: ClusteredDataset,
}

/// Output of `ce_infer`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CeInference {
    pub num_clusters: usize,
    pub num_obs: usize,
    pub num_regressors: usize,
    /// `lambda' beta_hat`
    pub estimate: f64,
    pub sigma_hat: f64,
    /// `sigma_hat / sqrt(G)`
    pub std_error: f64,
    pub t_stat: f64,
    pub z0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub q2_at_z0: f64,
    /// Corrected critical value `z0 - q2(z0) / G`.
    pub cv: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// 1 if `|t| > cv`.
    pub reject: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> CeStatus {
    match e {
        Error::Rank { .. } | Error::DegenerateVariance | Error::IdentityFailure(_) => {
            CeStatus::Numerical
        }
        Error::Argument(_) | Error::Domain(_) | Error::Config(_) => CeStatus::InvalidArgument,
        Error::Io { .. } | Error::Schema(_) | Error::Parse { .. } | Error::Validation(_) => {
            CeStatus::InvalidData
        }
        Error::DesignIntegrity(_) => CeStatus::Internal,
    }
}

struct Failure(CeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CeStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(CeStatus::InvalidArgument, message.into())
}

/// Runs `f`, recording any error or panic for `ce_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CeStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal error (panic caught at the C boundary)");
            CeStatus::Internal
        }
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn dataset_arg<'a>(p: *const CeDataset) -> Result<&'a ClusteredDataset, Failure> {
    p.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn hypothesis_arg(
    lambda: *const f64,
    lambda_len: usize,
    c0: f64,
    alpha: f64,
) -> Result<Hypothesis, Failure> {
    let lambda = slice_arg(lambda, lambda_len, "lambda")?;
    Ok(Hypothesis::new(
        DVector::from_column_slice(lambda),
        c0,
        alpha,
    )?)
}

fn into_handle(d: ClusteredDataset, out: *mut *mut CeDataset) {
    let handle = Box::into_raw(Box::new(CeDataset { inner: d }));
    // SAFETY: the caller checked `out` for null.
    unsafe { *out = handle };
}

/// Builds a dataset from row-major arrays: `y[n]`, `x[n * k]` and one cluster
/// identifier per row. Rows sharing an identifier form one cluster, in
/// order of first appearance.
///
/// # Safety
/// `y`, `x` and `cluster_ids` must point to `n`, `n * k` and `n` readable
/// values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_new(
    y: *const f64,
    x: *const f64,
    cluster_ids: *const u64,
    n: usize,
    k: usize,
    out: *mut *mut CeDataset,
) -> CeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 || k == 0 {
            return Err(invalid("n and k must be positive"));
        }
        let total = n.checked_mul(k).ok_or_else(|| invalid("n * k overflows"))?;
        let y = slice_arg(y, n, "y")?;
        let x = slice_arg(x, total, "x")?;
        let ids = slice_arg(cluster_ids, n, "cluster_ids")?;

        let mut slot_of: HashMap<u64, usize> = HashMap::new();
        let mut rows: Vec<(u64, Vec<usize>)> = Vec::new();
        for (i, &id) in ids.iter().enumerate() {
            let slot = *slot_of.entry(id).or_insert_with(|| {
                rows.push((id, Vec::new()));
                rows.len() - 1
            });
            rows[slot].1.push(i);
        }
        let clusters = rows
            .into_iter()
            .map(|(id, idx)| {
                let yg = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
                let xg = DMatrix::from_fn(idx.len(), k, |r, c| x[idx[r] * k + c]);
                ClusterBlock::new(id.to_string(), yg, xg)
            })
            .collect::<Result<Vec<_>, _>>()?;
        into_handle(ClusteredDataset::new(clusters)?, out);
        Ok(())
    })
}

/// Loads a dataset from a comma-separated file with a header row.
///
/// # Safety
/// String arguments must be NUL-terminated; `x_cols` must hold `num_x`
/// such strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_from_csv(
    path: *const c_char,
    cluster_col: *const c_char,
    y_col: *const c_char,
    x_cols: *const *const c_char,
    num_x: usize,
    out: *mut *mut CeDataset,
) -> CeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if num_x == 0 {
            return Err(invalid("at least one regressor column is required"));
        }
        let path = str_arg(path, "path")?;
        let names = slice_arg(x_cols, num_x, "x_cols")?
            .iter()
            .map(|&p| str_arg(p, "x_cols entry").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let schema = PanelSchema {
            cluster: str_arg(cluster_col, "cluster_col")?.to_string(),
            y: str_arg(y_col, "y_col")?.to_string(),
            x: names,
        };
        let d = DataTable::read_path(Path::new(path), b',')?.to_dataset(&schema)?;
        into_handle(d, out);
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from `ce_dataset_new`/`ce_dataset_from_csv` and not
/// have been freed.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_free(dataset: *mut CeDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of clusters, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_num_clusters(dataset: *const CeDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_clusters())
}

/// Number of observations, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_num_obs(dataset: *const CeDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_obs())
}

/// Number of regressors, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ce_dataset_num_regressors(dataset: *const CeDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_regressors())
}

/// Fits OLS, estimates the Edgeworth moments and fills `out` with the
/// corrected critical value and interval. `truncation <= 0` disables
/// winsorizing of the moment summands.
///
/// # Safety
/// `dataset` must be a live handle, `lambda` must hold `lambda_len` values
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_infer(
    dataset: *const CeDataset,
    lambda: *const f64,
    lambda_len: usize,
    c0: f64,
    alpha: f64,
    truncation: f64,
    out: *mut CeInference,
) -> CeStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = dataset_arg(dataset)?;
        let h = hypothesis_arg(lambda, lambda_len, c0, alpha)?;
        let fitted = fit(d, &h)?;
        let opts = MethodOptions {
            boot: 1,
            key: StreamKey::root(0),
            moments: MomentOptions {
                truncation: (truncation > 0.0).then_some(truncation),
            },
        };
        let r = evaluate(Method::Analytic, d, &fitted, &opts)?;
        let MethodDetails::Analytic { moments, critical } = &r.details else {
            return Err(Failure(
                CeStatus::Internal,
                "unexpected method details".into(),
            ));
        };
        let (ci_lower, ci_upper) = r.interval(&fitted);
        *out = CeInference {
            num_clusters: d.num_clusters(),
            num_obs: d.num_obs(),
            num_regressors: d.num_regressors(),
            estimate: fitted.estimate(),
            sigma_hat: fitted.sigma_hat(),
            std_error: fitted.std_error(),
            t_stat: fitted.t_stat(),
            z0: critical.z0,
            k1: moments.k1(),
            k2: moments.k2(),
            k3: moments.k3(),
            k4: moments.k4(),
            q2_at_z0: critical.q2_at_z0,
            cv: critical.cv,
            ci_lower,
            ci_upper,
            reject: i32::from(r.reject),
        };
        Ok(())
    })
}

/// Copies `beta_hat` into `out` (length `k`).
///
/// # Safety
/// `dataset` must be a live handle and `out` must hold `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ce_beta_hat(
    dataset: *const CeDataset,
    out: *mut f64,
    out_len: usize,
) -> CeStatus {
    guard(|| {
        let d = dataset_arg(dataset)?;
        let k = d.num_regressors();
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len != k {
            return Err(invalid(format!("out has length {out_len}, expected k={k}")));
        }
        // Any non-zero lambda yields the same beta_hat.
        let h = Hypothesis::coefficient(k, 0, 0.0, 0.05)?;
        let fitted = fit(d, &h)?;
        slice::from_raw_parts_mut(out, k).copy_from_slice(fitted.beta_hat().as_slice());
        Ok(())
    })
}

/// Adjusted Student critical value `sqrt(d) * t_{G-1, 1 - alpha/2}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_student_cv(
    num_clusters: usize,
    num_obs: usize,
    num_regressors: usize,
    variant: CeStudentVariant,
    alpha: f64,
    out: *mut f64,
) -> CeStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v = match variant {
            CeStudentVariant::D1 => StudentVariant::D1,
            CeStudentVariant::D2 => StudentVariant::D2,
            CeStudentVariant::D3 => StudentVariant::D3,
        };
        *out = student_cv(num_clusters, num_obs, num_regressors, v, alpha)?;
        Ok(())
    })
}

unsafe fn bootstrap_cv(
    method: Method,
    dataset: *const CeDataset,
    lambda: *const f64,
    lambda_len: usize,
    c0: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
    out: *mut f64,
) -> CeStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = dataset_arg(dataset)?;
        let h = hypothesis_arg(lambda, lambda_len, c0, alpha)?;
        let fitted = fit(d, &h)?;
        let opts = MethodOptions {
            boot: draws,
            key: StreamKey::root(seed),
            moments: MomentOptions::default(),
        };
        *out = evaluate(method, d, &fitted, &opts)?.cv_effective;
        Ok(())
    })
}

/// Pairs percentile-t cluster bootstrap critical value for `|t|`. Matches the
/// command-line tool for the same seed.
///
/// # Safety
/// As for `ce_infer`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_pairs_bootstrap_cv(
    dataset: *const CeDataset,
    lambda: *const f64,
    lambda_len: usize,
    c0: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
    out: *mut f64,
) -> CeStatus {
    bootstrap_cv(
        Method::Pairs,
        dataset,
        lambda,
        lambda_len,
        c0,
        alpha,
        draws,
        seed,
        out,
    )
}

/// Restricted wild cluster bootstrap (Rademacher) critical value for `|t|`.
///
/// # Safety
/// As for `ce_infer`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_wild_bootstrap_cv(
    dataset: *const CeDataset,
    lambda: *const f64,
    lambda_len: usize,
    c0: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
    out: *mut f64,
) -> CeStatus {
    bootstrap_cv(
        Method::Wcb,
        dataset,
        lambda,
        lambda_len,
        c0,
        alpha,
        draws,
        seed,
        out,
    )
}

/// Probabilists' Hermite polynomial of order 1, 2, 3 or 5.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ce_hermite(order: u32, z: f64, out: *mut f64) -> CeStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = hermite(order, z)?;
        Ok(())
    })
}

/// Message for the most recent failing call on this thread ("" after a
/// success). The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ce_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
