//! C ABI for the pkm clustering library.
//!
//! Datasets and results are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns a
//! [`PkmStatus`]; on failure, [`pkm_last_error_message`] describes the cause
//! for the calling thread. Array accessors copy into caller-provided buffers
//! and fail with `PKM_STATUS_BUFFER_TOO_SMALL` when the buffer is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pkm::baselines::{fcm, kmeans_pp, FcmConfig};
use pkm::datasets::{load_csv, CsvOptions, Delimiter};
use pkm::metrics::{ari, nmi, v_measure};
use pkm::{ClusterResult, Dataset, Error, Method, SolverConfig, Termination};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    ParseError = 3,
    IoError = 4,
    EmptyDataset = 5,
    NonFiniteValue = 6,
    DimensionCap = 7,
    DegenerateCluster = 8,
    RankDeficient = 9,
    DegenerateDirection = 10,
    IdenticalCenters = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for PkmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DegenerateCluster { .. } => PkmStatus::DegenerateCluster,
            Error::RankDeficient { .. } => PkmStatus::RankDeficient,
            Error::DegenerateDirection { .. } => PkmStatus::DegenerateDirection,
            Error::DimensionCap { .. } => PkmStatus::DimensionCap,
            Error::IdenticalCenters { .. } => PkmStatus::IdenticalCenters,
            Error::InvalidInput(_) => PkmStatus::InvalidInput,
            Error::Parse { .. } => PkmStatus::ParseError,
            Error::EmptyDataset => PkmStatus::EmptyDataset,
            Error::NonFiniteValue { .. } => PkmStatus::NonFiniteValue,
            Error::Io { .. } => PkmStatus::IoError,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkmMethod {
    Agp = 0,
    Msagp = 1,
    Fmsagp = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkmTermination {
    Kkt = 0,
    ObjectiveStall = 1,
    Converged = 2,
    NotConverged = 3,
}

impl From<Termination> for PkmTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Kkt => PkmTermination::Kkt,
            Termination::ObjectiveStall => PkmTermination::ObjectiveStall,
            Termination::Converged => PkmTermination::Converged,
            Termination::NotConverged => PkmTermination::NotConverged,
        }
    }
}

/// Solver settings. Start from [`pkm_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PkmOptions {
    pub method: PkmMethod,
    /// Fixed step length used by AGP.
    pub step_length: f64,
    pub max_iterations: usize,
    pub direction_tolerance: f64,
    pub objective_tolerance: f64,
    pub seed: u64,
    /// Largest accepted point count times cluster count.
    pub lk_cap: usize,
}

impl From<&PkmOptions> for SolverConfig {
    fn from(o: &PkmOptions) -> Self {
        SolverConfig {
            method: match o.method {
                PkmMethod::Agp => Method::Agp,
                PkmMethod::Msagp => Method::Msagp,
                PkmMethod::Fmsagp => Method::Fmsagp,
            },
            step_length: o.step_length,
            max_iterations: o.max_iterations,
            direction_tolerance: o.direction_tolerance,
            objective_tolerance: o.objective_tolerance,
            seed: o.seed,
            lk_cap: o.lk_cap,
        }
    }
}

/// Opaque dataset handle.
pub struct PkmDataset(Dataset);

/// Opaque clustering result handle.
pub struct PkmResult(ClusterResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: PkmStatus, msg: impl Into<String>) -> PkmStatus {
    set_last_error(msg);
    status
}

fn fail_with(e: &Error) -> PkmStatus {
    fail(PkmStatus::from(e), e.to_string())
}

/// Runs `f`, converting panics into `PKM_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> PkmStatus) -> PkmStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PkmStatus::Panic, msg)
        }
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, len: usize) -> PkmStatus {
    if out.is_null() {
        return fail(PkmStatus::NullPointer, "output buffer is null");
    }
    if len < src.len() {
        return fail(
            PkmStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    PkmStatus::Ok
}

unsafe fn labels_from_raw<'a>(labels: *const usize, n: usize) -> Option<&'a [usize]> {
    (!labels.is_null()).then(|| std::slice::from_raw_parts(labels, n))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pkm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pkm_options_default() -> PkmOptions {
    let d = SolverConfig::default();
    PkmOptions {
        method: PkmMethod::Fmsagp,
        step_length: d.step_length,
        max_iterations: d.max_iterations,
        direction_tolerance: d.direction_tolerance,
        objective_tolerance: d.objective_tolerance,
        seed: d.seed,
        lk_cap: d.lk_cap,
    }
}

/// Creates a dataset from `n_points * dim` row-major coordinates. `labels`
/// may be null; otherwise it holds `n_points` ground-truth labels.
///
/// # Safety
/// `points` must be valid for `n_points * dim` reads, `labels` (if non-null)
/// for `n_points` reads, and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_new(
    points: *const f64,
    n_points: usize,
    dim: usize,
    labels: *const usize,
    out: *mut *mut PkmDataset,
) -> PkmStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return fail(PkmStatus::NullPointer, "points or out is null");
        }
        let Some(len) = n_points.checked_mul(dim) else {
            return fail(PkmStatus::InvalidInput, "n_points * dim overflows");
        };
        let coords = std::slice::from_raw_parts(points, len).to_vec();
        let labels = labels_from_raw(labels, n_points).map(<[usize]>::to_vec);
        match Dataset::from_flat("ffi", coords, dim, labels) {
            Ok(x) => {
                put(out, PkmDataset(x));
                PkmStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Loads a comma-separated file (gzip accepted). `label_column < 0` means the
/// file has no label column.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_load_csv(
    path: *const c_char,
    has_header: bool,
    label_column: i64,
    out: *mut *mut PkmDataset,
) -> PkmStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(PkmStatus::NullPointer, "path or out is null");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(PkmStatus::InvalidInput, "path is not UTF-8");
        };
        let opts = CsvOptions {
            has_header,
            label_column: usize::try_from(label_column).ok(),
            delimiter: Delimiter::Comma,
        };
        match load_csv(Path::new(path), &opts) {
            Ok(x) => {
                put(out, PkmDataset(x));
                PkmStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_free(ds: *mut PkmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_n_points(ds: *const PkmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_dim(ds: *const PkmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.dim())
}

/// Whether the dataset carries ground-truth labels.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_has_labels(ds: *const PkmDataset) -> bool {
    ds.as_ref().is_some_and(|d| d.0.labels().is_some())
}

/// Copies the `n_points` ground-truth labels into `out`.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pkm_dataset_labels(
    ds: *const PkmDataset,
    out: *mut usize,
    len: usize,
) -> PkmStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(PkmStatus::NullPointer, "dataset is null");
        };
        match ds.0.labels() {
            Some(labels) => copy_out(labels, out, len),
            None => fail(PkmStatus::InvalidInput, "dataset has no labels"),
        }
    })
}

unsafe fn run(
    ds: *const PkmDataset,
    out: *mut *mut PkmResult,
    f: impl FnOnce(&Dataset) -> pkm::Result<ClusterResult>,
) -> PkmStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(PkmStatus::NullPointer, "dataset is null");
        };
        if out.is_null() {
            return fail(PkmStatus::NullPointer, "out is null");
        }
        match f(&ds.0) {
            Ok(r) => {
                put(out, PkmResult(r));
                PkmStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Fits the probabilistic K-means model. `opts` may be null for defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, `opts` null or valid, and `out` valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn pkm_solve(
    ds: *const PkmDataset,
    k: usize,
    opts: *const PkmOptions,
    out: *mut *mut PkmResult,
) -> PkmStatus {
    let cfg = SolverConfig::from(
        &opts
            .as_ref()
            .copied()
            .unwrap_or_else(|| pkm_options_default()),
    );
    run(ds, out, |x| pkm::solve(x, k, &cfg))
}

/// Runs K-means++ seeding followed by Lloyd iterations.
///
/// # Safety
/// As for [`pkm_solve`].
#[no_mangle]
pub unsafe extern "C" fn pkm_kmeans_pp(
    ds: *const PkmDataset,
    k: usize,
    seed: u64,
    out: *mut *mut PkmResult,
) -> PkmStatus {
    run(ds, out, |x| kmeans_pp(x, k, seed))
}

/// Runs fuzzy c-means with fuzzifier `m`.
///
/// # Safety
/// As for [`pkm_solve`].
#[no_mangle]
pub unsafe extern "C" fn pkm_fcm(
    ds: *const PkmDataset,
    k: usize,
    m: f64,
    seed: u64,
    out: *mut *mut PkmResult,
) -> PkmStatus {
    let cfg = FcmConfig::with_m(m).with_seed(seed);
    run(ds, out, |x| fcm(x, k, &cfg))
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_free(r: *mut PkmResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_n_points(r: *const PkmResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.labels.len())
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_n_clusters(r: *const PkmResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.centers.len())
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_dim(r: *const PkmResult) -> usize {
    r.as_ref()
        .and_then(|r| r.0.centers.first())
        .map_or(0, Vec::len)
}

/// Objective of the method that produced the result, or NaN for null.
///
/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_objective(r: *const PkmResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.objective)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_iterations(r: *const PkmResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_termination(r: *const PkmResult) -> PkmTermination {
    r.as_ref()
        .map_or(PkmTermination::NotConverged, |r| r.0.termination.into())
}

/// Seed of the run that produced the result.
///
/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_seed(r: *const PkmResult) -> u64 {
    r.as_ref().map_or(0, |r| r.0.seed)
}

/// Number of entries in the objective trace.
///
/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_trace_len(r: *const PkmResult) -> usize {
    r.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Copies the `n_points` hard labels.
///
/// # Safety
/// `r` must be a live result handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_labels(
    r: *const PkmResult,
    out: *mut usize,
    len: usize,
) -> PkmStatus {
    with_result(r, |r| copy_out(&r.labels, out, len))
}

/// Copies the `n_points * n_clusters` row-major membership matrix.
///
/// # Safety
/// `r` must be a live result handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_probabilities(
    r: *const PkmResult,
    out: *mut f64,
    len: usize,
) -> PkmStatus {
    with_result(r, |r| copy_out(r.probabilities.as_vector(), out, len))
}

/// Copies the `n_clusters * dim` row-major centers.
///
/// # Safety
/// `r` must be a live result handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_centers(
    r: *const PkmResult,
    out: *mut f64,
    len: usize,
) -> PkmStatus {
    with_result(r, |r| copy_out(&r.centers.concat(), out, len))
}

/// Copies the objective value recorded at each iteration.
///
/// # Safety
/// `r` must be a live result handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pkm_result_trace_objective(
    r: *const PkmResult,
    out: *mut f64,
    len: usize,
) -> PkmStatus {
    with_result(r, |r| {
        let values: Vec<f64> = r.trace.iter().map(|t| t.objective).collect();
        copy_out(&values, out, len)
    })
}

unsafe fn with_result(
    r: *const PkmResult,
    f: impl FnOnce(&ClusterResult) -> PkmStatus,
) -> PkmStatus {
    guard(|| match r.as_ref() {
        Some(r) => f(&r.0),
        None => fail(PkmStatus::NullPointer, "result is null"),
    })
}

unsafe fn metric(
    a: *const usize,
    b: *const usize,
    n: usize,
    out: *mut f64,
    f: fn(&[usize], &[usize]) -> pkm::Result<f64>,
) -> PkmStatus {
    guard(|| {
        let (Some(a), Some(b)) = (labels_from_raw(a, n), labels_from_raw(b, n)) else {
            return fail(PkmStatus::NullPointer, "label array is null");
        };
        if out.is_null() {
            return fail(PkmStatus::NullPointer, "out is null");
        }
        match f(a, b) {
            Ok(v) => {
                *out = v;
                PkmStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Normalized mutual information (geometric-mean normalization).
///
/// # Safety
/// `a` and `b` must be valid for `n` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn pkm_nmi(
    a: *const usize,
    b: *const usize,
    n: usize,
    out: *mut f64,
) -> PkmStatus {
    metric(a, b, n, out, nmi)
}

/// Adjusted Rand index.
///
/// # Safety
/// As for [`pkm_nmi`].
#[no_mangle]
pub unsafe extern "C" fn pkm_ari(
    a: *const usize,
    b: *const usize,
    n: usize,
    out: *mut f64,
) -> PkmStatus {
    metric(a, b, n, out, ari)
}

/// V-measure with `truth` as the reference partition.
///
/// # Safety
/// As for [`pkm_nmi`].
#[no_mangle]
pub unsafe extern "C" fn pkm_v_measure(
    truth: *const usize,
    pred: *const usize,
    n: usize,
    out: *mut f64,
) -> PkmStatus {
    metric(truth, pred, n, out, v_measure)
}
