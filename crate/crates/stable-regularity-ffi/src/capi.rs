//! The exported C functions.
//!
//! Conventions:
//! - Handles (`SrMatrix`, `SrReport`) are opaque; free them with the
//!   matching `sr_*_free`.
//! - Functions return an `SrStatus` code; `SR_STATUS_OK` is 0. On any
//!   failure, `sr_last_error_message` returns a thread-local description
//!   (free it with `sr_string_free`).
//! - Structured results are returned as JSON strings produced by the same
//!   serializers the CLI uses.

use stable_regularity::decay::DecayFn;
use stable_regularity::generators;
use stable_regularity::homogeneity::check_homogeneous;
use stable_regularity::matrix::{Range, ValueMatrix};
use stable_regularity::norms::{pseudorandomness, PseudorandomBudget, PseudorandomMode};
use stable_regularity::params::Params;
use stable_regularity::partition::{
    find_partition, PartitionBudget, PartitionMode, RegularityReport,
};
use stable_regularity::stability::{stability_index, SearchGuard, SearchMode};
use stable_regularity::witness::WitnessKind;
use stable_regularity::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NotSatisfied = 1,
    InputError = 2,
    CapabilityError = 3,
    InternalError = 4,
}

/// Opaque matrix handle.
pub struct SrMatrix(ValueMatrix);

/// Opaque partition-report handle.
pub struct SrReport(RegularityReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SrStatus {
    match err {
        Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Precondition(_) => {
            SrStatus::InputError
        }
        Error::Capability(_) => SrStatus::CapabilityError,
        Error::Internal(_) => SrStatus::InternalError,
    }
}

fn fail(err: &Error) -> SrStatus {
    set_error(&err.to_string());
    status_of(err)
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, SrStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(SrStatus::InputError);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SrStatus::InputError
    })
}

/// Last error message for this thread, or NULL. Free with
/// `sr_string_free`.
#[no_mangle]
pub extern "C" fn sr_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(c) => c.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a function of this library and not freed
/// yet.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a matrix from a dense row-major buffer. `signed_range` selects
/// `[-1,1]` entries; otherwise entries must lie in `[0,1]`.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be a
/// valid location for a handle.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    signed_range: bool,
    out: *mut *mut SrMatrix,
) -> SrStatus {
    if data.is_null() || out.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    let entries = std::slice::from_raw_parts(data, rows.saturating_mul(cols)).to_vec();
    let range = if signed_range { Range::Signed } else { Range::Unit };
    match ValueMatrix::new(rows, cols, entries, range) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(SrMatrix(m)));
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Read a matrix from a CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_read_csv(
    path: *const c_char,
    out: *mut *mut SrMatrix,
) -> SrStatus {
    let path = match cstr(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("null output pointer");
        return SrStatus::InputError;
    }
    match stable_regularity::io::read_matrix(std::path::Path::new(path)) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(SrMatrix(m)));
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Generate a matrix from a JSON generator spec (same schema as the CLI).
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_generate_json(
    spec_json: *const c_char,
    out: *mut *mut SrMatrix,
) -> SrStatus {
    let text = match cstr(spec_json) {
        Ok(p) => p,
        Err(s) => return s,
    };
    if out.is_null() {
        set_error("null output pointer");
        return SrStatus::InputError;
    }
    let spec: generators::GeneratorSpec = match serde_json::from_str(text) {
        Ok(s) => s,
        Err(e) => {
            set_error(&format!("bad generator spec: {e}"));
            return SrStatus::InputError;
        }
    };
    match generators::generate(&spec) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(SrMatrix(m)));
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `m` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_free(m: *mut SrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Matrix dimensions.
///
/// # Safety
/// `m` must be a live handle; out-pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn sr_matrix_shape(
    m: *const SrMatrix,
    rows: *mut usize,
    cols: *mut usize,
) -> SrStatus {
    if m.is_null() {
        set_error("null matrix handle");
        return SrStatus::InputError;
    }
    let mat = &(*m).0;
    if !rows.is_null() {
        *rows = mat.rows();
    }
    if !cols.is_null() {
        *cols = mat.cols();
    }
    SrStatus::Ok
}

/// Exact stability index: the largest chain length at threshold `delta`
/// (plain kind when `star` is false), capped at `k_max`.
///
/// # Safety
/// `m` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_stability_index(
    m: *const SrMatrix,
    delta: f64,
    star: bool,
    k_max: usize,
    out_index: *mut usize,
    out_exact: *mut bool,
) -> SrStatus {
    if m.is_null() || out_index.is_null() || out_exact.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    let kind = if star { WitnessKind::Star } else { WitnessKind::Plain };
    match stability_index(
        &(*m).0,
        delta,
        kind,
        SearchMode::Exact,
        &SearchGuard::default(),
        Some(k_max),
    ) {
        Ok(rep) => {
            *out_index = match kind {
                WitnessKind::Plain => rep.plain_index.unwrap_or(0),
                WitnessKind::Star => rep.star_index.unwrap_or(0),
            };
            *out_exact = rep.exact;
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Homogeneity of the full block pair at `(delta; gamma, epsilon)`.
/// `SR_STATUS_OK` with `*out_found = false` is an honest negative.
///
/// # Safety
/// `m` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_check_homogeneous(
    m: *const SrMatrix,
    delta: f64,
    gamma: f64,
    epsilon: f64,
    out_found: *mut bool,
    out_r: *mut f64,
    out_s: *mut f64,
) -> SrStatus {
    if m.is_null() || out_found.is_null() || out_r.is_null() || out_s.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    let mat = &(*m).0;
    let v: Vec<usize> = (0..mat.rows()).collect();
    let w: Vec<usize> = (0..mat.cols()).collect();
    match check_homogeneous(mat, &v, &w, delta, gamma, epsilon) {
        Ok(Some(wit)) => {
            *out_found = true;
            *out_r = wit.r;
            *out_s = wit.s;
            SrStatus::Ok
        }
        Ok(None) => {
            *out_found = false;
            *out_r = f64::NAN;
            *out_s = f64::NAN;
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Rectangle-pseudorandomness measurement. Exact mode enumerates the
/// smaller side (capped); otherwise a seeded alternating ascent reports a
/// lower bound and `min(||f||_1, 1)` as upper bound.
///
/// # Safety
/// `m` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_pseudorandomness(
    m: *const SrMatrix,
    exact: bool,
    seed: u64,
    out_lower: *mut f64,
    out_upper: *mut f64,
    out_exact: *mut bool,
) -> SrStatus {
    if m.is_null() || out_lower.is_null() || out_upper.is_null() || out_exact.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    let mode = if exact { PseudorandomMode::Exact } else { PseudorandomMode::Bounds };
    let budget = PseudorandomBudget { seed, ..Default::default() };
    match pseudorandomness(&(*m).0, mode, budget) {
        Ok(rep) => {
            *out_lower = rep.lower_bound;
            *out_upper = rep.upper_bound;
            *out_exact = rep.exact;
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Search for a homogeneous partition pair by greedy refinement with a
/// constant decay `sigma`. Returns `SR_STATUS_OK` with a report handle in
/// all regular outcomes; `NotSatisfied` is reflected in
/// `sr_report_satisfied`, not the status.
///
/// # Safety
/// `m` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_find_partition(
    m: *const SrMatrix,
    delta: f64,
    epsilon: f64,
    sigma: f64,
    max_blocks: usize,
    max_rounds: usize,
    out: *mut *mut SrReport,
) -> SrStatus {
    if m.is_null() || out.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    let decay = match DecayFn::constant(sigma) {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let params = match Params::new(delta, epsilon, epsilon, 2, decay) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let budget = PartitionBudget {
        max_blocks: max_blocks.max(1),
        max_rounds: max_rounds.max(1),
        min_block_frac: None,
    };
    match find_partition(&(*m).0, &params, PartitionMode::GreedyRefine, &budget) {
        Ok(rep) => {
            *out = Box::into_raw(Box::new(SrReport(rep)));
            SrStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `r` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_report_free(r: *mut SrReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Whether the report satisfies the homogeneity conclusion.
///
/// # Safety
/// `r` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_report_satisfied(r: *const SrReport) -> bool {
    !r.is_null() && (*r).0.satisfied
}

/// Block counts of the report's partitions.
///
/// # Safety
/// `r` must be a live handle; out-pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn sr_report_block_counts(
    r: *const SrReport,
    m: *mut usize,
    n: *mut usize,
) -> SrStatus {
    if r.is_null() {
        set_error("null report handle");
        return SrStatus::InputError;
    }
    if !m.is_null() {
        *m = (*r).0.partition_v.num_blocks();
    }
    if !n.is_null() {
        *n = (*r).0.partition_w.num_blocks();
    }
    SrStatus::Ok
}

/// The full report as a JSON string; free with `sr_string_free`.
///
/// # Safety
/// `r` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sr_report_to_json(
    r: *const SrReport,
    out: *mut *mut c_char,
) -> SrStatus {
    if r.is_null() || out.is_null() {
        set_error("null pointer argument");
        return SrStatus::InputError;
    }
    match serde_json::to_string(&(*r).0) {
        Ok(json) => match CString::new(json) {
            Ok(c) => {
                *out = c.into_raw();
                SrStatus::Ok
            }
            Err(_) => {
                set_error("report JSON contained a NUL byte");
                SrStatus::InternalError
            }
        },
        Err(e) => {
            set_error(&format!("serialization failed: {e}"));
            SrStatus::InternalError
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip_through_the_c_surface() {
        let data = [0.1f64, 0.9, 0.2, 0.8];
        let mut handle: *mut SrMatrix = ptr::null_mut();
        let st = unsafe { sr_matrix_new(2, 2, data.as_ptr(), false, &mut handle) };
        assert_eq!(st, SrStatus::Ok);
        let (mut r, mut c) = (0usize, 0usize);
        unsafe {
            assert_eq!(sr_matrix_shape(handle, &mut r, &mut c), SrStatus::Ok);
        }
        assert_eq!((r, c), (2, 2));
        unsafe { sr_matrix_free(handle) };
    }

    #[test]
    fn bad_entries_set_an_error() {
        let data = [0.1f64, 1.5];
        let mut handle: *mut SrMatrix = ptr::null_mut();
        let st = unsafe { sr_matrix_new(1, 2, data.as_ptr(), false, &mut handle) };
        assert_eq!(st, SrStatus::InputError);
        let msg = sr_last_error_message();
        assert!(!msg.is_null());
        unsafe { sr_string_free(msg) };
    }

    #[test]
    fn stability_through_the_c_surface() {
        let data = [1.0f64, 1.0, 0.0, 1.0];
        let mut handle: *mut SrMatrix = ptr::null_mut();
        unsafe {
            sr_matrix_new(2, 2, data.as_ptr(), false, &mut handle);
        }
        let mut index = 0usize;
        let mut exact = false;
        let st = unsafe { sr_stability_index(handle, 1.0, false, 4, &mut index, &mut exact) };
        assert_eq!(st, SrStatus::Ok);
        assert_eq!(index, 2);
        assert!(exact);
        unsafe { sr_matrix_free(handle) };
    }

    #[test]
    fn partition_report_through_the_c_surface() {
        let data = [0.5f64; 9];
        let mut handle: *mut SrMatrix = ptr::null_mut();
        unsafe {
            sr_matrix_new(3, 3, data.as_ptr(), false, &mut handle);
        }
        let mut report: *mut SrReport = ptr::null_mut();
        let st =
            unsafe { sr_find_partition(handle, 0.05, 0.2, 0.2, 16, 16, &mut report) };
        assert_eq!(st, SrStatus::Ok);
        assert!(unsafe { sr_report_satisfied(report) });
        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { sr_report_to_json(report, &mut json) }, SrStatus::Ok);
        assert!(!json.is_null());
        unsafe {
            sr_string_free(json);
            sr_report_free(report);
            sr_matrix_free(handle);
        }
    }
}
