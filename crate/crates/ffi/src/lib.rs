//! C ABI over `reprstruct`.
//!
//! Objects are opaque handles created by `rs_*_new`/`rs_*_read` style calls
//! and released with the matching `rs_*_free`. Every fallible call returns an
//! [`RsStatus`]; on failure the message is available from
//! [`rs_last_error_message`] on the same thread until the next failing call.
//! Strings returned by the library are freed with [`rs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use reprstruct::{AnalyzeOptions, Error, MeasureReport, RepresentationBatch, SentenceRecord, Weighting};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    NullOrInvalidArgument = 1,
    /// A parameter was out of range (bin count, min count, ...).
    InvalidParameter = 2,
    /// Data or validation error: shapes, alignment, format, undefined measure.
    Data = 3,
    Io = 4,
    /// The library panicked; this is a bug.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsMeasure {
    Variation = 0,
    Regularity = 1,
    Disentanglement = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RsAnalyzeOptions {
    /// Apply the Miller-Madow correction.
    pub corrected: bool,
    /// Labels with fewer rows are excluded.
    pub min_count: usize,
    /// Weight label means by label frequency instead of uniformly.
    pub frequency_weighting: bool,
    /// Include per-label values in the JSON report.
    pub per_label: bool,
}

impl From<&RsAnalyzeOptions> for AnalyzeOptions {
    fn from(o: &RsAnalyzeOptions) -> Self {
        AnalyzeOptions {
            corrected: o.corrected,
            min_count: o.min_count,
            weighting: if o.frequency_weighting {
                Weighting::Frequency
            } else {
                Weighting::Unweighted
            },
            per_label: o.per_label,
            ..Default::default()
        }
    }
}

/// A row-major float32 matrix of representations.
pub struct RsBatch {
    inner: RepresentationBatch,
}

/// A named per-row assignment of label ids.
pub struct RsLabelSet {
    name: String,
    ids: Vec<u32>,
}

pub struct RsReport {
    inner: MeasureReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RsStatus, msg: impl Into<String>) -> RsStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> RsStatus {
    match e {
        Error::InvalidParameter(_) => RsStatus::InvalidParameter,
        Error::Io { .. } => RsStatus::Io,
        _ => RsStatus::Data,
    }
}

fn from_error(e: Error) -> RsStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

fn guard(f: impl FnOnce() -> RsStatus) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RsStatus::Internal, "internal error: panic in reprstruct"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RsStatus> {
    if p.is_null() {
        return Err(fail(RsStatus::NullOrInvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RsStatus::NullOrInvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], RsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RsStatus::NullOrInvalidArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), RsStatus> {
    if p.is_null() {
        Err(fail(RsStatus::NullOrInvalidArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! lib {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rs_analyze_options_default() -> RsAnalyzeOptions {
    let d = AnalyzeOptions::default();
    RsAnalyzeOptions {
        corrected: d.corrected,
        min_count: d.min_count,
        frequency_weighting: d.weighting == Weighting::Frequency,
        per_label: d.per_label,
    }
}

/// Copies `rows * dims` row-major floats into a new batch.
///
/// # Safety
/// `values` must point to `rows * dims` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_new(
    values: *const f32,
    rows: usize,
    dims: usize,
    out: *mut *mut RsBatch,
) -> RsStatus {
    guard(|| {
        tri!(out_arg(out, "out"));
        let Some(len) = rows.checked_mul(dims) else {
            return fail(RsStatus::InvalidParameter, "rows * dims overflows");
        };
        let values = tri!(slice_arg(values, len, "values"));
        let inner = lib!(RepresentationBatch::new(rows, dims, values.to_vec()));
        *out = Box::into_raw(Box::new(RsBatch { inner }));
        RsStatus::Ok
    })
}

/// Reads an HREP, NPY or CSV matrix file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_read(path: *const c_char, out: *mut *mut RsBatch) -> RsStatus {
    guard(|| {
        tri!(out_arg(out, "out"));
        let path = tri!(str_arg(path, "path"));
        let inner = lib!(reprstruct::read_matrix(path));
        *out = Box::into_raw(Box::new(RsBatch { inner }));
        RsStatus::Ok
    })
}

/// Writes the batch in the HREP binary format.
///
/// # Safety
/// `batch` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_write_hrep(batch: *const RsBatch, path: *const c_char) -> RsStatus {
    guard(|| {
        let Some(batch) = batch.as_ref() else {
            return fail(RsStatus::NullOrInvalidArgument, "batch is null");
        };
        let path = tri!(str_arg(path, "path"));
        lib!(reprstruct::write_reps(&batch.inner, path));
        RsStatus::Ok
    })
}

/// # Safety
/// `batch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_rows(batch: *const RsBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.inner.rows())
}

/// # Safety
/// `batch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_dims(batch: *const RsBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.inner.dims())
}

/// # Safety
/// `batch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_batch_free(batch: *mut RsBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Creates a label set named `name` (`token`, `pos`, `bigram` or any custom
/// name) from one label id per row.
///
/// # Safety
/// `name` must be a nul-terminated string, `ids` must point to `len` ids and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_labels_new(
    name: *const c_char,
    ids: *const u32,
    len: usize,
    out: *mut *mut RsLabelSet,
) -> RsStatus {
    guard(|| {
        tri!(out_arg(out, "out"));
        let name = tri!(str_arg(name, "name"));
        let ids = tri!(slice_arg(ids, len, "ids"));
        if ids.is_empty() {
            return fail(RsStatus::Data, format!("label set {name:?} is empty"));
        }
        *out = Box::into_raw(Box::new(RsLabelSet {
            name: name.to_string(),
            ids: ids.to_vec(),
        }));
        RsStatus::Ok
    })
}

/// # Safety
/// `labels` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_labels_free(labels: *mut RsLabelSet) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// Fits `n_bins` equal-width bins per dimension on `batch` and computes all
/// measures for each label set.
///
/// # Safety
/// `batch` must be a live handle, `sets` must point to `n_sets` live label
/// set handles, `opts` must be null (defaults) or readable, and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rs_analyze(
    batch: *const RsBatch,
    sets: *const *const RsLabelSet,
    n_sets: usize,
    n_bins: usize,
    opts: *const RsAnalyzeOptions,
    out: *mut *mut RsReport,
) -> RsStatus {
    guard(|| {
        tri!(out_arg(out, "out"));
        let Some(batch) = batch.as_ref() else {
            return fail(RsStatus::NullOrInvalidArgument, "batch is null");
        };
        let handles = tri!(slice_arg(sets, n_sets, "sets"));
        let mut named = Vec::with_capacity(handles.len());
        for (i, &h) in handles.iter().enumerate() {
            let Some(set) = h.as_ref() else {
                return fail(RsStatus::NullOrInvalidArgument, format!("sets[{i}] is null"));
            };
            named.push((set.name.clone(), set.ids.clone()));
        }
        let opts = opts.as_ref().map_or_else(AnalyzeOptions::default, AnalyzeOptions::from);
        let b = &batch.inner;
        let inner = lib!(reprstruct::analyze_arrays(
            b.values(),
            b.rows(),
            b.dims(),
            &named,
            n_bins,
            &opts
        ));
        *out = Box::into_raw(Box::new(RsReport { inner }));
        RsStatus::Ok
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_report_information(report: *const RsReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.information)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rs_report_set_count(report: *const RsReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.sets.len())
}

/// Reads one measure of the label set `set`. Fails with `Data` when the set
/// failed to compute or the measure is undefined (disentanglement with fewer
/// than two active labels).
///
/// # Safety
/// `report` must be a live handle, `set` a nul-terminated string and `value`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rs_report_measure(
    report: *const RsReport,
    set: *const c_char,
    measure: RsMeasure,
    value: *mut f64,
) -> RsStatus {
    guard(|| {
        tri!(out_arg(value, "value"));
        let Some(report) = report.as_ref() else {
            return fail(RsStatus::NullOrInvalidArgument, "report is null");
        };
        let name = tri!(str_arg(set, "set"));
        let Some(entry) = report.inner.sets.iter().find(|s| s.name == name) else {
            return fail(RsStatus::Data, format!("no label set named {name:?} in report"));
        };
        let Some(m) = &entry.measures else {
            return fail(RsStatus::Data, entry.error.clone().unwrap_or_default());
        };
        let v = match measure {
            RsMeasure::Variation => Some(m.variation),
            RsMeasure::Regularity => Some(m.regularity),
            RsMeasure::Disentanglement => m.disentanglement,
        };
        match v {
            Some(v) => {
                *value = v;
                RsStatus::Ok
            }
            None => fail(
                RsStatus::Data,
                m.disentanglement_error
                    .clone()
                    .unwrap_or_else(|| format!("disentanglement undefined for {name:?}")),
            ),
        }
    })
}

/// Serializes the report as pretty JSON; free the string with
/// [`rs_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rs_report_to_json(report: *const RsReport, out: *mut *mut c_char) -> RsStatus {
    guard(|| {
        tri!(out_arg(out, "out"));
        let Some(report) = report.as_ref() else {
            return fail(RsStatus::NullOrInvalidArgument, "report is null");
        };
        let json = serde_json::to_string_pretty(&report.inner).expect("report serializes");
        *out = CString::new(json).expect("json has no nul").into_raw();
        RsStatus::Ok
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_report_free(report: *mut RsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Spearman rank correlation with a two-sided p-value from the t
/// approximation. `p_two_sided` may be null.
///
/// # Safety
/// `xs` and `ys` must point to `n` doubles; `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rs_spearman(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    rho: *mut f64,
    p_two_sided: *mut f64,
) -> RsStatus {
    guard(|| {
        tri!(out_arg(rho, "rho"));
        let xs = tri!(slice_arg(xs, n, "xs"));
        let ys = tri!(slice_arg(ys, n, "ys"));
        let r = lib!(reprstruct::spearman(xs, ys));
        *rho = r.rho;
        if !p_two_sided.is_null() {
            *p_two_sided = r.p_two_sided;
        }
        RsStatus::Ok
    })
}

/// Writes a JSONL tokens file. Sentence `i` takes the next
/// `sentence_lengths[i]` entries of `tokens` (and of `pos`, when non-null).
///
/// # Safety
/// `path` must be a nul-terminated string; `tokens` (and `pos`, if non-null)
/// must point to `n_tokens` nul-terminated strings; `sentence_lengths` must
/// point to `n_sentences` values.
#[no_mangle]
pub unsafe extern "C" fn rs_write_tokens(
    path: *const c_char,
    tokens: *const *const c_char,
    pos: *const *const c_char,
    n_tokens: usize,
    sentence_lengths: *const usize,
    n_sentences: usize,
) -> RsStatus {
    guard(|| {
        let path = PathBuf::from(tri!(str_arg(path, "path")));
        let tokens = tri!(slice_arg(tokens, n_tokens, "tokens"));
        let pos = if pos.is_null() {
            None
        } else {
            Some(tri!(slice_arg(pos, n_tokens, "pos")))
        };
        let lengths = tri!(slice_arg(sentence_lengths, n_sentences, "sentence_lengths"));
        let total = lengths.iter().try_fold(0usize, |a, &l| a.checked_add(l));
        if total != Some(n_tokens) {
            return fail(
                RsStatus::Data,
                format!("sentence lengths sum to {total:?}, expected {n_tokens} tokens"),
            );
        }
        let mut records = Vec::with_capacity(n_sentences);
        let mut at = 0;
        for (i, &len) in lengths.iter().enumerate() {
            let mut toks = Vec::with_capacity(len);
            for &t in &tokens[at..at + len] {
                toks.push(tri!(str_arg(t, "token")).to_string());
            }
            let tags = match pos {
                Some(pos) => {
                    let mut tags = Vec::with_capacity(len);
                    for &t in &pos[at..at + len] {
                        tags.push(tri!(str_arg(t, "pos tag")).to_string());
                    }
                    Some(tags)
                }
                None => None,
            };
            records.push(SentenceRecord {
                sentence_id: i as i64,
                tokens: toks,
                pos: tags,
            });
            at += len;
        }
        lib!(reprstruct::write_tokens(&records, &path));
        RsStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_is_thread_local() {
        let mut out = ptr::null_mut();
        let s = unsafe { rs_batch_new(ptr::null(), 2, 2, &mut out) };
        assert_eq!(s, RsStatus::NullOrInvalidArgument);
        let msg = unsafe { CStr::from_ptr(rs_last_error_message()) }
            .to_str()
            .unwrap()
            .to_string();
        assert_eq!(msg, "values is null");
        std::thread::spawn(|| assert!(rs_last_error_message().is_null()))
            .join()
            .unwrap();
    }

    #[test]
    fn status_mapping() {
        assert_eq!(
            status_of(&Error::InvalidParameter("x".into())),
            RsStatus::InvalidParameter
        );
        assert_eq!(status_of(&Error::Alignment { tokens: 1, rows: 2 }), RsStatus::Data);
    }

    #[test]
    fn default_options_match_library() {
        let o = rs_analyze_options_default();
        assert!(o.corrected && o.per_label && !o.frequency_weighting);
        assert_eq!(o.min_count, reprstruct::DEFAULT_MIN_COUNT);
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(rs_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
