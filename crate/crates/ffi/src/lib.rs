//! C ABI over `ssclust`.
//!
//! Every fallible function returns an [`SscStatus`]. On failure a message is
//! stored per thread and can be read with [`ssc_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.
//! Matrices are row-major. Enum-valued inputs are passed as `uint32_t` and
//! validated, so an out-of-range value is an error rather than undefined
//! behavior.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use ssclust::analysis::{chi2_cdf, noncentral_chi2_cdf, prob_case2a, prob_case2b, prob_nested_limit, NestedModelSpec};
use ssclust::metrics::{answering_time, ari, hellinger, line_difference_test, AnsweringTime, ANSWER_MAX, ANSWER_MIN};
use ssclust::select::{bic_prime, bic_star, count_params, model_search, Penalty, SearchOptions, SearchOutcome};
use ssclust::{CovModel, Dataset, Error, FitOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    SingularModel = 4,
    EmptyComponent = 5,
    Underflow = 6,
    InsufficientData = 7,
    UndefinedPenalty = 8,
    Domain = 9,
    NoViableModel = 10,
    DegenerateTest = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SscCovModel {
    Eii = 0,
    Vii = 1,
    Eee = 2,
    Vvv = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SscPenaltyKind {
    /// `m = n1`, the number of unlabeled rows.
    Unlabeled = 0,
    /// `m = n`, the classical BIC.
    Total = 1,
    /// `m = penalty_value`.
    Fixed = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> SscStatus {
    match e {
        Error::Dimension(_) => SscStatus::Dimension,
        Error::SingularModel { .. } => SscStatus::SingularModel,
        Error::EmptyComponent { .. } => SscStatus::EmptyComponent,
        Error::Underflow { .. } => SscStatus::Underflow,
        Error::InsufficientData(_) => SscStatus::InsufficientData,
        Error::UndefinedPenalty(_) => SscStatus::UndefinedPenalty,
        Error::Domain(_) => SscStatus::Domain,
        Error::InvalidInput(_) => SscStatus::InvalidArgument,
        Error::NoViableModel { .. } => SscStatus::NoViableModel,
        Error::DegenerateTest(_) => SscStatus::DegenerateTest,
        Error::Parse { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => SscStatus::Io,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SscStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return SscStatus::Ok,
        Ok(Err(Fail::Null(what))) => (SscStatus::NullPointer, format!("{what} is NULL")),
        Ok(Err(Fail::Arg(m))) => (SscStatus::InvalidArgument, m),
        Ok(Err(Fail::Core(e))) => (status_of(&e), e.to_string()),
        Err(_) => (SscStatus::Panic, "internal panic".to_string()),
    };
    set_error(msg);
    status
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(p)
    }
}

/// # Safety
/// `p` must be valid for `len` reads unless `len` is zero.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(slice::from_raw_parts(non_null(p, what)?, len))
}

/// # Safety
/// `p` must be valid for one write.
unsafe fn write_out<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(value);
    Ok(())
}

fn model_from(code: u32) -> Result<CovModel, Fail> {
    CovModel::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Fail::Arg(format!("unknown covariance model code {code}")))
}

fn model_code(model: CovModel) -> u32 {
    CovModel::ALL.iter().position(|&m| m == model).unwrap() as u32
}

/// Message for the last failed call on this thread, or NULL if the last
/// call succeeded. Valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn ssc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

pub struct SscDataset(Dataset);

/// Builds a dataset from an `n_rows × n_cols` row-major matrix. `labels`
/// may be NULL (no labeled rows); otherwise it holds one class id per row,
/// negative for unlabeled. Class `c` is generated by component `c`.
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
/// integers when non-NULL, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_dataset_new(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const i64,
    out: *mut *mut SscDataset,
) -> SscStatus {
    guard(|| {
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Fail::Arg("matrix size overflows".into()))?;
        let values = input(x, len, "x")?;
        let labels: Vec<Option<usize>> = if labels.is_null() {
            vec![None; n_rows]
        } else {
            input(labels, n_rows, "labels")?
                .iter()
                .map(|&l| usize::try_from(l).ok())
                .collect()
        };
        let matrix = DMatrix::from_row_slice(n_rows, n_cols, values);
        let ds = Dataset::new(matrix, labels)?;
        write_out(out, Box::into_raw(Box::new(SscDataset(ds))), "out")
    })
}

/// # Safety
/// `ds` must come from `ssc_dataset_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssc_dataset_free(ds: *mut SscDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ssc_dataset_n_unlabeled(ds: *const SscDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_unlabeled())
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SscSearchOptions {
    pub g_min: usize,
    pub g_max: usize,
    /// Bit `k` enables the model with `SscCovModel` value `k`.
    pub model_mask: u32,
    /// An `SscPenaltyKind` value.
    pub penalty_kind: u32,
    /// Used when `penalty_kind` is `SSC_PENALTY_KIND_FIXED`.
    pub penalty_value: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub rel_tol: f64,
}

/// Defaults: G in 1..=9, all four models, BIC* penalty, 5 restarts.
#[no_mangle]
pub extern "C" fn ssc_search_options_default() -> SscSearchOptions {
    let fit = FitOptions::default();
    SscSearchOptions {
        g_min: 1,
        g_max: 9,
        model_mask: 0b1111,
        penalty_kind: SscPenaltyKind::Unlabeled as u32,
        penalty_value: 0.0,
        restarts: 5,
        seed: 0,
        max_iter: fit.max_iter,
        rel_tol: fit.rel_tol,
    }
}

fn search_options(o: &SscSearchOptions) -> Result<SearchOptions, Fail> {
    if o.g_min == 0 || o.g_min > o.g_max {
        return Err(Fail::Arg(format!("invalid G range {}..={}", o.g_min, o.g_max)));
    }
    if o.model_mask == 0 || o.model_mask >> CovModel::ALL.len() != 0 {
        return Err(Fail::Arg(format!("invalid model mask {:#x}", o.model_mask)));
    }
    let penalty = match o.penalty_kind {
        0 => Penalty::Unlabeled,
        1 => Penalty::Total,
        2 => Penalty::Fixed(o.penalty_value),
        k => return Err(Fail::Arg(format!("unknown penalty kind {k}"))),
    };
    Ok(SearchOptions {
        g_range: (o.g_min..=o.g_max).collect(),
        models: CovModel::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| o.model_mask & (1 << i) != 0)
            .map(|(_, &m)| m)
            .collect(),
        penalty,
        restarts: o.restarts,
        seed: o.seed,
        fit: FitOptions {
            max_iter: o.max_iter,
            rel_tol: o.rel_tol,
        },
        extra_penalties: Vec::new(),
    })
}

pub struct SscSearchResult {
    outcome: SearchOutcome,
    n: usize,
}

/// Fits every candidate and selects the best under the requested penalty.
///
/// # Safety
/// `ds` must be a live dataset, `opts` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_model_search(
    ds: *const SscDataset,
    opts: *const SscSearchOptions,
    out: *mut *mut SscSearchResult,
) -> SscStatus {
    guard(|| {
        let ds = &*non_null(ds, "ds")?;
        let opts = search_options(&*non_null(opts, "opts")?)?;
        let outcome = model_search(&ds.0, &opts)?;
        let result = SscSearchResult { outcome, n: ds.0.n() };
        write_out(out, Box::into_raw(Box::new(result)), "out")
    })
}

/// # Safety
/// `res` must come from `ssc_model_search` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_free(res: *mut SscSearchResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SscCandidate {
    pub g: usize,
    /// An `SscCovModel` value.
    pub model: u32,
    pub failed: bool,
    pub converged: bool,
    pub iterations: usize,
    /// NaN when `failed`.
    pub loglik: f64,
    pub d: usize,
    /// NaN when `failed` or fewer than two unlabeled rows.
    pub bic_star: f64,
}

/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_n_candidates(res: *const SscSearchResult) -> usize {
    res.as_ref().map_or(0, |r| r.outcome.candidates.len())
}

/// Index of the selected candidate.
///
/// # Safety
/// `res` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_best(res: *const SscSearchResult) -> usize {
    res.as_ref().map_or(0, |r| r.outcome.best)
}

/// # Safety
/// `res` must be a live result handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_candidate(
    res: *const SscSearchResult,
    index: usize,
    out: *mut SscCandidate,
) -> SscStatus {
    guard(|| {
        let res = &*non_null(res, "res")?;
        let c = res
            .outcome
            .candidates
            .get(index)
            .ok_or_else(|| Fail::Arg(format!("candidate {index} out of range")))?;
        let view = match (c.score(), c.fit()) {
            (Some(s), Some(f)) => SscCandidate {
                g: c.g,
                model: model_code(c.model),
                failed: false,
                converged: f.converged,
                iterations: f.iterations,
                loglik: s.loglik,
                d: s.d,
                bic_star: s.bic_star.unwrap_or(f64::NAN),
            },
            _ => SscCandidate {
                g: c.g,
                model: model_code(c.model),
                failed: true,
                converged: false,
                iterations: 0,
                loglik: f64::NAN,
                d: 0,
                bic_star: f64::NAN,
            },
        };
        write_out(out, view, "out")
    })
}

/// Re-selects among the fitted candidates with penalty argument `m`.
///
/// # Safety
/// `res` must be a live result handle and `out_index` writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_select_with(
    res: *const SscSearchResult,
    m: f64,
    out_index: *mut usize,
) -> SscStatus {
    guard(|| {
        let res = &*non_null(res, "res")?;
        if !(m > 1.0) {
            return Err(Error::Domain(format!("penalty argument m must exceed 1, got {m}")).into());
        }
        let idx = res
            .outcome
            .select_with(m)
            .ok_or(Error::NoViableModel { attempted: res.outcome.candidates.len() })?;
        write_out(out_index, idx, "out_index")
    })
}

/// Writes the MAP component (0-based) of every row of the selected fit.
/// `len` must equal the number of rows.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_assignments(
    res: *const SscSearchResult,
    out: *mut usize,
    len: usize,
) -> SscStatus {
    guard(|| {
        let res = &*non_null(res, "res")?;
        if len != res.n {
            return Err(Fail::Arg(format!("buffer holds {len} rows, result has {}", res.n)));
        }
        let labels = ssclust::map_labels(&res.outcome.best_fit().resp);
        let dst = slice::from_raw_parts_mut(non_null(out, "out")?.cast_mut(), len);
        dst.copy_from_slice(&labels);
        Ok(())
    })
}

/// Writes the `n × G` responsibilities of the selected fit, row-major.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ssc_search_result_responsibilities(
    res: *const SscSearchResult,
    out: *mut f64,
    len: usize,
) -> SscStatus {
    guard(|| {
        let res = &*non_null(res, "res")?;
        let resp = &res.outcome.best_fit().resp;
        if len != resp.len() {
            return Err(Fail::Arg(format!("buffer holds {len} values, need {}", resp.len())));
        }
        let dst = slice::from_raw_parts_mut(non_null(out, "out")?.cast_mut(), len);
        let g = resp.ncols();
        for i in 0..resp.nrows() {
            for k in 0..g {
                dst[i * g + k] = resp[(i, k)];
            }
        }
        Ok(())
    })
}

/// Free-parameter count `d` for `g` components in `dim` dimensions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_count_params(g: usize, dim: usize, model: u32, out: *mut usize) -> SscStatus {
    guard(|| write_out(out, count_params(g, dim, model_from(model)?), "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_bic_star(loglik: f64, d: usize, n1: usize, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, bic_star(loglik, d, n1)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_bic_prime(loglik: f64, d: usize, m: f64, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, bic_prime(loglik, d, m)?, "out"))
}

/// Central chi-square CDF; NaN for `df <= 0`.
#[no_mangle]
pub extern "C" fn ssc_chi2_cdf(x: f64, df: f64) -> f64 {
    chi2_cdf(x, df)
}

/// Noncentral chi-square CDF; NaN for `df <= 0` or `ncp < 0`.
#[no_mangle]
pub extern "C" fn ssc_noncentral_chi2_cdf(x: f64, df: f64, ncp: f64) -> f64 {
    noncentral_chi2_cdf(x, df, ncp)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_prob_case2a(d: usize, d0: usize, n: u64, m: f64, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, prob_case2a(&NestedModelSpec::new(d, d0, n, m)?)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_prob_case2b(d: usize, d0: usize, n: u64, m: f64, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, prob_case2b(&NestedModelSpec::new(d, d0, n, m)?)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_prob_nested_limit(d1: usize, d0: usize, n: u64, m: f64, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, prob_nested_limit(d1, d0, n, m)?, "out"))
}

/// # Safety
/// `a` and `b` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_ari(a: *const usize, b: *const usize, n: usize, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, ari(input(a, n, "a")?, input(b, n, "b")?)?, "out"))
}

/// # Safety
/// `p` and `q` must each hold `k` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_hellinger(p: *const f64, q: *const f64, k: usize, out: *mut f64) -> SscStatus {
    guard(|| write_out(out, hellinger(input(p, k, "p")?, input(q, k, "q")?)?, "out"))
}

/// Permutation test on `n` items. `lines` holds 0 or 1 per item.
/// `null_samples` may be NULL; otherwise it receives the `permutations`
/// null statistics.
///
/// # Safety
/// Inputs must hold `n` values, `null_samples` (if non-NULL) room for
/// `permutations` values, and the scalar outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_line_difference_test(
    assignments: *const usize,
    lines: *const usize,
    n: usize,
    permutations: usize,
    seed: u64,
    statistic: *mut f64,
    p_value: *mut f64,
    null_samples: *mut f64,
) -> SscStatus {
    guard(|| {
        let t = line_difference_test(input(assignments, n, "assignments")?, input(lines, n, "lines")?, permutations, seed)?;
        if !null_samples.is_null() {
            slice::from_raw_parts_mut(null_samples, permutations).copy_from_slice(&t.null_samples);
        }
        write_out(statistic, t.statistic, "statistic")?;
        write_out(p_value, t.p_value, "p_value")
    })
}

/// Answering time from the 29 p-values for `q = 2, ..., 30` in order.
/// Writes `-1` when the test never settles below `alpha`.
///
/// # Safety
/// `p_values` must hold 29 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_answering_time(p_values: *const f64, alpha: f64, out: *mut i64) -> SscStatus {
    guard(|| {
        let count = ANSWER_MAX - ANSWER_MIN + 1;
        let series: BTreeMap<usize, f64> = (ANSWER_MIN..=ANSWER_MAX)
            .zip(input(p_values, count, "p_values")?.iter().copied())
            .collect();
        let code = match answering_time(&series, alpha)? {
            AnsweringTime::At(q) => q as i64,
            AnsweringTime::Never => -1,
        };
        write_out(out, code, "out")
    })
}
