//! C ABI over `ltn-core`.
//!
//! Every fallible call returns an [`LtnStatus`]; on failure the message is
//! available from [`ltn_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function. Strings handed
//! out by the library are released with [`ltn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ltn_core::experiment::{run_experiment, Experiment, ExperimentConfig, ExperimentError};
use ltn_core::logic::{
    aggregate_exists, aggregate_forall, similarity_predicate, Formula, SimilarityKind, TruthGrid,
};
use ltn_core::parser::{format_formula, parse_formula};
use ltn_core::tensor::Array;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    LogicError = 5,
    ConfigError = 6,
    UnknownExperiment = 7,
    IoError = 8,
    RunError = 9,
    Panic = 10,
}

/// Parsed formula.
pub struct LtnFormula {
    formula: Formula,
}

/// Experiment configuration, started from an experiment's defaults.
pub struct LtnExperiment {
    config: ExperimentConfig,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtnQuantifier {
    Forall = 0,
    Exists = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LtnDistance {
    Euclidean = 0,
    Manhattan = 1,
    Minkowski = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LtnStatus, String);

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let status = match &e {
            ExperimentError::UnknownExperiment { .. } => LtnStatus::UnknownExperiment,
            ExperimentError::Config(_) => LtnStatus::ConfigError,
            ExperimentError::Parse { .. } => LtnStatus::ParseError,
            ExperimentError::Io { .. } => LtnStatus::IoError,
            _ => LtnStatus::RunError,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> LtnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LtnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LtnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LtnStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LtnStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn to_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(LtnStatus::InvalidArgument, "string contains NUL".into()))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn logic(e: impl ToString) -> Failure {
    Failure(LtnStatus::LogicError, e.to_string())
}

/// Message for the last failed call on this thread, or NULL.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn ltn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ltn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ltn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a formula. On success `*out` owns a new handle.
///
/// # Safety
/// `src` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_formula_parse(
    src: *const c_char,
    out: *mut *mut LtnFormula,
) -> LtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let formula = parse_formula(read_str(src, "src")?)
            .map_err(|e| Failure(LtnStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(LtnFormula { formula }));
        Ok(())
    })
}

/// Canonical text of a formula, freed with `ltn_string_free`.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_formula_format(
    f: *const LtnFormula,
    out: *mut *mut c_char,
) -> LtnStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("formula"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = to_c(format_formula(&f.formula))?;
        Ok(())
    })
}

/// Nesting depth of the formula tree.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_formula_depth(f: *const LtnFormula, out: *mut usize) -> LtnStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("formula"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = f.formula.depth();
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a handle from `ltn_formula_parse`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ltn_formula_free(f: *mut LtnFormula) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Aggregates `len` truth values in [0,1] with the generalized-mean quantifier.
///
/// # Safety
/// `values` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ltn_aggregate(
    quantifier: LtnQuantifier,
    values: *const f64,
    len: usize,
    p: f64,
    out: *mut f64,
) -> LtnStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let grid = TruthGrid::vector("i", slice(values, len, "values")?.to_vec()).map_err(logic)?;
        let agg = match quantifier {
            LtnQuantifier::Forall => aggregate_forall(&grid, &["i"], p),
            LtnQuantifier::Exists => aggregate_exists(&grid, &["i"], p),
        }
        .map_err(logic)?;
        *out = agg
            .item()
            .ok_or_else(|| logic("aggregate is not a scalar"))?;
        Ok(())
    })
}

/// Row-wise `exp(-distance)` between two `rows x cols` row-major matrices.
/// `p` is read only for `Minkowski`. Writes `rows` values to `out`.
///
/// # Safety
/// `x` and `y` must point to `rows * cols` doubles and `out` to `rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn ltn_similarity(
    distance: LtnDistance,
    p: f64,
    x: *const f64,
    y: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> LtnStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(LtnStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let matrix = |p, what| -> Result<Array, Failure> {
            Array::new(vec![rows, cols], slice(p, n, what)?.to_vec()).map_err(logic)
        };
        let (x, y) = (matrix(x, "x")?, matrix(y, "y")?);
        let kind = match distance {
            LtnDistance::Euclidean => SimilarityKind::Euclidean,
            LtnDistance::Manhattan => SimilarityKind::Manhattan,
            LtnDistance::Minkowski => SimilarityKind::Minkowski(p),
        };
        let sim = similarity_predicate(kind, &x, &y).map_err(logic)?;
        if rows > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, rows).copy_from_slice(sim.data());
        }
        Ok(())
    })
}

/// New experiment handle holding the defaults of `name`
/// (e.g. `"protocol-kb"`, `"beam-regression"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_new(
    name: *const c_char,
    out: *mut *mut LtnExperiment,
) -> LtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let experiment: Experiment = read_str(name, "name")?.parse()?;
        *out = Box::into_raw(Box::new(LtnExperiment {
            config: ExperimentConfig::defaults(experiment),
        }));
        Ok(())
    })
}

/// Sets one configuration key, as on the command line.
///
/// # Safety
/// `e` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_set(
    e: *mut LtnExperiment,
    key: *const c_char,
    value: *const c_char,
) -> LtnStatus {
    guard(|| {
        let e = e.as_mut().ok_or_else(|| null("experiment"))?;
        e.config
            .set(read_str(key, "key")?, read_str(value, "value")?)?;
        Ok(())
    })
}

/// Checks the configuration without running anything.
///
/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_validate(e: *const LtnExperiment) -> LtnStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("experiment"))?;
        e.config.validate()?;
        Ok(())
    })
}

/// The configuration in `key=value` form, freed with `ltn_string_free`.
///
/// # Safety
/// `e` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_config_text(
    e: *const LtnExperiment,
    out: *mut *mut c_char,
) -> LtnStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("experiment"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = to_c(e.config.to_text())?;
        Ok(())
    })
}

/// Runs the experiment, writing its artifacts under the configured `out`
/// directory. If `metrics_path` is not NULL it receives the metrics CSV path.
///
/// # Safety
/// `e` must be a live handle; `metrics_path` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_run(
    e: *const LtnExperiment,
    metrics_path: *mut *mut c_char,
) -> LtnStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("experiment"))?;
        let artifacts = run_experiment(&e.config)?;
        if let Some(out) = metrics_path.as_mut() {
            *out = to_c(artifacts.metrics.display().to_string())?;
        }
        Ok(())
    })
}

/// # Safety
/// `e` must be NULL or a handle from `ltn_experiment_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ltn_experiment_free(e: *mut LtnExperiment) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}
