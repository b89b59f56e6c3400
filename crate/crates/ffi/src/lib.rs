//! C ABI over the `envauth` library.
//!
//! Objects cross the boundary as opaque handles created by `ea_*_new` or
//! returned through out-pointers, and released with the matching
//! `ea_*_free`. Every fallible call returns an [`EaStatus`]; on failure
//! [`ea_last_error_message`] describes the error for the calling thread.
//! Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use envauth::distance;
use envauth::environment::{self, EnvironmentTransform};
use envauth::features::{self, SignalRecording, FEATURE_NAMES};
use envauth::fingerprint::{FingerprintMatrix, ReferenceFingerprint};
use envauth::simulate::{self, MetricsReport, ScenarioConfig};
use envauth::{Error, ObjectId, Verdict};
use nalgebra::DMatrix;

/// Number of features produced by `ea_extract_features`.
pub const EA_FEATURE_COUNT: usize = 7;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    UnsupportedDimension = 4,
    NoNeighbors = 5,
    NotFound = 6,
    UnsupportedTransfer = 7,
    Io = 8,
    Schema = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaVerdict {
    Legitimate = 0,
    Attacker = 1,
}

impl From<Verdict> for EaVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Legitimate => EaVerdict::Legitimate,
            Verdict::Attacker => EaVerdict::Attacker,
        }
    }
}

/// Fingerprint matrix (n rows of m features) tagged with object and window.
pub struct EaFingerprint(FingerprintMatrix);

/// Rotation plus translation acting on fingerprint rows.
pub struct EaTransform(EnvironmentTransform);

/// Validated synthetic scenario configuration.
pub struct EaScenario(ScenarioConfig);

/// Result of running a scenario.
pub struct EaReport(MetricsReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EaStatus {
    match e {
        Error::InvalidInput(_) => EaStatus::InvalidInput,
        Error::Numerical(_) => EaStatus::Numerical,
        Error::UnsupportedDimension(_) => EaStatus::UnsupportedDimension,
        Error::NoNeighbors(_) => EaStatus::NoNeighbors,
        Error::NotFound(_) => EaStatus::NotFound,
        Error::UnsupportedTransfer(_) => EaStatus::UnsupportedTransfer,
        Error::Io { .. } => EaStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Schema { .. } => EaStatus::Schema,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EaStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            EaStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            EaStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::InvalidInput(format!("{what} is not UTF-8"))))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ea_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ea_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the seven features of `samples` into `out_values`
/// (`EA_FEATURE_COUNT` doubles).
///
/// # Safety
/// `samples` and `template_samples` must point to the given number of
/// doubles; `out_values` must have room for `EA_FEATURE_COUNT` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_extract_features(
    samples: *const f64,
    len: usize,
    template_samples: *const f64,
    template_len: usize,
    out_values: *mut f64,
) -> EaStatus {
    guard(|| {
        let signal = SignalRecording::from_samples(slice(samples, len, "samples")?.to_vec())?;
        let template =
            SignalRecording::from_samples(slice(template_samples, template_len, "template")?.to_vec())?;
        if out_values.is_null() {
            return Err(Failure::Null("out_values"));
        }
        let fv = features::extract_features(&signal, &template)?;
        debug_assert_eq!(fv.dim(), FEATURE_NAMES.len());
        ptr::copy_nonoverlapping(fv.values().as_ptr(), out_values, EA_FEATURE_COUNT);
        Ok(())
    })
}

/// Builds a fingerprint from `rows * cols` row-major doubles.
///
/// # Safety
/// `data` must point to `rows * cols` doubles and `object_id` to a
/// NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ea_fingerprint_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    object_id: *const c_char,
    window_index: u32,
    out_fingerprint: *mut *mut EaFingerprint,
) -> EaStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidInput("matrix size overflows".into()))?;
        let values = slice(data, len, "data")?;
        let id = ObjectId::new(string(object_id, "object_id")?);
        let matrix = DMatrix::from_row_slice(rows, cols, values);
        let fp = FingerprintMatrix::new(matrix, features::default_feature_names(cols), id, window_index)?;
        out(out_fingerprint, boxed(EaFingerprint(fp)), "out_fingerprint")
    })
}

/// # Safety
/// `fingerprint` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ea_fingerprint_free(fingerprint: *mut EaFingerprint) {
    if !fingerprint.is_null() {
        drop(Box::from_raw(fingerprint));
    }
}

/// # Safety
/// `fingerprint` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ea_fingerprint_rows(fingerprint: *const EaFingerprint) -> usize {
    fingerprint.as_ref().map_or(0, |f| f.0.nrows())
}

/// # Safety
/// `fingerprint` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ea_fingerprint_cols(fingerprint: *const EaFingerprint) -> usize {
    fingerprint.as_ref().map_or(0, |f| f.0.dim())
}

/// Copies the fingerprint row-major into `buffer` of `len` doubles.
///
/// # Safety
/// `fingerprint` must be a valid handle and `buffer` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_fingerprint_data(
    fingerprint: *const EaFingerprint,
    buffer: *mut f64,
    len: usize,
) -> EaStatus {
    guard(|| {
        let f = &deref(fingerprint, "fingerprint")?.0;
        copy_row_major(f.data(), buffer, len)
    })
}

unsafe fn copy_row_major(m: &DMatrix<f64>, buffer: *mut f64, len: usize) -> Result<(), Failure> {
    if buffer.is_null() {
        return Err(Failure::Null("buffer"));
    }
    if len != m.len() {
        return Err(Failure::Lib(Error::InvalidInput(format!(
            "buffer holds {len} values, need {}",
            m.len()
        ))));
    }
    let t = m.transpose();
    ptr::copy_nonoverlapping(t.as_slice().as_ptr(), buffer, len);
    Ok(())
}

/// Gaussian Bhattacharyya distance between two fingerprints.
///
/// # Safety
/// Both handles must be valid; `out_distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ea_bhattacharyya(
    a: *const EaFingerprint,
    b: *const EaFingerprint,
    out_distance: *mut f64,
) -> EaStatus {
    guard(|| {
        let d = distance::fingerprint_distance(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        out(out_distance, d, "out_distance")
    })
}

/// Legitimate iff `distance <= threshold`.
#[no_mangle]
pub extern "C" fn ea_authenticate(distance: f64, threshold: f64) -> EaVerdict {
    distance::authenticate(distance, threshold).verdict.into()
}

/// Threshold maximizing balanced accuracy; `attacker_len` may be 0.
///
/// # Safety
/// Arrays must hold the given number of doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_calibrate_threshold(
    legit: *const f64,
    legit_len: usize,
    attackers: *const f64,
    attacker_len: usize,
    margin: f64,
    out_threshold: *mut f64,
) -> EaStatus {
    guard(|| {
        let tau = distance::calibrate_threshold(
            slice(legit, legit_len, "legit")?,
            slice(attackers, attacker_len, "attackers")?,
            margin,
        )?;
        out(out_threshold, tau, "out_threshold")
    })
}

/// Aligns `observed` to `reference`; `out_degenerate` (optional) is set
/// when the rotation was undetermined and identity was used.
///
/// # Safety
/// Handles must be valid; `out_degenerate` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ea_estimate_transform(
    observed: *const EaFingerprint,
    reference: *const EaFingerprint,
    out_transform: *mut *mut EaTransform,
    out_degenerate: *mut bool,
) -> EaStatus {
    guard(|| {
        let reference = ReferenceFingerprint::new(deref(reference, "reference")?.0.clone());
        let est = environment::estimate_transform(&deref(observed, "observed")?.0, &reference)?;
        if !out_degenerate.is_null() {
            out_degenerate.write(est.degenerate);
        }
        out(out_transform, boxed(EaTransform(est.transform)), "out_transform")
    })
}

/// Builds a transform from an `m * m` row-major rotation and length-`m`
/// translation. Fails unless the rotation is proper.
///
/// # Safety
/// Arrays must hold `m * m` and `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_transform_new(
    rotation: *const f64,
    translation: *const f64,
    m: usize,
    out_transform: *mut *mut EaTransform,
) -> EaStatus {
    guard(|| {
        let r = DMatrix::from_row_slice(m, m, slice(rotation, m * m, "rotation")?);
        let l = nalgebra::DVector::from_column_slice(slice(translation, m, "translation")?);
        let t = EnvironmentTransform::new(r, l)?;
        out(out_transform, boxed(EaTransform(t)), "out_transform")
    })
}

/// # Safety
/// `transform` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ea_transform_free(transform: *mut EaTransform) {
    if !transform.is_null() {
        drop(Box::from_raw(transform));
    }
}

/// # Safety
/// `transform` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ea_transform_dim(transform: *const EaTransform) -> usize {
    transform.as_ref().map_or(0, |t| t.0.dim())
}

/// Copies the rotation (row-major, `dim * dim` doubles).
///
/// # Safety
/// `transform` must be valid and `buffer` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_transform_rotation(
    transform: *const EaTransform,
    buffer: *mut f64,
    len: usize,
) -> EaStatus {
    guard(|| copy_row_major(deref(transform, "transform")?.0.rotation(), buffer, len))
}

/// Copies the translation (`dim` doubles).
///
/// # Safety
/// `transform` must be valid and `buffer` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_transform_translation(
    transform: *const EaTransform,
    buffer: *mut f64,
    len: usize,
) -> EaStatus {
    guard(|| {
        let l = deref(transform, "transform")?.0.translation();
        if buffer.is_null() {
            return Err(Failure::Null("buffer"));
        }
        if len != l.len() {
            return Err(Failure::Lib(Error::InvalidInput(format!("buffer holds {len} values, need {}", l.len()))));
        }
        ptr::copy_nonoverlapping(l.as_slice().as_ptr(), buffer, len);
        Ok(())
    })
}

/// Weighted fusion of `count` transforms.
///
/// # Safety
/// `transforms` must hold `count` valid handles and `weights` `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn ea_fuse_transforms(
    transforms: *const *const EaTransform,
    weights: *const f64,
    count: usize,
    out_transform: *mut *mut EaTransform,
) -> EaStatus {
    guard(|| {
        let handles = slice(transforms, count, "transforms")?;
        let ts = handles
            .iter()
            .map(|&h| deref(h, "transform").map(|t| t.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let fused = environment::fuse_transforms(&ts, slice(weights, count, "weights")?)?;
        out(out_transform, boxed(EaTransform(fused)), "out_transform")
    })
}

/// Applies `transform` to every row of `reference`.
///
/// # Safety
/// Handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn ea_correct_reference(
    reference: *const EaFingerprint,
    transform: *const EaTransform,
    out_fingerprint: *mut *mut EaFingerprint,
) -> EaStatus {
    guard(|| {
        let reference = ReferenceFingerprint::new(deref(reference, "reference")?.0.clone());
        let corrected = environment::correct_reference(&reference, &deref(transform, "transform")?.0)?;
        out(out_fingerprint, boxed(EaFingerprint(corrected.matrix().clone())), "out_fingerprint")
    })
}

/// Parses and validates a scenario configuration from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ea_scenario_from_json(
    json: *const c_char,
    out_scenario: *mut *mut EaScenario,
) -> EaStatus {
    guard(|| {
        let cfg = ScenarioConfig::from_json(&string(json, "json")?)?;
        out(out_scenario, boxed(EaScenario(cfg)), "out_scenario")
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ea_scenario_free(scenario: *mut EaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario.
///
/// # Safety
/// `scenario` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ea_scenario_run(
    scenario: *const EaScenario,
    out_report: *mut *mut EaReport,
) -> EaStatus {
    guard(|| {
        let report = simulate::run_scenario(&deref(scenario, "scenario")?.0)?;
        out(out_report, boxed(EaReport(report)), "out_report")
    })
}

/// # Safety
/// `report` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ea_report_free(report: *mut EaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Serializes the report as JSON; release with `ea_string_free`.
///
/// # Safety
/// `report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ea_report_json(report: *const EaReport, out_json: *mut *mut c_char) -> EaStatus {
    guard(|| {
        let text = serde_json::to_string(&deref(report, "report")?.0).map_err(Error::from)?;
        let c = CString::new(text).map_err(|_| Error::Numerical("report JSON contains NUL".into()))?;
        out(out_json, c.into_raw(), "out_json")
    })
}

/// Calibrated thresholds of the plain and compensated pipelines.
///
/// # Safety
/// `report` must be valid; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ea_report_thresholds(
    report: *const EaReport,
    out_tau_base: *mut f64,
    out_tau_env: *mut f64,
) -> EaStatus {
    guard(|| {
        let r = &deref(report, "report")?.0;
        out(out_tau_base, r.baseline.tau, "out_tau_base")?;
        out(out_tau_env, r.environment.tau, "out_tau_env")
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ea_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
