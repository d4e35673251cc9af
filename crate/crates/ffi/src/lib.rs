//! C ABI over `rangevar`.
//!
//! Objects cross the boundary as opaque handles created by `rv_*` functions
//! and released with the matching `rv_*_free`. Every fallible call returns an
//! [`RvStatus`]; on failure [`rv_last_error_message`] describes the error for
//! the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rangevar::calibrate::{self, CalibratedTickStats, CalibrationConfig};
use rangevar::evaluate;
use rangevar::fit::{
    self, FitError, FitOptions, FitRecord, FitReport, ModelIntensityKind, ModelRecord, RangeVarianceModel, Weighting,
};
use rangevar::ingest::{self, IntensityKind, ParseOptions, ScanDataset};
use rangevar::preprocess::{self, PreprocessConfig, TickStats};
use rangevar::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Preprocess = 5,
    Calibrate = 6,
    Fit = 7,
    NoConvergence = 8,
    Evaluate = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvIntensityKind {
    Raw = 0,
    Scaled = 1,
    Calibrated = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvWeighting {
    InverseVariance = 0,
    Unweighted = 1,
    Count = 2,
}

/// Parsed scan.
pub struct RvDataset(ScanDataset);

/// Per-tick statistics, optionally with calibrated intensities.
pub struct RvTicks {
    stats: Vec<TickStats>,
    kind: IntensityKind,
    calibrated: Option<Vec<CalibratedTickStats>>,
}

/// Model, plus the fit diagnostics when it came from a fit.
pub struct RvModel {
    model: RangeVarianceModel,
    report: Option<FitReport>,
}

/// Preprocessing settings; pass NULL for the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RvPreprocessOptions {
    pub sigma_multiplier: f64,
    pub min_tick_count: usize,
    /// 0 disables outlier screening.
    pub max_passes: usize,
    /// Radians; 0 estimates the step from the data.
    pub tick_step: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RvFitOptions {
    pub max_iterations: usize,
    pub weighting: RvWeighting,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RvTickStats {
    pub tick_id: i64,
    pub vertical_angle_center: f64,
    pub mean_intensity: f64,
    pub mean_range_m: f64,
    pub std_range_mm: f64,
    pub count: usize,
    /// NaN until the ticks are calibrated.
    pub calibrated_intensity: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RvModelParams {
    pub a: f64,
    pub b: f64,
    /// Millimeters.
    pub c: f64,
    pub domain_min: f64,
    pub domain_max: f64,
    pub kind: RvIntensityKind,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RvFitSummary {
    pub iterations: usize,
    pub point_count: usize,
    pub final_cost: f64,
    pub rms_residual_mm: f64,
    pub stddev_a: f64,
    pub stddev_b: f64,
    pub stddev_c: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RvEvaluation {
    pub rmse_mm: f64,
    pub max_abs_residual_mm: f64,
    pub tick_count: usize,
    pub extrapolated_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(RvStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: RvStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Ingest(ingest::IngestError::Io(_)) | Error::Io { .. } => RvStatus::Io,
            Error::Ingest(_) => RvStatus::Parse,
            Error::Preprocess(_) => RvStatus::Preprocess,
            Error::Calibrate(_) => RvStatus::Calibrate,
            Error::Fit(FitError::NoConvergence(_)) => RvStatus::NoConvergence,
            Error::Fit(_) => RvStatus::Fit,
            Error::Evaluate(_) => RvStatus::Evaluate,
            Error::Simulate(_) => RvStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

macro_rules! impl_failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

impl_failure_from!(
    ingest::IngestError,
    preprocess::PreprocessError,
    calibrate::CalibrateError,
    FitError,
    evaluate::EvaluateError
);

/// Runs `f`, converting errors and panics into a status and a message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> RvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RvStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            RvStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    match unsafe { p.as_ref() } {
        Some(r) => Ok(r),
        None => fail(RvStatus::NullPointer, format!("{what} is NULL")),
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    match unsafe { p.as_mut() } {
        Some(r) => Ok(r),
        None => fail(RvStatus::NullPointer, format!("{what} is NULL")),
    }
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(RvStatus::NullPointer, format!("{what} is NULL"));
    }
    match unsafe { CStr::from_ptr(p) }.to_str() {
        Ok(s) => Ok(s),
        Err(_) => fail(RvStatus::InvalidArgument, format!("{what} is not UTF-8")),
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `rv_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a profile-scan CSV file with angles in radians.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rv_dataset_read(path: *const c_char, lenient: bool, out: *mut *mut RvDataset) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let path = unsafe { as_str(path, "path") }?;
        let file = std::fs::File::open(path).map_err(|e| Failure(RvStatus::Io, format!("{path}: {e}")))?;
        let opts = ParseOptions { lenient, ..Default::default() };
        let ds = ingest::parse_profile_csv(std::io::BufReader::new(file), &opts)?;
        *out = boxed(RvDataset(ds));
        Ok(())
    })
}

/// Parses profile-scan CSV text with angles in radians.
///
/// # Safety
/// `text` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rv_dataset_parse(
    text: *const c_char,
    len: usize,
    lenient: bool,
    out: *mut *mut RvDataset,
) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        if text.is_null() {
            return fail(RvStatus::NullPointer, "text is NULL");
        }
        let bytes = unsafe { std::slice::from_raw_parts(text.cast::<u8>(), len) };
        let opts = ParseOptions { lenient, ..Default::default() };
        let ds = ingest::parse_profile_csv(bytes, &opts)?;
        *out = boxed(RvDataset(ds));
        Ok(())
    })
}

/// Number of observations; 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn rv_dataset_len(ds: *const RvDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn rv_dataset_free(ds: *mut RvDataset) {
    if !ds.is_null() {
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Groups by vertical tick, screens outliers and summarises each tick.
///
/// # Safety
/// `ds` must be a live dataset, `opts` NULL or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_preprocess(
    ds: *const RvDataset,
    opts: *const RvPreprocessOptions,
    out: *mut *mut RvTicks,
) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let ds = unsafe { as_ref(ds, "dataset") }?;
        let mut cfg = PreprocessConfig::default();
        if let Some(o) = unsafe { opts.as_ref() } {
            cfg.sigma_multiplier = o.sigma_multiplier;
            cfg.min_tick_count = o.min_tick_count;
            cfg.max_passes = o.max_passes;
            cfg.tick_step = (o.tick_step != 0.0).then_some(o.tick_step);
        }
        cfg.validate().map_err(|e| Failure(RvStatus::InvalidArgument, e.to_string()))?;
        let stats = preprocess::preprocess(&ds.0, &cfg)?;
        *out = boxed(RvTicks { stats, kind: ds.0.meta.intensity_kind, calibrated: None });
        Ok(())
    })
}

/// Number of ticks; 0 for NULL.
///
/// # Safety
/// `ticks` must be NULL or a live ticks handle.
#[no_mangle]
pub unsafe extern "C" fn rv_ticks_len(ticks: *const RvTicks) -> usize {
    unsafe { ticks.as_ref() }.map_or(0, |t| t.stats.len())
}

/// Copies tick `index` into `out`.
///
/// # Safety
/// `ticks` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_ticks_get(ticks: *const RvTicks, index: usize, out: *mut RvTickStats) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let t = unsafe { as_ref(ticks, "ticks") }?;
        let Some(s) = t.stats.get(index) else {
            return fail(RvStatus::InvalidArgument, format!("tick index {index} out of range ({})", t.stats.len()));
        };
        *out = RvTickStats {
            tick_id: s.tick_id,
            vertical_angle_center: s.vertical_angle_center,
            mean_intensity: s.mean_intensity,
            mean_range_m: s.mean_range,
            std_range_mm: s.std_range,
            count: s.count,
            calibrated_intensity: t.calibrated.as_ref().map_or(f64::NAN, |c| c[index].calibrated_intensity),
        };
        Ok(())
    })
}

/// Adds range-calibrated intensities. `r_ref <= 0` uses the mean tick range.
///
/// # Safety
/// `ticks` must be a live ticks handle.
#[no_mangle]
pub unsafe extern "C" fn rv_calibrate(ticks: *mut RvTicks, r_ref: f64) -> RvStatus {
    guard(|| {
        let t = unsafe { out_ptr(ticks, "ticks") }?;
        let cfg =
            if r_ref > 0.0 { CalibrationConfig::new(r_ref)? } else { CalibrationConfig::mean_range_of(&t.stats)? };
        t.calibrated = Some(calibrate::calibrate_ticks(&t.stats, &cfg)?);
        Ok(())
    })
}

fn fit_options(opts: Option<&RvFitOptions>) -> FitOptions {
    let mut o = FitOptions::default();
    if let Some(f) = opts {
        o.max_iterations = f.max_iterations;
        o.weighting = match f.weighting {
            RvWeighting::InverseVariance => Weighting::InverseVariance,
            RvWeighting::Unweighted => Weighting::Unweighted,
            RvWeighting::Count => Weighting::PerPoint,
        };
    }
    o
}

/// Fits the model. Calibrated ticks give a general model on calibrated
/// intensities; otherwise the model uses the scan's intensity kind.
///
/// # Safety
/// `ticks` must be live, `opts` NULL or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_fit(ticks: *const RvTicks, opts: *const RvFitOptions, out: *mut *mut RvModel) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let t = unsafe { as_ref(ticks, "ticks") }?;
        let o = fit_options(unsafe { opts.as_ref() });
        let report = match &t.calibrated {
            Some(cal) => fit::fit_general_model(cal, &o)?,
            None => fit::fit_ticks(&t.stats, ModelIntensityKind::from(t.kind), &o)?,
        };
        *out = boxed(RvModel { model: report.model, report: Some(report) });
        Ok(())
    })
}

/// A model from known parameters over `(0, inf)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_new(
    a: f64,
    b: f64,
    c: f64,
    kind: RvIntensityKind,
    out: *mut *mut RvModel,
) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return fail(RvStatus::InvalidArgument, "parameters must be finite");
        }
        let kind = match kind {
            RvIntensityKind::Raw => ModelIntensityKind::Raw,
            RvIntensityKind::Scaled => ModelIntensityKind::Scaled,
            RvIntensityKind::Calibrated => ModelIntensityKind::Calibrated,
        };
        *out = boxed(RvModel { model: RangeVarianceModel::new(a, b, c, kind), report: None });
        Ok(())
    })
}

/// Reads a model JSON document (a fit record or a bare model).
///
/// # Safety
/// `json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_from_json(json: *const c_char, out: *mut *mut RvModel) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let model = fit::read_model_json(unsafe { as_str(json, "json") }?)?;
        *out = boxed(RvModel { model, report: None });
        Ok(())
    })
}

/// Serialises the model (with fit diagnostics when present) to JSON.
/// Release the string with [`rv_string_free`].
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_to_json(model: *const RvModel, out: *mut *mut c_char) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let m = unsafe { as_ref(model, "model") }?;
        let json = match &m.report {
            Some(r) => FitRecord::from(r).to_json(),
            None => ModelRecord::from(&m.model).to_json(),
        };
        *out = CString::new(json).map_err(|e| Failure(RvStatus::Panic, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_params(model: *const RvModel, out: *mut RvModelParams) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let m = &unsafe { as_ref(model, "model") }?.model;
        *out = RvModelParams {
            a: m.a,
            b: m.b,
            c: m.c,
            domain_min: m.intensity_domain.0,
            domain_max: m.intensity_domain.1,
            kind: match m.intensity_kind {
                ModelIntensityKind::Raw => RvIntensityKind::Raw,
                ModelIntensityKind::Scaled => RvIntensityKind::Scaled,
                ModelIntensityKind::Calibrated => RvIntensityKind::Calibrated,
            },
        };
        Ok(())
    })
}

/// Solver diagnostics; `RV_STATUS_INVALID_ARGUMENT` for models not from a fit.
/// Standard deviations are NaN when the fit had only three points.
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_fit_summary(model: *const RvModel, out: *mut RvFitSummary) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let m = unsafe { as_ref(model, "model") }?;
        let Some(r) = &m.report else {
            return fail(RvStatus::InvalidArgument, "model was not produced by a fit");
        };
        let sd = r.parameter_stddevs;
        *out = RvFitSummary {
            iterations: r.iterations,
            point_count: r.point_count,
            final_cost: r.final_cost,
            rms_residual_mm: r.rms_residual_mm,
            stddev_a: sd.map_or(f64::NAN, |s| s.a),
            stddev_b: sd.map_or(f64::NAN, |s| s.b),
            stddev_c: sd.map_or(f64::NAN, |s| s.c),
        };
        Ok(())
    })
}

/// Predicted range standard deviation in mm at `intensity`.
///
/// # Safety
/// `model` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_model_sigma(model: *const RvModel, intensity: f64, out: *mut f64) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let m = unsafe { as_ref(model, "model") }?;
        *out = fit::evaluate_model(&m.model, intensity)?;
        Ok(())
    })
}

/// Residual metrics of `model` against `ticks`. A calibrated model needs
/// calibrated ticks.
///
/// # Safety
/// `model` and `ticks` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rv_evaluate(model: *const RvModel, ticks: *const RvTicks, out: *mut RvEvaluation) -> RvStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let m = unsafe { as_ref(model, "model") }?;
        let t = unsafe { as_ref(ticks, "ticks") }?;
        let report = match (&t.calibrated, m.model.intensity_kind) {
            (Some(cal), ModelIntensityKind::Calibrated) => evaluate::evaluate_against_ticks(&m.model, cal)?,
            (None, ModelIntensityKind::Calibrated) => {
                return fail(RvStatus::InvalidArgument, "calibrated model needs calibrated ticks")
            }
            _ => evaluate::evaluate_against_ticks(&m.model, &t.stats)?,
        };
        *out = RvEvaluation {
            rmse_mm: report.rmse,
            max_abs_residual_mm: report.max_abs_residual,
            tick_count: report.rows.len(),
            extrapolated_count: report.extrapolated_count,
        };
        Ok(())
    })
}

/// # Safety
/// `ticks` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn rv_ticks_free(ticks: *mut RvTicks) {
    if !ticks.is_null() {
        drop(unsafe { Box::from_raw(ticks) });
    }
}

/// # Safety
/// `model` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn rv_model_free(model: *mut RvModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
