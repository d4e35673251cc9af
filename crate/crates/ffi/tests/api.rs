use std::ffi::{CStr, CString};
use std::ptr;

use rangevar::simulate::{self, SimulationConfig};
use rangevar_ffi::*;

fn scan_text(config: &str) -> String {
    let path = format!("{}/../core/data/{config}", env!("CARGO_MANIFEST_DIR"));
    let cfg = SimulationConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    let (ds, _) = simulate::simulate_profiles(&cfg).unwrap();
    let mut buf = Vec::new();
    rangevar::ingest::serialize_dataset(&ds, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rv_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn parse_preprocess_fit_evaluate() {
    let text = scan_text("sim_raw.toml");
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(rv_dataset_parse(text.as_ptr().cast(), text.len(), false, &mut ds), RvStatus::Ok);
        assert_eq!(rv_dataset_len(ds), 24_000);

        let mut ticks = ptr::null_mut();
        assert_eq!(rv_preprocess(ds, ptr::null(), &mut ticks), RvStatus::Ok);
        assert_eq!(rv_ticks_len(ticks), 24);
        let mut t = RvTickStats::default();
        assert_eq!(rv_ticks_get(ticks, 0, &mut t), RvStatus::Ok);
        assert!(t.count > 900 && t.calibrated_intensity.is_nan());
        assert_eq!(rv_ticks_get(ticks, 24, &mut t), RvStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut model = ptr::null_mut();
        assert_eq!(rv_fit(ticks, ptr::null(), &mut model), RvStatus::Ok);
        assert_eq!(last_error(), "");
        let mut p = std::mem::zeroed::<RvModelParams>();
        assert_eq!(rv_model_params(model, &mut p), RvStatus::Ok);
        assert_eq!(p.kind, RvIntensityKind::Raw);
        assert!((p.b + 1.02).abs() < 0.05, "b = {}", p.b);
        let mut summary = RvFitSummary::default();
        assert_eq!(rv_model_fit_summary(model, &mut summary), RvStatus::Ok);
        assert_eq!(summary.point_count, 24);
        assert!(summary.stddev_b > 0.0);

        let mut sigma = 0.0;
        assert_eq!(rv_model_sigma(model, 1e4, &mut sigma), RvStatus::Ok);
        assert!((sigma - (p.a * 1e4f64.powf(p.b) + p.c)).abs() < 1e-12);
        assert_eq!(rv_model_sigma(model, -1.0, &mut sigma), RvStatus::Fit);

        let mut ev = RvEvaluation::default();
        assert_eq!(rv_evaluate(model, ticks, &mut ev), RvStatus::Ok);
        assert_eq!(ev.tick_count, 24);
        assert!(ev.rmse_mm <= ev.max_abs_residual_mm);

        let mut json = ptr::null_mut();
        assert_eq!(rv_model_to_json(model, &mut json), RvStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rv_model_from_json(json, &mut back), RvStatus::Ok);
        let mut q = std::mem::zeroed::<RvModelParams>();
        rv_model_params(back, &mut q);
        assert_eq!((q.a, q.b, q.c), (p.a, p.b, p.c));
        assert_eq!(rv_model_fit_summary(back, &mut summary), RvStatus::InvalidArgument);

        rv_string_free(json);
        rv_model_free(back);
        rv_model_free(model);
        rv_ticks_free(ticks);
        rv_dataset_free(ds);
    }
}

#[test]
fn calibrated_ticks_fit_a_general_model() {
    let text = scan_text("sim_scaled.toml");
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(rv_dataset_parse(text.as_ptr().cast(), text.len(), false, &mut ds), RvStatus::Ok);
        let mut ticks = ptr::null_mut();
        assert_eq!(rv_preprocess(ds, ptr::null(), &mut ticks), RvStatus::Ok);

        let mut plain = ptr::null_mut();
        assert_eq!(rv_fit(ticks, ptr::null(), &mut plain), RvStatus::Ok);
        let mut p = std::mem::zeroed::<RvModelParams>();
        rv_model_params(plain, &mut p);
        assert_eq!(p.kind, RvIntensityKind::Scaled);

        assert_eq!(rv_calibrate(ticks, 25.0), RvStatus::Ok);
        let mut t = RvTickStats::default();
        rv_ticks_get(ticks, 0, &mut t);
        assert!((t.calibrated_intensity - t.mean_intensity * 25.0 / (t.mean_range_m * t.mean_range_m)).abs() < 1e-9);

        let mut general = ptr::null_mut();
        let opts = RvFitOptions { max_iterations: 200, weighting: RvWeighting::InverseVariance };
        assert_eq!(rv_fit(ticks, &opts, &mut general), RvStatus::Ok);
        rv_model_params(general, &mut p);
        assert_eq!(p.kind, RvIntensityKind::Calibrated);
        let mut ev = RvEvaluation::default();
        assert_eq!(rv_evaluate(general, ticks, &mut ev), RvStatus::Ok);

        rv_model_free(general);
        rv_model_free(plain);
        rv_ticks_free(ticks);
        rv_dataset_free(ds);
    }
}

#[test]
fn errors_are_reported_through_status_and_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(rv_dataset_read(ptr::null(), false, &mut ds), RvStatus::NullPointer);
        assert!(last_error().contains("path"));
        assert!(ds.is_null());

        let missing = CString::new("/nonexistent/scan.csv").unwrap();
        assert_eq!(rv_dataset_read(missing.as_ptr(), false, &mut ds), RvStatus::Io);
        assert!(last_error().contains("/nonexistent/scan.csv"));

        let bad = "profile,vertical_angle,horizontal_angle,range,intensity\n0,0.5,0,-3,10\n";
        assert_eq!(rv_dataset_parse(bad.as_ptr().cast(), bad.len(), false, &mut ds), RvStatus::Parse);
        assert!(ds.is_null());

        let text = scan_text("sim_raw.toml");
        assert_eq!(rv_dataset_parse(text.as_ptr().cast(), text.len(), false, &mut ds), RvStatus::Ok);
        let mut ticks = ptr::null_mut();
        let strict =
            RvPreprocessOptions { sigma_multiplier: 3.0, min_tick_count: 1_000_000, max_passes: 1, tick_step: 0.0 };
        assert_eq!(rv_preprocess(ds, &strict, &mut ticks), RvStatus::Preprocess);
        let invalid = RvPreprocessOptions { sigma_multiplier: -1.0, ..strict };
        assert_eq!(rv_preprocess(ds, &invalid, &mut ticks), RvStatus::InvalidArgument);
        assert!(ticks.is_null());

        assert_eq!(rv_preprocess(ds, ptr::null(), &mut ticks), RvStatus::Ok);
        let mut model = ptr::null_mut();
        let starved = RvFitOptions { max_iterations: 1, weighting: RvWeighting::Unweighted };
        assert_eq!(rv_fit(ticks, &starved, &mut model), RvStatus::NoConvergence);
        assert!(model.is_null());

        assert_eq!(rv_model_new(1.0, -1.0, 0.1, RvIntensityKind::Calibrated, &mut model), RvStatus::Ok);
        let mut ev = RvEvaluation::default();
        assert_eq!(rv_evaluate(model, ticks, &mut ev), RvStatus::InvalidArgument);
        assert_eq!(
            rv_model_new(f64::NAN, -1.0, 0.1, RvIntensityKind::Raw, &mut ptr::null_mut()),
            RvStatus::InvalidArgument
        );

        assert_eq!(rv_dataset_len(ptr::null()), 0);
        rv_dataset_free(ptr::null_mut());
        rv_model_free(model);
        rv_ticks_free(ticks);
        rv_dataset_free(ds);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rangevar.h")).unwrap();
    for name in [
        "rv_dataset_read",
        "rv_dataset_parse",
        "rv_preprocess",
        "rv_calibrate",
        "rv_fit",
        "rv_model_params",
        "rv_evaluate",
        "rv_last_error_message",
        "typedef struct RvModel RvModel;",
        "RV_STATUS_NO_CONVERGENCE = 8",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
