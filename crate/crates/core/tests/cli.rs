use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_rangevar");

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn rangevar(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_preprocess_fit_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let ticks = dir.path().join("ticks.csv");
    let model = dir.path().join("model.json");
    let eval = dir.path().join("eval.csv");

    let out = rangevar(&["simulate", "--sim", &data("sim_raw.toml"), "--out", s(&scan)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("scan.truth.csv").exists());

    let out = rangevar(&["preprocess", "--input", s(&scan), "--out", s(&ticks)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = rangevar(&["fit", "--input", s(&ticks), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["model"]["intensity_kind"], "raw");
    assert_eq!(json["model"]["a_unit"], "mm/INC");
    assert!(json["converged"].as_bool().unwrap());
    let b = json["model"]["b"].as_f64().unwrap();
    assert!((b + 1.02).abs() < 0.1, "b = {b}");
    let curve = fs::read_to_string(dir.path().join("model_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 257);

    let out = rangevar(&["evaluate", "--model", s(&model), "--input", s(&ticks), "--out", s(&eval)]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&eval).unwrap();
    assert!(text.starts_with("tick_id,intensity,observed_std_mm,predicted_std_mm,residual_mm,extrapolated\n"));
    assert!(text.contains("#rmse_mm="));
}

#[test]
fn scaled_pipeline_fits_the_general_model() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = rangevar(&["pipeline", "--simulate", &data("sim_scaled.toml"), "--r-ref", "25", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(json["model"]["intensity_kind"], "calibrated");
    assert!(out_dir.join("calibrated_ticks.csv").exists());
    assert!(!out_dir.join("vcm.csv").exists());
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("r_ref = 25 m (given)"));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = rangevar(&["fit", "--input", "x.csv", "--out", "m.json", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));
    assert_eq!(rangevar(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rangevar(&["vcm", "--input", "a", "--model", "b", "--out", "c"]).status.code(), Some(2));
    assert_eq!(rangevar(&["--help"]).status.code(), Some(0));
    // flag values are checked before the missing input is noticed
    let out = rangevar(&["calibrate", "--input", "missing.csv", "--r-ref", "0", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--r-ref"));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = rangevar(&["fit", "--input", s(&missing), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let ticks = dir.path().join("ticks.csv");
    fs::write(
        &ticks,
        "tick_id,vertical_angle_center,mean_intensity,mean_range_m,std_range_mm,count\n0,0.5,100,10,1,30\n",
    )
    .unwrap();
    let model = dir.path().join("m.json");
    let out = rangevar(&["fit", "--input", s(&ticks), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!model.exists(), "failed runs leave no output");
}

#[test]
fn run_config_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    assert_eq!(rangevar(&["simulate", "--sim", &data("sim_raw.toml"), "--out", s(&scan)]).status.code(), Some(0));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[preprocess]\nmin_tick_count = 5000\n").unwrap();
    let ticks = dir.path().join("ticks.csv");
    let out = rangevar(&["--config", s(&cfg), "preprocess", "--input", s(&scan), "--out", s(&ticks)]);
    assert_eq!(out.status.code(), Some(1), "every tick falls below the configured minimum");
    let out = rangevar(&[
        "--config",
        s(&cfg),
        "preprocess",
        "--input",
        s(&scan),
        "--min-tick-count",
        "30",
        "--out",
        s(&ticks),
    ]);
    assert_eq!(out.status.code(), Some(0));

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = rangevar(&["--config", s(&cfg), "preprocess", "--input", s(&scan), "--out", s(&ticks)]);
    assert_eq!(out.status.code(), Some(2));
}
