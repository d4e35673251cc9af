//! Command-line front end.
//!
//! Every subcommand reads its inputs, writes machine-readable outputs through
//! a temporary file and a rename, and prints a short summary. Exit status is
//! 0 on success, 1 on domain errors and 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::calibrate::{self, CalibratedTickStats, CalibrationConfig};
use crate::evaluate::{self, AngularSigmas, EvaluationReport};
use crate::fit::{self, FitOptions, FitRecord, FitReport, ModelIntensityKind, RangeVarianceModel, Weighting};
use crate::ingest::{self, AngleUnit, IntensityKind, ParseOptions, ScanDataset};
use crate::preprocess::{self, PreprocessConfig, TickMode, TickStats};
use crate::simulate::{self, SimulationConfig};
use crate::Error;

/// Samples in the model curve written next to fitted models.
pub const CURVE_SAMPLES: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "rangevar", version, about = "Intensity-based range variance models for laser scanners")]
pub struct Cli {
    /// Key-value run configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scan and its ground-truth sidecar.
    Simulate {
        /// Simulation config (TOML).
        #[arg(long = "sim")]
        sim: PathBuf,
        /// Scan CSV to write; the truth table goes to `<stem>.truth.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a scan and report counts, spans and invariant violations.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group by vertical tick, screen outliers and write tick statistics.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add range-calibrated intensities to a tick table.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Reference range in meters; defaults to the mean tick range.
        #[arg(long)]
        r_ref: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit sigma_r = a * I^b + c to a tick table.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Fit on the `calibrated_intensity` column (general model).
        #[arg(long)]
        calibrated: bool,
        /// Intensity kind of the `mean_intensity` column.
        #[arg(long, value_enum, default_value_t = KindArg::Raw)]
        intensity_kind: KindArg,
        #[command(flatten)]
        fit: FitArgs,
        /// Model JSON to write; the curve goes to `<stem>_curve.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Residuals of a model against a tick table.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Residual CSV; the curve goes to `<stem>_curve.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Differences between two models over a log-spaced intensity grid.
    Compare {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        #[arg(long)]
        grid_min: Option<f64>,
        #[arg(long)]
        grid_max: Option<f64>,
        #[arg(long, default_value_t = 64)]
        grid_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-point diagonal covariance blocks of the polar observations.
    Vcm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
        #[command(flatten)]
        angular: AngularArgs,
        /// Needed when the model was fitted on calibrated intensities.
        #[arg(long)]
        r_ref: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run ingest, preprocess, calibrate, fit, evaluate and vcm in one go.
    Pipeline {
        /// Simulate the input from this config instead of reading a scan.
        #[arg(long = "simulate", conflicts_with = "input", required_unless_present = "input")]
        simulate: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        parse: ParseArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        angular: AngularArgs,
        /// Reference range for scaled intensities; defaults to the mean tick range.
        #[arg(long)]
        r_ref: Option<f64>,
        /// Skip intensity calibration even for scaled data.
        #[arg(long)]
        no_calibrate: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Raw,
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Rad,
    Deg,
    Gon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TickModeArg {
    Explicit,
    Quantize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Unweighted,
    Count,
    InverseVariance,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ParseArgs {
    /// Angle unit of the input file.
    #[arg(long, value_enum)]
    pub angle_unit: Option<UnitArg>,
    /// Skip invalid rows instead of aborting.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub sigma_multiplier: Option<f64>,
    #[arg(long)]
    pub min_tick_count: Option<usize>,
    #[arg(long, value_enum)]
    pub tick_mode: Option<TickModeArg>,
    /// Tick spacing in radians; estimated when absent.
    #[arg(long)]
    pub tick_step: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AngularArgs {
    /// Vertical angle standard deviation, radians.
    #[arg(long)]
    pub sigma_vertical: Option<f64>,
    /// Horizontal angle standard deviation, radians.
    #[arg(long)]
    pub sigma_horizontal: Option<f64>,
}

/// Values a `--config` file may set.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub angle_unit: Option<AngleUnit>,
    pub lenient: Option<bool>,
    pub r_ref: Option<f64>,
    pub sigma_vertical: Option<f64>,
    pub sigma_horizontal: Option<f64>,
    pub preprocess: Option<PreprocessConfig>,
    pub fit: Option<FitOptions>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(Error),
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let mut summary = String::new();
    let result = load_run_config(cli.config.as_deref()).and_then(|rc| execute(&cli.command, &rc, &mut summary));
    let _ = write!(stdout, "{summary}");
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Domain(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn load_run_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Domain(io_err(path, e)))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = parent.join(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e).into());
    }
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Domain(io_err(path, e)))
}

fn parse_options(args: &ParseArgs, rc: &RunConfig) -> ParseOptions {
    let angle_unit = match args.angle_unit {
        Some(UnitArg::Rad) => AngleUnit::Radians,
        Some(UnitArg::Deg) => AngleUnit::Degrees,
        Some(UnitArg::Gon) => AngleUnit::Gon,
        None => rc.angle_unit.unwrap_or_default(),
    };
    ParseOptions { angle_unit, lenient: args.lenient || rc.lenient.unwrap_or(false), intensity_kind: None }
}

fn preprocess_config(args: &PreprocessArgs, rc: &RunConfig) -> CliResult<PreprocessConfig> {
    let mut cfg = rc.preprocess.clone().unwrap_or_default();
    if let Some(v) = args.sigma_multiplier {
        cfg.sigma_multiplier = v;
    }
    if let Some(v) = args.min_tick_count {
        cfg.min_tick_count = v;
    }
    if let Some(mode) = args.tick_mode {
        cfg.tick_mode = match mode {
            TickModeArg::Explicit => TickMode::ExplicitColumn,
            TickModeArg::Quantize => TickMode::QuantizeByStep,
        };
    }
    if args.tick_step.is_some() {
        cfg.tick_step = args.tick_step;
    }
    if let Some(v) = args.max_passes {
        cfg.max_passes = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn fit_options(args: &FitArgs, rc: &RunConfig) -> FitOptions {
    let mut opts = rc.fit.clone().unwrap_or_default();
    if let Some(n) = args.max_iterations {
        opts.max_iterations = n;
    }
    match args.weighting {
        Some(WeightingArg::Unweighted) => opts.weighting = Weighting::Unweighted,
        Some(WeightingArg::Count) => opts.weighting = Weighting::PerPoint,
        Some(WeightingArg::InverseVariance) => opts.weighting = Weighting::InverseVariance,
        None => {}
    }
    opts
}

/// Both sigmas or neither; a half-specified pair is a usage error.
fn angular_sigmas(args: &AngularArgs, rc: &RunConfig) -> CliResult<Option<AngularSigmas>> {
    let v = args.sigma_vertical.or(rc.sigma_vertical);
    let h = args.sigma_horizontal.or(rc.sigma_horizontal);
    match (v, h) {
        (None, None) => Ok(None),
        (Some(v), Some(h)) => AngularSigmas::new(v, h)
            .map(Some)
            .map_err(|_| CliError::Usage("--sigma-vertical and --sigma-horizontal must be positive".into())),
        _ => Err(CliError::Usage("--sigma-vertical and --sigma-horizontal must be given together".into())),
    }
}

/// Rejects an explicit reference range before any file is touched.
fn check_r_ref(r_ref: Option<f64>) -> CliResult<()> {
    match r_ref {
        Some(r) => CalibrationConfig::new(r).map(|_| ()).map_err(|e| CliError::Usage(format!("--r-ref: {e}"))),
        None => Ok(()),
    }
}

fn reference_range(explicit: Option<f64>, stats: &[TickStats]) -> CliResult<(CalibrationConfig, bool)> {
    match explicit {
        Some(r) => CalibrationConfig::new(r).map(|c| (c, true)).map_err(|e| CliError::Usage(format!("--r-ref: {e}"))),
        None => Ok((CalibrationConfig::mean_range_of(stats)?, false)),
    }
}

fn read_dataset(path: &Path, opts: &ParseOptions) -> CliResult<ScanDataset> {
    let file = io(path, fs::File::open(path))?;
    Ok(ingest::parse_profile_csv(std::io::BufReader::new(file), opts)?)
}

fn read_model(path: &Path) -> CliResult<RangeVarianceModel> {
    Ok(fit::read_model_json(&read_text(path)?)?)
}

fn fit_json(report: &FitReport) -> String {
    FitRecord::from(report).to_json()
}

fn summarize_fit(s: &mut String, report: &FitReport) {
    let m = &report.model;
    let _ = writeln!(s, "model ({}): sigma_r = a * I^b + c", format!("{:?}", m.intensity_kind).to_lowercase());
    let _ = writeln!(s, "  a = {} {}", m.a, m.intensity_kind.a_unit());
    let _ = writeln!(s, "  b = {}", m.b);
    let _ = writeln!(s, "  c = {} mm", m.c);
    if let Some(sd) = report.parameter_stddevs {
        let _ = writeln!(s, "  stddev: a {} b {} c {}", sd.a, sd.b, sd.c);
    }
    let _ = writeln!(s, "  domain: [{}, {}]", m.intensity_domain.0, m.intensity_domain.1);
    let _ = writeln!(
        s,
        "  iterations: {}, points: {}, rms residual: {} mm",
        report.iterations, report.point_count, report.rms_residual_mm
    );
}

fn summarize_eval(s: &mut String, report: &EvaluationReport) {
    let _ = writeln!(
        s,
        "evaluation: rmse {} mm, max |residual| {} mm, {} of {} extrapolated",
        report.rmse,
        report.max_abs_residual,
        report.extrapolated_count,
        report.rows.len()
    );
}

fn write_curve_file(path: &Path, m: &RangeVarianceModel) -> CliResult<()> {
    write_with(path, |b| Ok(evaluate::write_curve(m, CURVE_SAMPLES, b).map_err(|e| io_err(path, e))?))
}

fn execute(cmd: &Command, rc: &RunConfig, s: &mut String) -> CliResult<()> {
    match cmd {
        Command::Simulate { sim, out } => {
            let cfg = SimulationConfig::from_toml(&read_text(sim)?)?;
            let (ds, truth) = simulate::simulate_profiles(&cfg)?;
            write_with(out, |b| io(out, ingest::serialize_dataset(&ds, b)))?;
            let truth_path = sibling(out, ".truth.csv");
            write_with(&truth_path, |b| io(&truth_path, simulate::write_ground_truth(&truth, b)))?;
            let _ = writeln!(s, "simulated {} observations over {} ticks", ds.len(), truth.ticks.len());
            let _ = writeln!(s, "injected outliers: {}", truth.outlier_indices.len());
            let _ = writeln!(s, "wrote {} and {}", out.display(), truth_path.display());
        }
        Command::Validate { input, parse, out } => {
            let ds = read_dataset(input, &parse_options(parse, rc))?;
            let report = ingest::validate_dataset(&ds);
            let _ = writeln!(s, "{report}");
            if ds.skipped_rows > 0 {
                let _ = writeln!(s, "skipped rows: {}", ds.skipped_rows);
            }
            if let Some(out) = out {
                write_atomic(out, format!("{report}\n").as_bytes())?;
            }
        }
        Command::Preprocess { input, parse, pre, out } => {
            let cfg = preprocess_config(pre, rc)?;
            let ds = read_dataset(input, &parse_options(parse, rc))?;
            let outcome = preprocess::preprocess_with_summary(&ds, &cfg)?;
            write_with(out, |b| Ok(preprocess::write_tick_stats(&outcome.stats, b)?))?;
            let _ = writeln!(
                s,
                "{} ticks, {} kept, {} dropped below {} members, {} outliers removed",
                outcome.tick_count,
                outcome.stats.len(),
                outcome.dropped_ticks,
                cfg.min_tick_count,
                outcome.removed_outliers
            );
        }
        Command::Calibrate { input, r_ref, out } => {
            check_r_ref(r_ref.or(rc.r_ref))?;
            let stats = preprocess::read_tick_stats(std::io::Cursor::new(read_text(input)?))?;
            let (cfg, explicit) = reference_range(r_ref.or(rc.r_ref), &stats)?;
            let cal = calibrate::calibrate_ticks(&stats, &cfg)?;
            write_with(out, |b| Ok(calibrate::write_calibrated_ticks(&cal, b)?))?;
            let origin = if explicit { "given" } else { "mean tick range" };
            let _ = writeln!(s, "r_ref = {} m ({origin}); calibrated {} ticks", cfg.r_ref, cal.len());
        }
        Command::Fit { input, calibrated, intensity_kind, fit: fit_args, out } => {
            let opts = fit_options(fit_args, rc);
            let text = read_text(input)?;
            let report = if *calibrated {
                let cal = calibrate::read_calibrated_ticks(std::io::Cursor::new(text))?;
                fit::fit_general_model(&cal, &opts)?
            } else {
                let kind = match intensity_kind {
                    KindArg::Raw => ModelIntensityKind::Raw,
                    KindArg::Scaled => ModelIntensityKind::Scaled,
                };
                let stats = preprocess::read_tick_stats(std::io::Cursor::new(text))?;
                fit::fit_ticks(&stats, kind, &opts)?
            };
            write_atomic(out, fit_json(&report).as_bytes())?;
            write_curve_file(&sibling(out, "_curve.csv"), &report.model)?;
            summarize_fit(s, &report);
        }
        Command::Evaluate { model, input, out } => {
            let m = read_model(model)?;
            let text = read_text(input)?;
            let report = if m.intensity_kind == ModelIntensityKind::Calibrated {
                let cal = calibrate::read_calibrated_ticks(std::io::Cursor::new(text))?;
                evaluate::evaluate_against_ticks(&m, &cal)?
            } else {
                let stats = preprocess::read_tick_stats(std::io::Cursor::new(text))?;
                evaluate::evaluate_against_ticks(&m, &stats)?
            };
            write_with(out, |b| io(out, evaluate::write_evaluation(&report, b)))?;
            write_curve_file(&sibling(out, "_curve.csv"), &m)?;
            summarize_eval(s, &report);
        }
        Command::Compare { model_a, model_b, grid_min, grid_max, grid_points, out } => {
            let (m1, m2) = (read_model(model_a)?, read_model(model_b)?);
            let (lo1, hi1) = m1.intensity_domain;
            let (lo2, hi2) = m2.intensity_domain;
            let (mut lo, mut hi) = if lo1.max(lo2) <= hi1.min(hi2) { (lo1.max(lo2), hi1.min(hi2)) } else { (lo1, hi1) };
            lo = grid_min.unwrap_or(lo);
            hi = grid_max.unwrap_or(hi);
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) || *grid_points == 0 {
                return Err(CliError::Usage(format!("invalid grid [{lo}, {hi}] with {grid_points} points")));
            }
            let report = evaluate::compare_models(&m1, &m2, &evaluate::log_grid(lo, hi, *grid_points))?;
            write_with(out, |b| io(out, evaluate::write_evaluation(&report, b)))?;
            let _ = writeln!(s, "grid: {grid_points} points in [{lo}, {hi}]");
            summarize_eval(s, &report);
        }
        Command::Vcm { input, model, parse, angular, r_ref, out } => {
            let ang = angular_sigmas(angular, rc)?
                .ok_or_else(|| CliError::Usage("vcm needs --sigma-vertical and --sigma-horizontal".into()))?;
            check_r_ref(r_ref.or(rc.r_ref))?;
            let m = read_model(model)?;
            let cal = if m.intensity_kind == ModelIntensityKind::Calibrated {
                let r = r_ref.or(rc.r_ref).ok_or_else(|| CliError::Usage("a calibrated model needs --r-ref".into()))?;
                Some(CalibrationConfig::new(r).map_err(|e| CliError::Usage(format!("--r-ref: {e}")))?)
            } else {
                None
            };
            let mut ds = read_dataset(input, &parse_options(parse, rc))?;
            if let Some(cfg) = cal {
                for o in &mut ds.observations {
                    o.intensity = calibrate::calibrate_intensity(o.intensity, o.range, &cfg)?;
                }
            }
            let vcm = evaluate::build_vcm(&ds, &m, &ang)?;
            write_with(out, |b| io(out, evaluate::write_vcm(&vcm, b)))?;
            let _ = writeln!(s, "wrote {} diagonal blocks", vcm.blocks.len());
        }
        Command::Pipeline { simulate: sim, input, parse, pre, fit: fit_args, angular, r_ref, no_calibrate, out } => {
            let pcfg = preprocess_config(pre, rc)?;
            let opts = fit_options(fit_args, rc);
            let ang = angular_sigmas(angular, rc)?;
            check_r_ref(r_ref.or(rc.r_ref))?;
            io(out, fs::create_dir_all(out))?;

            let ds = match (sim, input) {
                (Some(sim), _) => {
                    let cfg = SimulationConfig::from_toml(&read_text(sim)?)?;
                    let (ds, truth) = simulate::simulate_profiles(&cfg)?;
                    let scan = out.join("scan.csv");
                    write_with(&scan, |b| io(&scan, ingest::serialize_dataset(&ds, b)))?;
                    let tp = out.join("truth.csv");
                    write_with(&tp, |b| io(&tp, simulate::write_ground_truth(&truth, b)))?;
                    let _ = writeln!(s, "simulated {} observations (seed {})", ds.len(), cfg.seed);
                    ds
                }
                (None, Some(input)) => read_dataset(input, &parse_options(parse, rc))?,
                (None, None) => return Err(CliError::Usage("pipeline needs --simulate or --input".into())),
            };
            let _ = writeln!(s, "intensity kind: {}", ds.meta.intensity_kind.as_str());

            let outcome = preprocess::preprocess_with_summary(&ds, &pcfg)?;
            let ticks_path = out.join("ticks.csv");
            write_with(&ticks_path, |b| Ok(preprocess::write_tick_stats(&outcome.stats, b)?))?;
            let _ = writeln!(
                s,
                "preprocess: {} of {} ticks kept, {} outliers removed",
                outcome.stats.len(),
                outcome.tick_count,
                outcome.removed_outliers
            );

            let calibrate_now = ds.meta.intensity_kind == IntensityKind::Scaled && !no_calibrate;
            let (report, evaluation) = if calibrate_now {
                let (cfg, explicit) = reference_range(r_ref.or(rc.r_ref), &outcome.stats)?;
                let origin = if explicit { "given" } else { "mean tick range" };
                let _ = writeln!(s, "calibration: r_ref = {} m ({origin})", cfg.r_ref);
                let cal: Vec<CalibratedTickStats> = calibrate::calibrate_ticks(&outcome.stats, &cfg)?;
                let cp = out.join("calibrated_ticks.csv");
                write_with(&cp, |b| Ok(calibrate::write_calibrated_ticks(&cal, b)?))?;
                let report = fit::fit_general_model(&cal, &opts)?;
                let evaluation = evaluate::evaluate_against_ticks(&report.model, &cal)?;
                (report, evaluation)
            } else {
                let kind = ModelIntensityKind::from(ds.meta.intensity_kind);
                let report = fit::fit_ticks(&outcome.stats, kind, &opts)?;
                let evaluation = evaluate::evaluate_against_ticks(&report.model, &outcome.stats)?;
                (report, evaluation)
            };
            write_atomic(&out.join("model.json"), fit_json(&report).as_bytes())?;
            write_curve_file(&out.join("model_curve.csv"), &report.model)?;
            let ep = out.join("evaluation.csv");
            write_with(&ep, |b| io(&ep, evaluate::write_evaluation(&evaluation, b)))?;
            summarize_fit(s, &report);
            summarize_eval(s, &evaluation);

            if let Some(ang) = ang {
                let mut vds = ds.clone();
                if calibrate_now {
                    let (cfg, _) = reference_range(r_ref.or(rc.r_ref), &outcome.stats)?;
                    for o in &mut vds.observations {
                        o.intensity = calibrate::calibrate_intensity(o.intensity, o.range, &cfg)?;
                    }
                }
                let vcm = evaluate::build_vcm(&vds, &report.model, &ang)?;
                let vp = out.join("vcm.csv");
                write_with(&vp, |b| io(&vp, evaluate::write_vcm(&vcm, b)))?;
                let _ = writeln!(s, "vcm: {} diagonal blocks", vcm.blocks.len());
            }
            write_atomic(&out.join("summary.txt"), s.as_bytes())?;
        }
    }
    Ok(())
}
