//! Intensity-based range variance models for terrestrial laser scanners.
//!
//! Repeated 2D profile scans put many range samples on every vertical tick.
//! The spread of those ranges, paired with the tick's mean backscatter
//! intensity, is fitted to `sigma_r = a * I^b + c`. The pipeline is
//!
//! 1. [`ingest`] a profile-scan CSV,
//! 2. [`preprocess`] it into per-tick statistics with outlier screening,
//! 3. optionally [`calibrate`] scaled intensities against range,
//! 4. [`fit`] the model by Levenberg-Marquardt,
//! 5. [`evaluate`] it against ticks or another model and assemble the
//!    diagonal VCM blocks of the polar observations.
//!
//! [`simulate`] produces scans with known ground truth for all of the above.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod evaluate;
pub mod fit;
pub mod ingest;
pub mod preprocess;
pub mod simulate;

use thiserror::Error;

pub use calibrate::{calibrate_intensity, calibrate_ticks, CalibratedTickStats, CalibrationConfig};
pub use evaluate::{build_vcm, compare_models, evaluate_against_ticks, AngularSigmas, EvaluationReport, VcmBlocks};
pub use fit::{
    evaluate_model, fit_general_model, fit_model, initial_guess, FitOptions, FitPoint, FitReport, ModelIntensityKind,
    RangeVarianceModel,
};
pub use ingest::{parse_profile_csv, validate_dataset, IntensityKind, ParseOptions, PolarObservation, ScanDataset};
pub use preprocess::{preprocess, PreprocessConfig, TickStats};
pub use simulate::{simulate_profiles, SimulationConfig};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Calibrate(#[from] calibrate::CalibrateError),
    #[error(transparent)]
    Fit(#[from] fit::FitError),
    #[error(transparent)]
    Evaluate(#[from] evaluate::EvaluateError),
    #[error(transparent)]
    Simulate(#[from] simulate::SimulateError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
