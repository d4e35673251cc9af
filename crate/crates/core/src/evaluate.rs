//! Residual metrics, model comparison and the block-diagonal VCM.
//!
//! Residuals are always `predicted - observed`.

use std::io::Write;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::CalibratedTickStats;
use crate::fit::{ModelIntensityKind, RangeVarianceModel};
use crate::fmt_f64;
use crate::ingest::ScanDataset;
use crate::preprocess::TickStats;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("no ticks to evaluate")]
    EmptyStats,
    #[error("comparison grid is empty")]
    EmptyGrid,
    #[error("{what} {id}: intensity must be positive, got {intensity}")]
    NonPositiveIntensity { what: &'static str, id: i64, intensity: f64 },
    #[error("tick {0} has no calibrated intensity but the model was fitted on calibrated intensities")]
    MissingCalibration(i64),
    #[error("grid intensity {0} lies outside both model domains")]
    OutsideDomains(f64),
    #[error("angular sigmas must be positive and finite")]
    InvalidAngularSigmas,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Something carrying an observed range standard deviation at an intensity.
pub trait TickSample {
    fn tick_id(&self) -> i64;
    /// Millimeters.
    fn observed_std(&self) -> f64;
    fn mean_intensity(&self) -> f64;
    fn calibrated_intensity(&self) -> Option<f64> {
        None
    }
}

impl TickSample for TickStats {
    fn tick_id(&self) -> i64 {
        self.tick_id
    }
    fn observed_std(&self) -> f64 {
        self.std_range
    }
    fn mean_intensity(&self) -> f64 {
        self.mean_intensity
    }
}

impl TickSample for CalibratedTickStats {
    fn tick_id(&self) -> i64 {
        self.stats.tick_id
    }
    fn observed_std(&self) -> f64 {
        self.stats.std_range
    }
    fn mean_intensity(&self) -> f64 {
        self.stats.mean_intensity
    }
    fn calibrated_intensity(&self) -> Option<f64> {
        Some(self.calibrated_intensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    /// Tick id, or grid index for model comparisons.
    pub id: i64,
    pub intensity: f64,
    pub observed_std: f64,
    pub predicted_std: f64,
    pub residual: f64,
    /// Outside the fitted intensity domain.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ResidualRow>,
    pub rmse: f64,
    pub max_abs_residual: f64,
    pub extrapolated_count: usize,
}

impl EvaluationReport {
    fn from_rows(rows: Vec<ResidualRow>) -> Self {
        let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        Self {
            rmse: rmse(&residuals),
            max_abs_residual: max_abs_residual(&residuals),
            extrapolated_count: rows.iter().filter(|r| r.extrapolated).count(),
            rows,
        }
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }
}

/// Root of the mean squared residual; 0 for an empty slice.
pub fn rmse(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

pub fn max_abs_residual(residuals: &[f64]) -> f64 {
    residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
}

/// Compares model predictions with observed tick spreads. Ticks outside the
/// model's domain are kept and marked as extrapolated.
pub fn evaluate_against_ticks<T: TickSample>(
    m: &RangeVarianceModel,
    ticks: &[T],
) -> Result<EvaluationReport, EvaluateError> {
    if ticks.is_empty() {
        return Err(EvaluateError::EmptyStats);
    }
    let rows = ticks
        .iter()
        .map(|t| {
            let intensity = if m.intensity_kind == ModelIntensityKind::Calibrated {
                t.calibrated_intensity().ok_or(EvaluateError::MissingCalibration(t.tick_id()))?
            } else {
                t.mean_intensity()
            };
            if !(intensity > 0.0 && intensity.is_finite()) {
                return Err(EvaluateError::NonPositiveIntensity { what: "tick", id: t.tick_id(), intensity });
            }
            let predicted_std = m.sigma(intensity);
            let observed_std = t.observed_std();
            Ok(ResidualRow {
                id: t.tick_id(),
                intensity,
                observed_std,
                predicted_std,
                residual: predicted_std - observed_std,
                extrapolated: !m.in_domain(intensity),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluationReport::from_rows(rows))
}

/// Residuals `m1(I) - m2(I)` over `grid`. A grid point is extrapolated when it
/// lies outside either domain; outside both is an error.
pub fn compare_models(
    m1: &RangeVarianceModel,
    m2: &RangeVarianceModel,
    grid: &[f64],
) -> Result<EvaluationReport, EvaluateError> {
    if grid.is_empty() {
        return Err(EvaluateError::EmptyGrid);
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(k, &intensity)| {
            if !(intensity > 0.0 && intensity.is_finite()) {
                return Err(EvaluateError::NonPositiveIntensity { what: "grid point", id: k as i64, intensity });
            }
            let (in1, in2) = (m1.in_domain(intensity), m2.in_domain(intensity));
            if !in1 && !in2 {
                return Err(EvaluateError::OutsideDomains(intensity));
            }
            let predicted_std = m1.sigma(intensity);
            let observed_std = m2.sigma(intensity);
            Ok(ResidualRow {
                id: k as i64,
                intensity,
                observed_std,
                predicted_std,
                residual: predicted_std - observed_std,
                extrapolated: !(in1 && in2),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluationReport::from_rows(rows))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp() })
            .collect(),
    }
}

/// Manufacturer angular precision, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSigmas {
    pub sigma_vertical: f64,
    pub sigma_horizontal: f64,
}

impl AngularSigmas {
    pub fn new(sigma_vertical: f64, sigma_horizontal: f64) -> Result<Self, EvaluateError> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if ok(sigma_vertical) && ok(sigma_horizontal) {
            Ok(Self { sigma_vertical, sigma_horizontal })
        } else {
            Err(EvaluateError::InvalidAngularSigmas)
        }
    }
}

/// Diagonal of one point's 3x3 covariance block over (range, vertical angle,
/// horizontal angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcmBlock {
    pub var_range_mm2: f64,
    pub var_vertical_rad2: f64,
    pub var_horizontal_rad2: f64,
}

impl VcmBlock {
    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(
            self.var_range_mm2,
            self.var_vertical_rad2,
            self.var_horizontal_rad2,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VcmBlocks {
    pub blocks: Vec<VcmBlock>,
}

/// One diagonal block per observation, in dataset order.
pub fn build_vcm(ds: &ScanDataset, m: &RangeVarianceModel, ang: &AngularSigmas) -> Result<VcmBlocks, EvaluateError> {
    let var_v = ang.sigma_vertical * ang.sigma_vertical;
    let var_h = ang.sigma_horizontal * ang.sigma_horizontal;
    let blocks = ds
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if !(o.intensity > 0.0 && o.intensity.is_finite()) {
                return Err(EvaluateError::NonPositiveIntensity {
                    what: "observation",
                    id: i as i64,
                    intensity: o.intensity,
                });
            }
            let s = m.sigma(o.intensity);
            Ok(VcmBlock { var_range_mm2: s * s, var_vertical_rad2: var_v, var_horizontal_rad2: var_h })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VcmBlocks { blocks })
}

/// `index,var_range_mm2,var_vert_rad2,var_horiz_rad2`.
pub fn write_vcm<W: Write>(vcm: &VcmBlocks, mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,var_range_mm2,var_vert_rad2,var_horiz_rad2")?;
    for (i, b) in vcm.blocks.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{}",
            fmt_f64(b.var_range_mm2),
            fmt_f64(b.var_vertical_rad2),
            fmt_f64(b.var_horizontal_rad2)
        )?;
    }
    Ok(())
}

/// Per-row residual table followed by `#`-prefixed summary lines.
pub fn write_evaluation<W: Write>(report: &EvaluationReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "tick_id,intensity,observed_std_mm,predicted_std_mm,residual_mm,extrapolated")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.id,
            fmt_f64(r.intensity),
            fmt_f64(r.observed_std),
            fmt_f64(r.predicted_std),
            fmt_f64(r.residual),
            r.extrapolated
        )?;
    }
    writeln!(out, "#rmse_mm={}", fmt_f64(report.rmse))?;
    writeln!(out, "#max_abs_residual_mm={}", fmt_f64(report.max_abs_residual))?;
    writeln!(out, "#extrapolated={}", report.extrapolated_count)?;
    Ok(())
}

/// `intensity,sigma_mm` samples of a model curve.
pub fn write_curve<W: Write>(m: &RangeVarianceModel, n: usize, mut out: W) -> std::io::Result<()> {
    writeln!(out, "intensity,sigma_mm")?;
    for (i, s) in m.curve(n) {
        writeln!(out, "{},{}", fmt_f64(i), fmt_f64(s))?;
    }
    Ok(())
}
