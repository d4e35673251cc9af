//! Range calibration of scaled intensities.
//!
//! Vendor-scaled intensities fall off with the square of the range, so a
//! variance model fitted to them only holds at one distance. Dividing the
//! tick mean intensity by the squared mean range (times a reference range)
//! brings ticks from all distances onto one abscissa.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::TickStats;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("mean range must be positive and finite, got {0}")]
    NonPositiveRange(f64),
    #[error("tick {tick_id}: mean range must be positive and finite, got {mean_range}")]
    TickNonPositiveRange { tick_id: i64, mean_range: f64 },
    #[error("reference range must be positive and finite, got {0}")]
    InvalidReference(f64),
    #[error("cannot derive a reference range from an empty tick list")]
    NoTicks,
    #[error("calibrated tick table: {0}")]
    Table(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Reference range in meters.
    pub r_ref: f64,
}

impl CalibrationConfig {
    pub fn new(r_ref: f64) -> Result<Self, CalibrateError> {
        if r_ref.is_finite() && r_ref > 0.0 {
            Ok(Self { r_ref })
        } else {
            Err(CalibrateError::InvalidReference(r_ref))
        }
    }

    /// Mean of the tick mean ranges; the CLI's default reference.
    pub fn mean_range_of(stats: &[TickStats]) -> Result<Self, CalibrateError> {
        if stats.is_empty() {
            return Err(CalibrateError::NoTicks);
        }
        Self::new(stats.iter().map(|s| s.mean_range).sum::<f64>() / stats.len() as f64)
    }
}

/// `mean_intensity * r_ref / mean_range^2`.
pub fn calibrate_intensity(
    mean_intensity: f64,
    mean_range: f64,
    cfg: &CalibrationConfig,
) -> Result<f64, CalibrateError> {
    if !(mean_range.is_finite() && mean_range > 0.0) {
        return Err(CalibrateError::NonPositiveRange(mean_range));
    }
    Ok(mean_intensity * cfg.r_ref / (mean_range * mean_range))
}

/// Tick statistics carrying a calibrated intensity next to the scaled one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedTickStats {
    pub stats: TickStats,
    pub calibrated_intensity: f64,
}

pub fn calibrate_ticks(
    stats: &[TickStats],
    cfg: &CalibrationConfig,
) -> Result<Vec<CalibratedTickStats>, CalibrateError> {
    stats
        .iter()
        .map(|s| {
            let calibrated_intensity = calibrate_intensity(s.mean_intensity, s.mean_range, cfg)
                .map_err(|_| CalibrateError::TickNonPositiveRange { tick_id: s.tick_id, mean_range: s.mean_range })?;
            Ok(CalibratedTickStats { stats: *s, calibrated_intensity })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CalibratedRow {
    tick_id: i64,
    vertical_angle_center: f64,
    mean_intensity: f64,
    mean_range_m: f64,
    std_range_mm: f64,
    count: usize,
    calibrated_intensity: f64,
}

/// The tick table with an extra `calibrated_intensity` column.
pub fn write_calibrated_ticks<W: Write>(ticks: &[CalibratedTickStats], out: W) -> Result<(), CalibrateError> {
    let mut w = csv::Writer::from_writer(out);
    for t in ticks {
        let s = t.stats;
        w.serialize(CalibratedRow {
            tick_id: s.tick_id,
            vertical_angle_center: s.vertical_angle_center,
            mean_intensity: s.mean_intensity,
            mean_range_m: s.mean_range,
            std_range_mm: s.std_range,
            count: s.count,
            calibrated_intensity: t.calibrated_intensity,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_calibrated_ticks<R: Read>(input: R) -> Result<Vec<CalibratedTickStats>, CalibrateError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.deserialize::<CalibratedRow>()
        .map(|row| {
            let row = row?;
            Ok(CalibratedTickStats {
                stats: TickStats {
                    tick_id: row.tick_id,
                    vertical_angle_center: row.vertical_angle_center,
                    mean_intensity: row.mean_intensity,
                    mean_range: row.mean_range_m,
                    std_range: row.std_range_mm,
                    count: row.count,
                },
                calibrated_intensity: row.calibrated_intensity,
            })
        })
        .collect()
}
