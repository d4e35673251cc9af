//! Tick grouping, outlier screening and per-tick statistics.
//!
//! All observations that share a vertical encoder position across the
//! repeated profiles form one tick. Within a tick, an observation is removed
//! when its range or its intensity deviates from either the mean or the
//! median by more than `sigma_multiplier` times the matching spread. Ticks
//! left with fewer than `min_tick_count` members are dropped, and the rest are
//! summarised as [`TickStats`].

pub mod stats;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ScanDataset;
pub use stats::{mean, median, std_about_mean, std_about_median};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("cannot identify vertical ticks: {0}")]
    DegenerateTicks(String),
    #[error("observation {index} has a non-finite vertical angle")]
    NonFiniteAngle { index: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no tick survived screening (minimum count {min_tick_count})")]
    NoSurvivingTicks { min_tick_count: usize },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("tick table: {0}")]
    Table(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickMode {
    /// Observations with bit-identical vertical angles form a tick.
    ExplicitColumn,
    /// Angles are snapped to a regular ladder with step `tick_step`, or an
    /// estimated step when none is given.
    #[default]
    QuantizeByStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub sigma_multiplier: f64,
    pub min_tick_count: usize,
    pub tick_mode: TickMode,
    /// Radians.
    pub tick_step: Option<f64>,
    /// Screening passes per tick; 0 disables outlier removal.
    pub max_passes: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sigma_multiplier: 3.0,
            min_tick_count: 30,
            tick_mode: TickMode::QuantizeByStep,
            tick_step: None,
            max_passes: 1,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.sigma_multiplier > 0.0) {
            return Err(PreprocessError::InvalidConfig(format!(
                "sigma_multiplier must be > 0, got {}",
                self.sigma_multiplier
            )));
        }
        if self.min_tick_count < 2 {
            return Err(PreprocessError::InvalidConfig(format!(
                "min_tick_count must be >= 2, got {}",
                self.min_tick_count
            )));
        }
        Ok(())
    }
}

/// Observations sharing one vertical tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickGroup {
    pub tick_id: i64,
    pub vertical_angle_center: f64,
    /// Meters.
    pub ranges: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Index of each member in the source dataset.
    pub members: Vec<usize>,
}

impl TickGroup {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    fn retain_unflagged(&mut self, mask: &OutlierMask) {
        let keep = |v: &mut Vec<_>| {
            let mut it = mask.flags.iter();
            v.retain(|_| !*it.next().unwrap());
        };
        keep(&mut self.ranges);
        keep(&mut self.intensities);
        let mut it = mask.flags.iter();
        self.members.retain(|_| !*it.next().unwrap());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickStats {
    pub tick_id: i64,
    pub vertical_angle_center: f64,
    pub mean_intensity: f64,
    #[serde(rename = "mean_range_m")]
    pub mean_range: f64,
    /// Millimeters.
    #[serde(rename = "std_range_mm")]
    pub std_range: f64,
    pub count: usize,
}

/// Median positive gap between consecutive distinct angles, ignoring gaps
/// below a tenth of the largest one so that encoder jitter inside a tick does
/// not masquerade as the ladder step.
pub fn estimate_tick_step(angles: &[f64]) -> Option<f64> {
    let mut distinct: Vec<f64> = angles.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let gaps: Vec<f64> = distinct.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    let largest = gaps.iter().copied().fold(0.0, f64::max);
    if largest <= 0.0 {
        return None;
    }
    let ladder: Vec<f64> = gaps.into_iter().filter(|g| *g > 0.1 * largest).collect();
    Some(median(&ladder))
}

/// Assigns every observation to exactly one tick. Groups come back sorted by
/// their center angle and members keep dataset order.
pub fn group_by_vertical_tick(ds: &ScanDataset, cfg: &PreprocessConfig) -> Result<Vec<TickGroup>, PreprocessError> {
    if ds.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    if let Some(index) = ds.observations.iter().position(|o| !o.vertical_angle.is_finite()) {
        return Err(PreprocessError::NonFiniteAngle { index });
    }

    // key -> (center, member indices)
    let mut buckets: BTreeMap<i64, (f64, Vec<usize>)> = BTreeMap::new();
    match cfg.tick_mode {
        TickMode::ExplicitColumn => {
            let mut centers: Vec<f64> = ds.observations.iter().map(|o| o.vertical_angle + 0.0).collect();
            centers.sort_by(f64::total_cmp);
            centers.dedup();
            for (i, o) in ds.observations.iter().enumerate() {
                let angle = o.vertical_angle + 0.0;
                let rank = centers.binary_search_by(|c| c.total_cmp(&angle)).expect("angle present") as i64;
                buckets.entry(rank).or_insert_with(|| (angle, Vec::new())).1.push(i);
            }
        }
        TickMode::QuantizeByStep => {
            let angles: Vec<f64> = ds.observations.iter().map(|o| o.vertical_angle).collect();
            let anchor = angles.iter().copied().fold(f64::INFINITY, f64::min);
            let step = match cfg.tick_step {
                Some(s) if s.is_finite() && s > 0.0 => Some(s),
                Some(s) => return Err(PreprocessError::DegenerateTicks(format!("tick step {s} is not positive"))),
                None => estimate_tick_step(&angles),
            };
            match step {
                // all angles identical: a single tick
                None => {
                    buckets.insert(0, (anchor, (0..angles.len()).collect()));
                }
                Some(step) => {
                    for (i, a) in angles.iter().enumerate() {
                        let k = ((a - anchor) / step).round();
                        if !k.is_finite() || k.abs() > i64::MAX as f64 / 2.0 {
                            return Err(PreprocessError::DegenerateTicks(format!(
                                "tick step {step} is too small for the angle span"
                            )));
                        }
                        let k = k as i64;
                        buckets.entry(k).or_insert_with(|| (anchor + k as f64 * step, Vec::new())).1.push(i);
                    }
                }
            }
        }
    }

    Ok(buckets
        .into_iter()
        .map(|(tick_id, (center, members))| TickGroup {
            tick_id,
            vertical_angle_center: center,
            ranges: members.iter().map(|&i| ds.observations[i].range).collect(),
            intensities: members.iter().map(|&i| ds.observations[i].intensity).collect(),
            members,
        })
        .collect())
}

/// Per-member outlier flags for one tick; `true` means exclude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierMask {
    pub flags: Vec<bool>,
}

impl OutlierMask {
    pub fn flagged(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Flags values whose absolute deviation from the mean exceeds `k` times the
/// spread about the mean, or whose deviation from the median exceeds `k`
/// times the spread about the median.
pub fn channel_outliers(values: &[f64], k: f64) -> Result<Vec<bool>, PreprocessError> {
    let sd_mean = std_about_mean(values)?;
    let sd_median = std_about_median(values)?;
    let (m, med) = (mean(values), median(values));
    Ok(values.iter().map(|v| (v - m).abs() > k * sd_mean || (v - med).abs() > k * sd_median).collect())
}

/// Outlier flags for a tick: the union of the range and intensity channels.
/// Statistics are computed once over the whole group.
pub fn detect_outliers(group: &TickGroup, cfg: &PreprocessConfig) -> Result<OutlierMask, PreprocessError> {
    let k = cfg.sigma_multiplier;
    let by_range = channel_outliers(&group.ranges, k)?;
    let by_intensity = channel_outliers(&group.intensities, k)?;
    Ok(OutlierMask { flags: by_range.iter().zip(&by_intensity).map(|(a, b)| *a || *b).collect() })
}

/// Screens one group in place, returning how many members were removed.
pub fn screen_group(group: &mut TickGroup, cfg: &PreprocessConfig) -> Result<usize, PreprocessError> {
    let mut removed = 0;
    for _ in 0..cfg.max_passes {
        if group.len() < 2 {
            break;
        }
        let mask = detect_outliers(group, cfg)?;
        let n = mask.flagged();
        if n == 0 {
            break;
        }
        group.retain_unflagged(&mask);
        removed += n;
    }
    Ok(removed)
}

/// Summary statistics of a (screened) tick. Ranges are meters, `std_range`
/// is converted to millimeters here and nowhere else.
pub fn tick_stats(group: &TickGroup) -> Result<TickStats, PreprocessError> {
    let std_m = std_about_mean(&group.ranges)?;
    Ok(TickStats {
        tick_id: group.tick_id,
        vertical_angle_center: group.vertical_angle_center,
        mean_intensity: mean(&group.intensities),
        mean_range: mean(&group.ranges),
        std_range: std_m * 1000.0,
        count: group.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOutcome {
    pub stats: Vec<TickStats>,
    pub tick_count: usize,
    pub removed_outliers: usize,
    pub dropped_ticks: usize,
}

pub fn preprocess_with_summary(ds: &ScanDataset, cfg: &PreprocessConfig) -> Result<PreprocessOutcome, PreprocessError> {
    cfg.validate()?;
    let groups = group_by_vertical_tick(ds, cfg)?;
    let tick_count = groups.len();
    let mut removed_outliers = 0;
    let mut dropped_ticks = 0;
    let mut stats = Vec::with_capacity(groups.len());
    for mut group in groups {
        removed_outliers += screen_group(&mut group, cfg)?;
        if group.len() < cfg.min_tick_count {
            dropped_ticks += 1;
            continue;
        }
        stats.push(tick_stats(&group)?);
    }
    if stats.is_empty() {
        return Err(PreprocessError::NoSurvivingTicks { min_tick_count: cfg.min_tick_count });
    }
    Ok(PreprocessOutcome { stats, tick_count, removed_outliers, dropped_ticks })
}

/// Group, screen, filter and summarise; output is ordered by tick.
pub fn preprocess(ds: &ScanDataset, cfg: &PreprocessConfig) -> Result<Vec<TickStats>, PreprocessError> {
    preprocess_with_summary(ds, cfg).map(|o| o.stats)
}

/// Writes `tick_id,vertical_angle_center,mean_intensity,mean_range_m,std_range_mm,count`.
pub fn write_tick_stats<W: Write>(stats: &[TickStats], out: W) -> Result<(), PreprocessError> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(s)?;
    }
    if stats.is_empty() {
        w.write_record([
            "tick_id",
            "vertical_angle_center",
            "mean_intensity",
            "mean_range_m",
            "std_range_mm",
            "count",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a tick table. Extra columns (such as `calibrated_intensity`) are ignored.
pub fn read_tick_stats<R: Read>(input: R) -> Result<Vec<TickStats>, PreprocessError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.deserialize().collect::<Result<Vec<TickStats>, _>>().map_err(PreprocessError::from)
}
