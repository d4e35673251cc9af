//! Synthetic multi-profile scans with known range noise.
//!
//! Each board is a flat target of fixed reflectivity at a fixed distance,
//! covering `tick_count` consecutive vertical ticks. Intensities follow the
//! laser radar equation with all instrument and atmosphere factors lumped
//! into `k_system`; ranges get Gaussian noise whose standard deviation is the
//! ground-truth variance model evaluated at the true intensity. Recorded
//! intensities are noiseless apart from the optional vendor-style scaling.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::{ModelIntensityKind, RangeVarianceModel};
use crate::fmt_f64;
use crate::ingest::{IntensityKind, PolarObservation, ScanDataset, ScanMeta};
use crate::preprocess::mean;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("incidence angle must lie in [0, pi/2], got {0}")]
    InvalidIncidence(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// `k_system * rho * cos(theta) / r^2`.
pub fn radar_intensity(k_system: f64, rho: f64, r: f64, theta: f64) -> Result<f64, SimulateError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SimulateError::NonPositiveRange(r));
    }
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(SimulateError::InvalidIncidence(theta));
    }
    // grazing incidence returns nothing
    let cos = if theta == FRAC_PI_2 { 0.0 } else { theta.cos() };
    Ok(k_system * rho * cos / (r * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Board {
    /// In (0, 1].
    pub reflectivity: f64,
    /// Meters.
    pub distance: f64,
    /// Radians, in [0, pi/2).
    #[serde(default)]
    pub incidence_angle: f64,
    pub tick_count: usize,
    pub profile_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub a: f64,
    pub b: f64,
    /// Millimeters.
    pub c: f64,
}

impl TruthModel {
    pub fn sigma_mm(&self, intensity: f64) -> f64 {
        self.a * intensity.powf(self.b) + self.c
    }

    pub fn to_model(&self) -> RangeVarianceModel {
        RangeVarianceModel::new(self.a, self.b, self.c, ModelIntensityKind::Raw)
    }
}

/// How true intensities become recorded intensities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    /// `I * r_mean^2 / r_ref`, with `r_mean` the realised tick mean range, so
    /// that range calibration with the same `r_ref` inverts it exactly.
    InverseSquare { r_ref: f64 },
    /// Piecewise-linear in log-log space through `(true, recorded)` knots,
    /// extended linearly past the ends.
    CustomMonotone { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutlierInjection {
    /// Probability that a point is replaced, in [0, 1).
    pub fraction: f64,
    /// Offset of a replaced point in units of its tick sigma.
    pub magnitude_sigma: f64,
}

fn default_tick_step() -> f64 {
    1e-3
}

fn default_first_angle() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub k_system: f64,
    pub boards: Vec<Board>,
    pub truth: TruthModel,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub outliers: OutlierInjection,
    pub seed: u64,
    /// Vertical spacing of consecutive ticks, radians.
    #[serde(default = "default_tick_step")]
    pub tick_step: f64,
    /// Vertical angle of the first tick, radians.
    #[serde(default = "default_first_angle")]
    pub first_angle: f64,
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimulateError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimulateError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |s: String| Err(SimulateError::InvalidConfig(s));
        if !(self.k_system.is_finite() && self.k_system > 0.0) {
            return bad(format!("k_system must be > 0, got {}", self.k_system));
        }
        if self.boards.is_empty() {
            return bad("at least one board is required".into());
        }
        if !(self.tick_step.is_finite() && self.tick_step > 0.0) || !self.first_angle.is_finite() {
            return bad("tick_step must be > 0 and first_angle finite".into());
        }
        let TruthModel { a, b, c } = self.truth;
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return bad("truth model parameters must be finite".into());
        }
        let o = self.outliers;
        if !(0.0..1.0).contains(&o.fraction) || !(o.magnitude_sigma.is_finite() && o.magnitude_sigma >= 0.0) {
            return bad(format!("outlier fraction must be in [0,1) and magnitude >= 0, got {o:?}"));
        }
        for (k, board) in self.boards.iter().enumerate() {
            if !(board.reflectivity > 0.0 && board.reflectivity <= 1.0) {
                return bad(format!("board {k}: reflectivity must be in (0, 1]"));
            }
            if !(board.distance.is_finite() && board.distance > 0.0) {
                return bad(format!("board {k}: distance must be > 0"));
            }
            if !(0.0..FRAC_PI_2).contains(&board.incidence_angle) {
                return bad(format!("board {k}: incidence angle must be in [0, pi/2)"));
            }
            if board.tick_count == 0 || board.profile_count == 0 {
                return bad(format!("board {k}: tick_count and profile_count must be >= 1"));
            }
            let intensity = self.board_intensity(board)?;
            let sigma = self.truth.sigma_mm(intensity);
            if !(sigma.is_finite() && sigma > 0.0) {
                return bad(format!("board {k}: truth sigma at I={intensity} is {sigma}, must be > 0"));
            }
        }
        match &self.scaling {
            Scaling::None => {}
            Scaling::InverseSquare { r_ref } => {
                if !(r_ref.is_finite() && *r_ref > 0.0) {
                    return bad(format!("r_ref must be > 0, got {r_ref}"));
                }
            }
            Scaling::CustomMonotone { table } => {
                if table.len() < 2 {
                    return bad("scaling table needs at least two knots".into());
                }
                if !table.iter().all(|(x, y)| x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0) {
                    return bad("scaling table entries must be positive".into());
                }
                if !table.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                    return bad("scaling table must be strictly increasing in both columns".into());
                }
            }
        }
        Ok(())
    }

    pub fn board_intensity(&self, board: &Board) -> Result<f64, SimulateError> {
        radar_intensity(self.k_system, board.reflectivity, board.distance, board.incidence_angle)
    }

    pub fn intensity_kind(&self) -> IntensityKind {
        match self.scaling {
            Scaling::None => IntensityKind::Raw,
            _ => IntensityKind::Scaled,
        }
    }
}

fn interpolate_log_log(table: &[(f64, f64)], x: f64) -> f64 {
    let lx = x.ln();
    let seg = table.windows(2).position(|w| lx <= w[1].0.ln()).unwrap_or(table.len() - 2);
    let (x0, y0) = (table[seg].0.ln(), table[seg].1.ln());
    let (x1, y1) = (table[seg + 1].0.ln(), table[seg + 1].1.ln());
    (y0 + (y1 - y0) * (lx - x0) / (x1 - x0)).exp()
}

impl Scaling {
    /// Recorded intensity for a tick with true intensity `true_i` and realised
    /// mean range `mean_range`.
    pub fn apply(&self, true_i: f64, mean_range: f64) -> f64 {
        match self {
            Scaling::None => true_i,
            Scaling::InverseSquare { r_ref } => true_i * mean_range * mean_range / r_ref,
            Scaling::CustomMonotone { table } => interpolate_log_log(table, true_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthTick {
    pub tick_id: i64,
    pub board: usize,
    pub vertical_angle: f64,
    pub true_intensity: f64,
    pub true_sigma_mm: f64,
    /// Mean of the simulated ranges of this tick, meters.
    pub mean_range: f64,
    pub recorded_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub ticks: Vec<TruthTick>,
    /// Dataset indices of points replaced by injected outliers, ascending.
    pub outlier_indices: Vec<usize>,
}

struct BoardSamples {
    /// `ranges[tick][profile]`
    ranges: Vec<Vec<f64>>,
    outlier: Vec<Vec<bool>>,
}

fn sample_board(cfg: &SimulationConfig, index: usize, board: &Board, sigma_m: f64) -> BoardSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut ranges = vec![Vec::with_capacity(board.profile_count); board.tick_count];
    let mut outlier = vec![Vec::with_capacity(board.profile_count); board.tick_count];
    for _ in 0..board.profile_count {
        for t in 0..board.tick_count {
            let z: f64 = StandardNormal.sample(&mut rng);
            let u: f64 = rng.random();
            let flip: bool = rng.random();
            let is_outlier = u < cfg.outliers.fraction;
            let offset = if is_outlier {
                let sign = if flip { 1.0 } else { -1.0 };
                sign * cfg.outliers.magnitude_sigma * sigma_m
            } else {
                z * sigma_m
            };
            ranges[t].push(board.distance + offset);
            outlier[t].push(is_outlier);
        }
    }
    BoardSamples { ranges, outlier }
}

/// Generates a scan and its ground truth. Output depends only on `cfg`.
///
/// Rows are written profile by profile; within a profile the ticks of all
/// boards follow in ascending vertical angle.
pub fn simulate_profiles(cfg: &SimulationConfig) -> Result<(ScanDataset, GroundTruth), SimulateError> {
    cfg.validate()?;

    let mut truth = Vec::new();
    let mut samples = Vec::with_capacity(cfg.boards.len());
    let mut recorded = Vec::with_capacity(cfg.boards.len());
    let mut first_tick = 0usize;
    for (bi, board) in cfg.boards.iter().enumerate() {
        let intensity = cfg.board_intensity(board)?;
        let sigma_mm = cfg.truth.sigma_mm(intensity);
        let s = sample_board(cfg, bi, board, sigma_mm / 1000.0);
        let mut board_recorded = Vec::with_capacity(board.tick_count);
        for t in 0..board.tick_count {
            let mean_range = mean(&s.ranges[t]);
            let recorded_intensity = cfg.scaling.apply(intensity, mean_range);
            let g = first_tick + t;
            truth.push(TruthTick {
                tick_id: g as i64,
                board: bi,
                vertical_angle: cfg.first_angle + g as f64 * cfg.tick_step,
                true_intensity: intensity,
                true_sigma_mm: sigma_mm,
                mean_range,
                recorded_intensity,
            });
            board_recorded.push(recorded_intensity);
        }
        first_tick += board.tick_count;
        samples.push(s);
        recorded.push(board_recorded);
    }

    let max_profiles = cfg.boards.iter().map(|b| b.profile_count).max().unwrap_or(0);
    let mut observations = Vec::with_capacity(cfg.boards.iter().map(|b| b.profile_count * b.tick_count).sum());
    let mut outlier_indices = Vec::new();
    for p in 0..max_profiles {
        let mut g = 0usize;
        for (bi, board) in cfg.boards.iter().enumerate() {
            if p < board.profile_count {
                let s = &samples[bi];
                for (t, &intensity) in recorded[bi].iter().enumerate() {
                    if s.outlier[t][p] {
                        outlier_indices.push(observations.len());
                    }
                    observations.push(PolarObservation {
                        profile_index: p as u32,
                        vertical_angle: cfg.first_angle + (g + t) as f64 * cfg.tick_step,
                        horizontal_angle: 0.0,
                        range: s.ranges[t][p],
                        intensity,
                    });
                }
            }
            g += board.tick_count;
        }
    }

    let distances: Vec<f64> = cfg.boards.iter().map(|b| b.distance).collect();
    let nominal_distance = distances.iter().all(|d| *d == distances[0]).then_some(distances[0]);
    let meta = ScanMeta {
        scanner_id: "simulated".into(),
        scanning_rate_khz: None,
        nominal_distance,
        intensity_kind: cfg.intensity_kind(),
        point_spacing_note: None,
    };
    Ok((ScanDataset { observations, meta, skipped_rows: 0 }, GroundTruth { ticks: truth, outlier_indices }))
}

/// `tick_id,true_intensity,true_sigma_mm`.
pub fn write_ground_truth<W: Write>(truth: &GroundTruth, mut out: W) -> std::io::Result<()> {
    writeln!(out, "tick_id,true_intensity,true_sigma_mm")?;
    for t in &truth.ticks {
        writeln!(out, "{},{},{}", t.tick_id, fmt_f64(t.true_intensity), fmt_f64(t.true_sigma_mm))?;
    }
    Ok(())
}
