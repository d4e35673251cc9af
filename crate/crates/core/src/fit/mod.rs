//! Least-squares estimation of `sigma_r = a * I^b + c`.
//!
//! The model is nonlinear in `b`, so the fit runs Levenberg-Marquardt on the
//! Gauss-Newton normal equations with the analytic Jacobian. Columns are
//! scaled by the diagonal of `J^T J` before damping; `a` routinely sits five
//! orders of magnitude above `b` and `c`.

mod model;
mod record;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::CalibratedTickStats;
use crate::preprocess::TickStats;
pub use model::{evaluate_model, jacobian_row, ModelIntensityKind, RangeVarianceModel};
pub use record::{read_model_json, FitRecord, ModelRecord};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("intensity must be positive and finite, got {0}")]
    NonPositiveIntensity(f64),
    #[error("point {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("no convergence after {} iterations (cost {})", .0.iterations, .0.final_cost)]
    NoConvergence(Box<FitReport>),
    #[error("fitted model predicts sigma <= 0 inside [{}, {}]", .0.model.intensity_domain.0, .0.model.intensity_domain.1)]
    DomainViolation(Box<FitReport>),
    #[error("model record: {0}")]
    Record(String),
}

/// One `(I, sigma_r)` pair. `weight` is the sample count behind `std_range`
/// for tick data and 1 otherwise; [`Weighting::Unweighted`] ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    pub intensity: f64,
    /// Millimeters.
    pub std_range: f64,
    pub weight: f64,
}

impl FitPoint {
    pub fn new(intensity: f64, std_range: f64) -> Self {
        Self { intensity, std_range, weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Unweighted,
    /// Use each point's `weight`; tick helpers set it to the tick count.
    PerPoint,
    /// `weight / std_range^2`, proportional to the inverse sampling variance
    /// of a standard deviation estimated from `weight` samples.
    #[default]
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when every column of `J` is this close to orthogonal to the residuals.
    pub gradient_tolerance: f64,
    /// Stop when no parameter moves by more than this (relative to `max(|p|, 1)`).
    pub step_tolerance: f64,
    pub weighting: Weighting,
    /// Overrides the log-log starting point.
    pub initial: Option<[f64; 3]>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            cost_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            weighting: Weighting::InverseVariance,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterStddevs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: RangeVarianceModel,
    pub iterations: usize,
    /// Sum of weighted squared residuals; mm^2 when unweighted.
    pub final_cost: f64,
    pub initial_cost: f64,
    pub converged: bool,
    pub point_count: usize,
    /// `final_cost / (m - 3)`; `None` with exactly three points.
    pub variance_factor: Option<f64>,
    pub parameter_stddevs: Option<ParameterStddevs>,
    pub weighting: Weighting,
    /// Unweighted root mean square of `model - std_range`, mm.
    pub rms_residual_mm: f64,
    /// Largest |cosine| between a Jacobian column and the residual vector.
    pub gradient_cosine: f64,
}

fn check_points(points: &[FitPoint]) -> Result<(), FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (index, p) in points.iter().enumerate() {
        if !(p.intensity.is_finite() && p.intensity > 0.0) {
            return Err(FitError::InvalidPoint { index, reason: format!("intensity {} is not positive", p.intensity) });
        }
        if !(p.std_range.is_finite() && p.std_range >= 0.0) {
            return Err(FitError::InvalidPoint { index, reason: format!("std_range {} is negative", p.std_range) });
        }
        if !(p.weight.is_finite() && p.weight > 0.0) {
            return Err(FitError::InvalidPoint { index, reason: format!("weight {} is not positive", p.weight) });
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.intensity).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(FitError::RankDeficient(format!("only {} distinct intensities", xs.len())));
    }
    Ok(())
}

/// Ordinary least squares `y = intercept + slope * x`; returns
/// `(intercept, slope, residual sum of squares)`.
fn linear_regression(xy: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some((intercept, slope, rss))
}

/// Starting point for the solver from a log-log regression.
///
/// `c0` is tried at half the smallest observed sigma and at zero; `(a0, b0)`
/// come from regressing `ln(sigma - c0)` on `ln I` over the points with
/// `sigma > c0`, and the candidate with the smaller log-space residual wins.
/// A candidate with fewer than three usable points is skipped.
pub fn initial_guess(points: &[FitPoint]) -> Result<(f64, f64, f64), FitError> {
    check_points(points)?;
    let min_s = points.iter().map(|p| p.std_range).fold(f64::INFINITY, f64::min);
    let max_s = points.iter().map(|p| p.std_range).fold(f64::NEG_INFINITY, f64::max);
    if max_s == min_s {
        return Err(FitError::RankDeficient("std_range is constant".into()));
    }

    let mut best: Option<(f64, f64, f64, f64)> = None;
    for c0 in [0.5 * min_s, 0.0] {
        let xy: Vec<(f64, f64)> =
            points.iter().filter(|p| p.std_range > c0).map(|p| (p.intensity.ln(), (p.std_range - c0).ln())).collect();
        if xy.len() < 3 {
            continue;
        }
        let Some((intercept, slope, rss)) = linear_regression(&xy) else { continue };
        if best.is_none_or(|(_, _, _, best_rss)| rss < best_rss) {
            best = Some((intercept.exp(), slope, c0, rss));
        }
    }
    match best {
        Some((a0, b0, c0, _)) if a0.is_finite() && b0.is_finite() => Ok((a0, b0, c0)),
        _ => Err(FitError::RankDeficient("log-log regression has no spread".into())),
    }
}

struct Problem<'a> {
    points: &'a [FitPoint],
    ln_i: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(points: &'a [FitPoint], weighting: Weighting) -> Self {
        Self {
            points,
            ln_i: points.iter().map(|p| p.intensity.ln()).collect(),
            sqrt_w: points
                .iter()
                .map(|p| match weighting {
                    Weighting::Unweighted => 1.0,
                    Weighting::PerPoint => p.weight.sqrt(),
                    Weighting::InverseVariance => p.weight.sqrt() / p.std_range,
                })
                .collect(),
        }
    }

    fn residuals(&self, p: &Vector3<f64>) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.ln_i)
            .zip(&self.sqrt_w)
            .map(|((pt, li), sw)| sw * (p[0] * (p[1] * li).exp() + p[2] - pt.std_range))
            .collect()
    }

    fn cost(&self, p: &Vector3<f64>) -> f64 {
        self.residuals(p).iter().map(|r| r * r).sum()
    }

    /// `(J^T J, J^T r, r)` at `p`.
    fn normal_equations(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>, Vec<f64>) {
        let r = self.residuals(p);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for ((li, sw), ri) in self.ln_i.iter().zip(&self.sqrt_w).zip(&r) {
            let pw = (p[1] * li).exp();
            let row = Vector3::new(sw * pw, sw * p[0] * pw * li, *sw);
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        (jtj, jtr, r)
    }
}

/// Column scales `sqrt(diag(J^T J))`, floored so a dead column stays solvable.
fn column_scales(jtj: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|k, _| jtj[(k, k)].sqrt().max(1e-150))
}

/// Solves `(J^T J + mu * diag(J^T J)) delta = -J^T r` in scaled coordinates.
fn damped_step(jtj: &Matrix3<f64>, jtr: &Vector3<f64>, mu: f64) -> Option<Vector3<f64>> {
    let d = column_scales(jtj);
    let mut scaled = Matrix3::from_fn(|i, j| jtj[(i, j)] / (d[i] * d[j]));
    for k in 0..3 {
        scaled[(k, k)] += mu;
    }
    let rhs = Vector3::from_fn(|k, _| -jtr[k] / d[k]);
    let step = scaled.cholesky()?.solve(&rhs);
    Some(step.component_div(&d))
}

fn covariance(jtj: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let d = column_scales(jtj);
    let scaled = Matrix3::from_fn(|i, j| jtj[(i, j)] / (d[i] * d[j]));
    let inv = scaled.cholesky()?.inverse();
    Some(Matrix3::from_fn(|i, j| inv[(i, j)] / (d[i] * d[j])))
}

fn domain_of(points: &[FitPoint]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.intensity), hi.max(p.intensity)))
}

/// Fits `sigma_r = a * I^b + c` to `points`. The model is tagged `kind`.
pub fn fit_model_as(points: &[FitPoint], kind: ModelIntensityKind, opts: &FitOptions) -> Result<FitReport, FitError> {
    check_points(points)?;
    if opts.weighting == Weighting::InverseVariance {
        if let Some(index) = points.iter().position(|p| p.std_range == 0.0) {
            return Err(FitError::InvalidPoint {
                index,
                reason: "inverse-variance weighting needs std_range > 0".into(),
            });
        }
    }
    let (a0, b0, c0) = match opts.initial {
        Some([a, b, c]) => (a, b, c),
        None => initial_guess(points)?,
    };
    let problem = Problem::new(points, opts.weighting);
    let mut p = Vector3::new(a0, b0, c0);
    let mut mu = opts.initial_damping;
    let (mut jtj, mut jtr, mut r) = problem.normal_equations(&p);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    if !cost.is_finite() {
        return Err(FitError::RankDeficient("initial guess gives a non-finite cost".into()));
    }
    let initial_cost = cost;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        if gradient_cosine(&jtj, &jtr, cost) <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let Some(step) = damped_step(&jtj, &jtr, mu) else {
            mu *= 10.0;
            continue;
        };
        let moved = (0..3).map(|k| step[k].abs() / p[k].abs().max(1.0)).fold(0.0, f64::max);
        let candidate = p + step;
        let new_cost = problem.cost(&candidate);
        if new_cost.is_finite() && new_cost < cost {
            // reduction predicted by the linearisation for this step
            let predicted = -(2.0 * step.dot(&jtr) + (step.transpose() * jtj * step)[(0, 0)]);
            let actual = cost - new_cost;
            p = candidate;
            (jtj, jtr, r) = problem.normal_equations(&p);
            let prev = cost;
            cost = r.iter().map(|x| x * x).sum();
            mu = (mu / 10.0).max(1e-15);
            if cost == 0.0
                || (actual <= opts.cost_tolerance * prev && predicted <= opts.cost_tolerance * prev)
                || moved <= opts.step_tolerance
            {
                converged = true;
            }
        } else {
            mu *= 10.0;
            if moved <= opts.step_tolerance || mu > 1e32 {
                // no admissible step is left: the current point is stationary
                converged = true;
            }
        }
    }

    let m = points.len();
    let variance_factor = (m > 3).then(|| cost / (m - 3) as f64);
    let parameter_stddevs = variance_factor.and_then(|s0| {
        let cov = covariance(&jtj)?;
        Some(ParameterStddevs {
            a: (s0 * cov[(0, 0)]).sqrt(),
            b: (s0 * cov[(1, 1)]).sqrt(),
            c: (s0 * cov[(2, 2)]).sqrt(),
        })
    });
    let (lo, hi) = domain_of(points);
    let rms_residual_mm =
        (points.iter().map(|pt| (p[0] * pt.intensity.powf(p[1]) + p[2] - pt.std_range).powi(2)).sum::<f64>()
            / m as f64)
            .sqrt();
    let report = FitReport {
        model: RangeVarianceModel { a: p[0], b: p[1], c: p[2], intensity_domain: (lo, hi), intensity_kind: kind },
        iterations,
        final_cost: cost,
        initial_cost,
        converged,
        point_count: m,
        variance_factor,
        parameter_stddevs,
        weighting: opts.weighting,
        rms_residual_mm,
        gradient_cosine: gradient_cosine(&jtj, &jtr, cost),
    };
    if !converged {
        return Err(FitError::NoConvergence(Box::new(report)));
    }
    if !p.iter().all(|v| v.is_finite()) || !(report.model.min_sigma_over_domain() > 0.0) {
        return Err(FitError::DomainViolation(Box::new(report)));
    }
    Ok(report)
}

fn gradient_cosine(jtj: &Matrix3<f64>, jtr: &Vector3<f64>, cost: f64) -> f64 {
    if cost == 0.0 {
        return 0.0;
    }
    let rn = cost.sqrt();
    (0..3).map(|k| jtr[k].abs() / (jtj[(k, k)].sqrt().max(1e-300) * rn)).fold(0.0, f64::max)
}

/// Fits on raw intensities.
pub fn fit_model(points: &[FitPoint], opts: &FitOptions) -> Result<FitReport, FitError> {
    fit_model_as(points, ModelIntensityKind::Raw, opts)
}

/// `(mean_intensity, std_range)` pairs with the tick count as weight.
pub fn points_from_ticks(stats: &[TickStats]) -> Vec<FitPoint> {
    stats
        .iter()
        .map(|s| FitPoint { intensity: s.mean_intensity, std_range: s.std_range, weight: s.count as f64 })
        .collect()
}

pub fn fit_ticks(stats: &[TickStats], kind: ModelIntensityKind, opts: &FitOptions) -> Result<FitReport, FitError> {
    fit_model_as(&points_from_ticks(stats), kind, opts)
}

/// Fits one model across distances using calibrated intensities as abscissa.
pub fn fit_general_model(calibrated: &[CalibratedTickStats], opts: &FitOptions) -> Result<FitReport, FitError> {
    let points: Vec<FitPoint> = calibrated
        .iter()
        .map(|t| FitPoint {
            intensity: t.calibrated_intensity,
            std_range: t.stats.std_range,
            weight: t.stats.count as f64,
        })
        .collect();
    fit_model_as(&points, ModelIntensityKind::Calibrated, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{calibrate_ticks, CalibrationConfig};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
    }

    fn exact_points(a: f64, b: f64, c: f64, xs: &[f64]) -> Vec<FitPoint> {
        xs.iter().map(|&i| FitPoint::new(i, a * i.powf(b) + c)).collect()
    }

    fn noisy_points(rng: &mut ChaCha8Rng, a: f64, b: f64, c: f64, xs: &[f64], rel: f64) -> Vec<FitPoint> {
        xs.iter()
            .map(|&i| {
                let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                FitPoint::new(i, (a * i.powf(b) + c) * (1.0 + rel * u))
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let pts = exact_points(100.0, -1.0, 0.1, &log_spaced(50, 10.0, 1e5));
        let rep = fit_model(&pts, &FitOptions::default()).unwrap();
        let m = rep.model;
        assert!(rep.converged);
        assert!((m.a / 100.0 - 1.0).abs() < 1e-6, "{m:?}");
        assert!((m.b + 1.0).abs() < 1e-6);
        assert!((m.c / 0.1 - 1.0).abs() < 1e-6);
        assert!(rep.final_cost <= rep.initial_cost);
        assert_eq!(m.intensity_domain, (pts[0].intensity, pts[49].intensity));
    }

    #[test]
    fn too_few_and_degenerate() {
        let two = [FitPoint::new(1.0, 1.0), FitPoint::new(2.0, 0.5)];
        assert!(matches!(fit_model(&two, &FitOptions::default()), Err(FitError::TooFewPoints(2))));
        let same_i = [FitPoint::new(5.0, 1.0), FitPoint::new(5.0, 0.5), FitPoint::new(5.0, 0.7)];
        assert!(matches!(fit_model(&same_i, &FitOptions::default()), Err(FitError::RankDeficient(_))));
        let const_s: Vec<FitPoint> = [10.0, 100.0, 1000.0, 1e4].iter().map(|&i| FitPoint::new(i, 0.4)).collect();
        assert!(matches!(initial_guess(&const_s), Err(FitError::RankDeficient(_))));
        let bad = [FitPoint::new(1.0, 1.0), FitPoint::new(0.0, 0.5), FitPoint::new(3.0, 0.2)];
        assert!(matches!(fit_model(&bad, &FitOptions::default()), Err(FitError::InvalidPoint { index: 1, .. })));
    }

    #[test]
    fn pure_power_law_guess_is_exact() {
        let pts = exact_points(250.0, -0.83, 0.0, &log_spaced(20, 5.0, 5e4));
        let (a0, b0, c0) = initial_guess(&pts).unwrap();
        assert_eq!(c0, 0.0);
        assert!((b0 + 0.83).abs() < 1e-9, "{b0}");
        assert!((a0 / 250.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn table_shaped_data_converges_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = noisy_points(&mut rng, 29853.0, -1.02, 0.08, &log_spaced(40, 1e2, 1e5), 0.013);
        let rep = fit_model(&pts, &FitOptions::default()).unwrap();
        assert!(rep.iterations <= 50, "{}", rep.iterations);
        assert!(rep.final_cost <= rep.initial_cost);
        let sd = rep.parameter_stddevs.unwrap();
        assert!(sd.a > 0.0 && sd.b > 0.0 && sd.c > 0.0);
        assert!((rep.model.b + 1.02).abs() < 5.0 * sd.b.max(1e-3));
    }

    #[test]
    fn non_convergence_returns_the_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = noisy_points(&mut rng, 500.0, -1.0, 0.2, &log_spaced(30, 10.0, 1e4), 0.05);
        let opts = FitOptions { max_iterations: 1, initial: Some([1.0, -0.2, 3.0]), ..Default::default() };
        match fit_model(&pts, &opts) {
            Err(FitError::NoConvergence(rep)) => {
                assert!(!rep.converged);
                assert_eq!(rep.iterations, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_predictions_are_rejected() {
        // sigma decreasing through zero inside the data span
        let xs = log_spaced(12, 1.0, 1e3);
        let pts: Vec<FitPoint> = xs.iter().map(|&i| FitPoint::new(i, (1.0 - i.log10() / 2.0).max(0.0))).collect();
        assert!(matches!(fit_model(&pts, &FitOptions::default()), Err(FitError::InvalidPoint { index: 8, .. })));
        let unweighted = FitOptions { weighting: Weighting::Unweighted, ..Default::default() };
        match fit_model(&pts, &unweighted) {
            Err(FitError::DomainViolation(rep)) => assert!(rep.model.min_sigma_over_domain() <= 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn uniform_weights_do_not_move_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = noisy_points(&mut rng, 800.0, -1.1, 0.15, &log_spaced(25, 20.0, 2e4), 0.02);
        let base = fit_model(&pts, &FitOptions { weighting: Weighting::Unweighted, ..Default::default() }).unwrap();
        let w = 37.0;
        let weighted: Vec<FitPoint> = pts.iter().map(|p| FitPoint { weight: w, ..*p }).collect();
        let opts = FitOptions { weighting: Weighting::PerPoint, ..Default::default() };
        let rep = fit_model(&weighted, &opts).unwrap();
        assert!((rep.model.a / base.model.a - 1.0).abs() < 1e-7);
        assert!((rep.model.b - base.model.b).abs() < 1e-8);
        assert!((rep.model.c - base.model.c).abs() < 1e-8);
        assert!((rep.final_cost / (w * base.final_cost) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inverse_variance_weights_follow_relative_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = noisy_points(&mut rng, 800.0, -1.1, 0.15, &log_spaced(25, 20.0, 2e4), 0.02);
        let opts = FitOptions::default();
        let base = fit_model(&pts, &opts).unwrap();
        assert_eq!(base.weighting, Weighting::InverseVariance);
        // a common count only rescales the cost
        let counted: Vec<FitPoint> = pts.iter().map(|p| FitPoint { weight: 500.0, ..*p }).collect();
        let rep = fit_model(&counted, &opts).unwrap();
        assert!((rep.model.a / base.model.a - 1.0).abs() < 1e-7);
        assert!((rep.model.b - base.model.b).abs() < 1e-8);
        assert!((rep.model.c - base.model.c).abs() < 1e-8);
        assert!((rep.final_cost / (500.0 * base.final_cost) - 1.0).abs() < 1e-6);
        // the same fit with explicit per-point weights 1 / sigma^2
        let explicit: Vec<FitPoint> =
            pts.iter().map(|p| FitPoint { weight: 1.0 / (p.std_range * p.std_range), ..*p }).collect();
        let rep = fit_model(&explicit, &FitOptions { weighting: Weighting::PerPoint, ..opts }).unwrap();
        assert!((rep.model.b - base.model.b).abs() < 1e-8);
        assert!((rep.model.c - base.model.c).abs() < 1e-8);
    }

    #[test]
    fn residuals_are_orthogonal_at_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = noisy_points(&mut rng, 3e4, -1.0, 0.1, &log_spaced(30, 100.0, 1e5), 0.02);
        let rep = fit_model(&pts, &FitOptions::default()).unwrap();
        assert!(rep.gradient_cosine < 1e-6, "{}", rep.gradient_cosine);
    }

    #[test]
    fn single_distance_general_model_rescales_a_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs = log_spaced(20, 50.0, 5e4);
        let noisy = noisy_points(&mut rng, 2000.0, -0.95, 0.12, &xs, 0.02);
        let r_bar = 25.0;
        let stats: Vec<TickStats> = noisy
            .iter()
            .enumerate()
            .map(|(k, p)| TickStats {
                tick_id: k as i64,
                vertical_angle_center: 0.0,
                mean_intensity: p.intensity,
                mean_range: r_bar,
                std_range: p.std_range,
                count: 100,
            })
            .collect();
        let cfg = CalibrationConfig::new(10.0).unwrap();
        let general = fit_general_model(&calibrate_ticks(&stats, &cfg).unwrap(), &FitOptions::default()).unwrap();
        let direct = fit_ticks(&stats, ModelIntensityKind::Scaled, &FitOptions::default()).unwrap();
        assert_eq!(general.model.intensity_kind, ModelIntensityKind::Calibrated);
        assert!((general.model.b - direct.model.b).abs() < 1e-9);
        assert!((general.model.c - direct.model.c).abs() < 1e-9);
        let factor = (r_bar * r_bar / cfg.r_ref).powf(direct.model.b);
        assert!((general.model.a / (direct.model.a * factor) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_general_model() {
        assert!(matches!(fit_general_model(&[], &FitOptions::default()), Err(FitError::TooFewPoints(0))));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = noisy_points(&mut rng, 900.0, -1.0, 0.1, &log_spaced(15, 10.0, 1e4), 0.03);
        let a = fit_model(&pts, &FitOptions::default()).unwrap();
        let b = fit_model(&pts, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn analytic_jacobian_matches_central_differences(
            a in 1e2f64..2e5, b in -1.5f64..-0.5, c in 0.0f64..0.5, li in (10.0f64).ln()..(1e5f64).ln()
        ) {
            let i = li.exp();
            let f = |p: [f64; 3]| p[0] * i.powf(p[1]) + p[2];
            let row = jacobian_row(a, b, i);
            let p = [a, b, c];
            for k in 0..3 {
                let h = 1e-4 * p[k].abs().max(1.0);
                let mut up = p;
                let mut dn = p;
                up[k] += h;
                dn[k] -= h;
                let fd = (f(up) - f(dn)) / (2.0 * h);
                prop_assert!((fd - row[k]).abs() <= 1e-5 * row[k].abs().max(1e-12), "k={} fd={} an={}", k, fd, row[k]);
            }
        }

        #[test]
        fn cost_never_exceeds_the_start(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = 10f64.powf(rng.random::<f64>() * 3.0 + 1.0);
            let b = -0.5 - rng.random::<f64>();
            let c = 0.05 + 0.3 * rng.random::<f64>();
            let pts = noisy_points(&mut rng, a, b, c, &log_spaced(20, 10.0, 1e5), 0.05);
            if let Ok(rep) = fit_model(&pts, &FitOptions::default()) {
                prop_assert!(rep.final_cost <= rep.initial_cost);
            }
        }
    }
}
