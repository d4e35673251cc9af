use serde::{Deserialize, Serialize};

use super::FitError;
use crate::ingest::IntensityKind;

/// Abscissa the model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelIntensityKind {
    #[default]
    Raw,
    Scaled,
    Calibrated,
}

impl From<IntensityKind> for ModelIntensityKind {
    fn from(k: IntensityKind) -> Self {
        match k {
            IntensityKind::Raw => ModelIntensityKind::Raw,
            IntensityKind::Scaled => ModelIntensityKind::Scaled,
        }
    }
}

impl ModelIntensityKind {
    /// Unit label for `a`.
    pub fn a_unit(self) -> &'static str {
        match self {
            ModelIntensityKind::Raw => "mm/INC",
            ModelIntensityKind::Scaled => "mm/%",
            ModelIntensityKind::Calibrated => "mm/calibrated",
        }
    }
}

/// `sigma_r(I) = a * I^b + c`, with sigma in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeVarianceModel {
    pub a: f64,
    pub b: f64,
    /// Millimeters.
    pub c: f64,
    /// `[I_min, I_max]` of the fitted data.
    pub intensity_domain: (f64, f64),
    pub intensity_kind: ModelIntensityKind,
}

impl RangeVarianceModel {
    /// A model with no fitted domain attached (the domain is all of `(0, inf)`).
    pub fn new(a: f64, b: f64, c: f64, intensity_kind: ModelIntensityKind) -> Self {
        Self { a, b, c, intensity_domain: (f64::MIN_POSITIVE, f64::MAX), intensity_kind }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.intensity_domain = (lo, hi);
        self
    }

    /// Predicted range standard deviation in millimeters. No domain check.
    #[inline]
    pub fn sigma(&self, intensity: f64) -> f64 {
        self.a * intensity.powf(self.b) + self.c
    }

    pub fn in_domain(&self, intensity: f64) -> bool {
        intensity >= self.intensity_domain.0 && intensity <= self.intensity_domain.1
    }

    /// Smallest prediction over the fitted domain. `a * I^b` is monotone in
    /// `I`, so the minimum sits at an end point.
    pub fn min_sigma_over_domain(&self) -> f64 {
        let (lo, hi) = self.intensity_domain;
        self.sigma(lo).min(self.sigma(hi))
    }

    /// `n` log-spaced `(I, sigma)` samples across the domain, for plotting.
    pub fn curve(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.intensity_domain;
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..n)
            .map(|k| {
                let i = if k == 0 {
                    lo
                } else if k == n - 1 {
                    hi
                } else {
                    (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp()
                };
                (i, self.sigma(i))
            })
            .collect()
    }
}

/// Predicted range standard deviation [mm] at a positive intensity.
pub fn evaluate_model(m: &RangeVarianceModel, intensity: f64) -> Result<f64, FitError> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(FitError::NonPositiveIntensity(intensity));
    }
    Ok(m.sigma(intensity))
}

/// Partial derivatives of `a * I^b + c` with respect to `(a, b, c)`.
#[inline]
pub fn jacobian_row(a: f64, b: f64, intensity: f64) -> [f64; 3] {
    let p = intensity.powf(b);
    [p, a * p * intensity.ln(), 1.0]
}
