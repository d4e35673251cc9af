//! JSON records for fitted models.

use serde::{Deserialize, Serialize};

use super::{FitError, FitReport, ModelIntensityKind, ParameterStddevs, RangeVarianceModel, Weighting};

/// A model with explicit units, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub formula: String,
    pub a: f64,
    pub a_unit: String,
    pub b: f64,
    pub c: f64,
    pub c_unit: String,
    pub intensity_kind: ModelIntensityKind,
    pub intensity_domain: [f64; 2],
}

impl From<&RangeVarianceModel> for ModelRecord {
    fn from(m: &RangeVarianceModel) -> Self {
        Self {
            formula: "sigma_r = a * I^b + c".into(),
            a: m.a,
            a_unit: m.intensity_kind.a_unit().into(),
            b: m.b,
            c: m.c,
            c_unit: "mm".into(),
            intensity_kind: m.intensity_kind,
            intensity_domain: [m.intensity_domain.0, m.intensity_domain.1],
        }
    }
}

impl ModelRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serialises");
        s.push('\n');
        s
    }

    pub fn to_model(&self) -> Result<RangeVarianceModel, FitError> {
        let [lo, hi] = self.intensity_domain;
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(FitError::Record("model parameters must be finite".into()));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(FitError::Record(format!("invalid intensity domain [{lo}, {hi}]")));
        }
        Ok(RangeVarianceModel {
            a: self.a,
            b: self.b,
            c: self.c,
            intensity_domain: (lo, hi),
            intensity_kind: self.intensity_kind,
        })
    }
}

/// Fit output: the model plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: ModelRecord,
    pub converged: bool,
    pub iterations: usize,
    pub point_count: usize,
    pub weighting: Weighting,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub variance_factor: Option<f64>,
    pub rms_residual_mm: f64,
    pub parameter_stddevs: Option<ParameterStddevs>,
}

impl From<&FitReport> for FitRecord {
    fn from(r: &FitReport) -> Self {
        Self {
            model: ModelRecord::from(&r.model),
            converged: r.converged,
            iterations: r.iterations,
            point_count: r.point_count,
            weighting: r.weighting,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            variance_factor: r.variance_factor,
            rms_residual_mm: r.rms_residual_mm,
            parameter_stddevs: r.parameter_stddevs,
        }
    }
}

impl FitRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serialises");
        s.push('\n');
        s
    }
}

/// Reads either a [`FitRecord`] or a bare [`ModelRecord`].
pub fn read_model_json(text: &str) -> Result<RangeVarianceModel, FitError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| FitError::Record(e.to_string()))?;
    let model = value.get("model").cloned().unwrap_or(value);
    let record: ModelRecord = serde_json::from_value(model).map_err(|e| FitError::Record(e.to_string()))?;
    record.to_model()
}
