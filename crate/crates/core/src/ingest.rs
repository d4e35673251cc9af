//! Profile-scan CSV ingestion.
//!
//! A scan file is UTF-8 text with optional leading `#key=value` directive
//! lines, a mandatory header naming the columns
//! `profile,vertical_angle,horizontal_angle,range,intensity`, and one
//! observation per line. Columns are matched by name, so their order is free
//! and extra columns are ignored.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt_f64;

/// How intensities in a dataset were exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityKind {
    /// Unscaled backscatter counts ("INC").
    #[default]
    Raw,
    /// Vendor-scaled, distance dependent values (often percent-like).
    Scaled,
}

impl IntensityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntensityKind::Raw => "raw",
            IntensityKind::Scaled => "scaled",
        }
    }
}

impl std::str::FromStr for IntensityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(IntensityKind::Raw),
            "scaled" => Ok(IntensityKind::Scaled),
            other => Err(format!("unknown intensity kind '{other}' (expected raw|scaled)")),
        }
    }
}

/// Angle unit used by the input file. Observations are always stored in radians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
    Gon,
}

impl AngleUnit {
    pub fn to_radians(self, value: f64) -> f64 {
        match self {
            AngleUnit::Radians => value,
            AngleUnit::Degrees => value.to_radians(),
            AngleUnit::Gon => value * std::f64::consts::PI / 200.0,
        }
    }
}

impl std::str::FromStr for AngleUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rad" | "radians" => Ok(AngleUnit::Radians),
            "deg" | "degrees" => Ok(AngleUnit::Degrees),
            "gon" | "grad" => Ok(AngleUnit::Gon),
            other => Err(format!("unknown angle unit '{other}' (expected rad|deg|gon)")),
        }
    }
}

/// One scan point in polar form plus its backscatter intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarObservation {
    pub profile_index: u32,
    /// Radians.
    pub vertical_angle: f64,
    /// Radians.
    pub horizontal_angle: f64,
    /// Meters.
    pub range: f64,
    pub intensity: f64,
}

/// A broken [`PolarObservation`] invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationFault {
    NonFiniteRange,
    NonPositiveRange,
    NonFiniteIntensity,
    NegativeIntensity,
    NonFiniteVerticalAngle,
    NonFiniteHorizontalAngle,
}

impl fmt::Display for ObservationFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObservationFault::NonFiniteRange => "range is not finite",
            ObservationFault::NonPositiveRange => "range is not positive",
            ObservationFault::NonFiniteIntensity => "intensity is not finite",
            ObservationFault::NegativeIntensity => "intensity is negative",
            ObservationFault::NonFiniteVerticalAngle => "vertical angle is not finite",
            ObservationFault::NonFiniteHorizontalAngle => "horizontal angle is not finite",
        };
        f.write_str(s)
    }
}

impl PolarObservation {
    /// Every invariant this observation violates, in a fixed order.
    pub fn faults(&self) -> Vec<ObservationFault> {
        let mut out = Vec::new();
        if !self.range.is_finite() {
            out.push(ObservationFault::NonFiniteRange);
        } else if self.range <= 0.0 {
            out.push(ObservationFault::NonPositiveRange);
        }
        if !self.intensity.is_finite() {
            out.push(ObservationFault::NonFiniteIntensity);
        } else if self.intensity < 0.0 {
            out.push(ObservationFault::NegativeIntensity);
        }
        if !self.vertical_angle.is_finite() {
            out.push(ObservationFault::NonFiniteVerticalAngle);
        }
        if !self.horizontal_angle.is_finite() {
            out.push(ObservationFault::NonFiniteHorizontalAngle);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanMeta {
    pub scanner_id: String,
    pub scanning_rate_khz: Option<f64>,
    /// Meters.
    pub nominal_distance: Option<f64>,
    pub intensity_kind: IntensityKind,
    pub point_spacing_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanDataset {
    pub observations: Vec<PolarObservation>,
    pub meta: ScanMeta,
    /// Rows dropped by a lenient parse. Always zero for strict parses.
    pub skipped_rows: usize,
}

impl ScanDataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub angle_unit: AngleUnit,
    /// Skip and count invalid rows instead of aborting.
    pub lenient: bool,
    /// Used when the file carries no `#intensity_kind` directive.
    pub intensity_kind: Option<IntensityKind>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing column '{0}' in header")]
    MissingColumn(&'static str),
    #[error("line {line}: non-finite value in column '{column}'")]
    NonFiniteValue { line: u64, column: &'static str },
    #[error("line {line}: range must be positive, got {value}")]
    InvalidRange { line: u64, value: f64 },
    #[error("line {line}: intensity must be non-negative, got {value}")]
    InvalidIntensity { line: u64, value: f64 },
    #[error("line {line}: bad directive: {reason}")]
    BadDirective { line: u64, reason: String },
    #[error("dataset contains no observations")]
    EmptyDataset,
}

const COLUMNS: [&str; 5] = ["profile", "vertical_angle", "horizontal_angle", "range", "intensity"];

/// Parses a profile-scan CSV into a [`ScanDataset`], preserving row order.
pub fn parse_profile_csv<R: Read>(mut source: R, options: &ParseOptions) -> Result<ScanDataset, IngestError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;

    let mut meta = ScanMeta::default();
    let mut kind_directive = None;
    let mut body_start = 0usize;
    let mut line_offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim();
        if let Some(directive) = line.strip_prefix('#') {
            line_offset += 1;
            body_start += raw.len();
            apply_directive(directive, line_offset, &mut meta, &mut kind_directive)?;
        } else if line.is_empty() {
            line_offset += 1;
            body_start += raw.len();
        } else {
            break;
        }
    }
    meta.intensity_kind = kind_directive.or(options.intensity_kind).unwrap_or_default();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(&text.as_bytes()[body_start..]);

    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedRow { line: line_offset + 1, reason: e.to_string() })?
        .clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or(IngestError::MissingColumn(name))?;
    }

    let mut observations = Vec::new();
    let mut skipped_rows = 0usize;
    for record in reader.records() {
        let parsed = match record {
            Ok(record) => {
                let line = line_offset + record.position().map_or(0, |p| p.line());
                parse_row(&record, &index, line, options.angle_unit)
            }
            Err(e) => {
                let line = line_offset + e.position().map_or(0, |p| p.line());
                Err(IngestError::MalformedRow { line, reason: e.to_string() })
            }
        };
        match parsed {
            Ok(obs) => observations.push(obs),
            Err(IngestError::Io(e)) => return Err(IngestError::Io(e)),
            Err(_) if options.lenient => skipped_rows += 1,
            Err(e) => return Err(e),
        }
    }

    if observations.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    Ok(ScanDataset { observations, meta, skipped_rows })
}

fn apply_directive(
    directive: &str,
    line: u64,
    meta: &mut ScanMeta,
    kind: &mut Option<IntensityKind>,
) -> Result<(), IngestError> {
    let Some((key, value)) = directive.split_once('=') else {
        // A bare comment line.
        return Ok(());
    };
    let (key, value) = (key.trim(), value.trim());
    let bad = |reason: String| IngestError::BadDirective { line, reason };
    let positive = |v: &str| -> Result<f64, IngestError> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
            _ => Err(bad(format!("{key} must be a positive number, got '{v}'"))),
        }
    };
    match key {
        "scanner" => meta.scanner_id = value.to_string(),
        "rate_khz" => meta.scanning_rate_khz = Some(positive(value)?),
        "nominal_distance_m" => meta.nominal_distance = Some(positive(value)?),
        "intensity_kind" => *kind = Some(value.parse().map_err(bad)?),
        "point_spacing" => meta.point_spacing_note = Some(value.to_string()),
        _ => {}
    }
    Ok(())
}

fn parse_row(
    record: &csv::StringRecord,
    index: &[usize; 5],
    line: u64,
    unit: AngleUnit,
) -> Result<PolarObservation, IngestError> {
    let field = |i: usize| -> Result<&str, IngestError> {
        record.get(index[i]).ok_or_else(|| IngestError::MalformedRow {
            line,
            reason: format!("expected column '{}' but the row has {} fields", COLUMNS[i], record.len()),
        })
    };
    let number = |i: usize| -> Result<f64, IngestError> {
        let s = field(i)?;
        let v: f64 = s.parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("column '{}': cannot parse '{s}' as a number", COLUMNS[i]),
        })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(IngestError::NonFiniteValue { line, column: COLUMNS[i] })
        }
    };

    let profile_str = field(0)?;
    let profile_index: u32 = profile_str.parse().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("profile index '{profile_str}' is not a non-negative integer"),
    })?;
    let vertical_angle = unit.to_radians(number(1)?);
    let horizontal_angle = unit.to_radians(number(2)?);
    let range = number(3)?;
    if range <= 0.0 {
        return Err(IngestError::InvalidRange { line, value: range });
    }
    let intensity = number(4)?;
    if intensity < 0.0 {
        return Err(IngestError::InvalidIntensity { line, value: intensity });
    }
    Ok(PolarObservation { profile_index, vertical_angle, horizontal_angle, range, intensity })
}

/// Writes `ds` in the same CSV format [`parse_profile_csv`] reads, with angles
/// in radians.
pub fn serialize_dataset<W: Write>(ds: &ScanDataset, mut out: W) -> std::io::Result<()> {
    let meta = &ds.meta;
    if !meta.scanner_id.is_empty() {
        writeln!(out, "#scanner={}", meta.scanner_id)?;
    }
    if let Some(rate) = meta.scanning_rate_khz {
        writeln!(out, "#rate_khz={}", fmt_f64(rate))?;
    }
    writeln!(out, "#intensity_kind={}", meta.intensity_kind.as_str())?;
    if let Some(d) = meta.nominal_distance {
        writeln!(out, "#nominal_distance_m={}", fmt_f64(d))?;
    }
    if let Some(note) = &meta.point_spacing_note {
        writeln!(out, "#point_spacing={note}")?;
    }
    writeln!(out, "{}", COLUMNS.join(","))?;
    for o in &ds.observations {
        writeln!(
            out,
            "{},{},{},{},{}",
            o.profile_index,
            fmt_f64(o.vertical_angle),
            fmt_f64(o.horizontal_angle),
            fmt_f64(o.range),
            fmt_f64(o.intensity)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub fault: ObservationFault,
}

/// Summary of a dataset plus every invariant violation found in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub observation_count: usize,
    pub profile_count: usize,
    /// (min, max) over finite values; `None` when there are none.
    pub vertical_angle_span: Option<(f64, f64)>,
    pub intensity_span: Option<(f64, f64)>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observations: {}", self.observation_count)?;
        writeln!(f, "profiles: {}", self.profile_count)?;
        if let Some((lo, hi)) = self.vertical_angle_span {
            writeln!(f, "vertical angle span [rad]: {lo} .. {hi}")?;
        }
        if let Some((lo, hi)) = self.intensity_span {
            writeln!(f, "intensity span: {lo} .. {hi}")?;
        }
        write!(f, "violations: {}", self.violations.len())?;
        for v in self.violations.iter().take(20) {
            write!(f, "\n  observation {}: {}", v.index, v.fault)?;
        }
        if self.violations.len() > 20 {
            write!(f, "\n  ... {} more", self.violations.len() - 20)?;
        }
        Ok(())
    }
}

fn finite_span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Reports counts, spans and invariant violations without touching `ds`.
pub fn validate_dataset(ds: &ScanDataset) -> ValidationReport {
    let profiles: BTreeSet<u32> = ds.observations.iter().map(|o| o.profile_index).collect();
    let violations = ds
        .observations
        .iter()
        .enumerate()
        .flat_map(|(index, o)| o.faults().into_iter().map(move |fault| Violation { index, fault }))
        .collect();
    ValidationReport {
        observation_count: ds.observations.len(),
        profile_count: profiles.len(),
        vertical_angle_span: finite_span(ds.observations.iter().map(|o| o.vertical_angle)),
        intensity_span: finite_span(ds.observations.iter().map(|o| o.intensity)),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "#scanner=ZF5016A\n#rate_khz=136.671\n#intensity_kind=raw\n\
profile,vertical_angle,horizontal_angle,range,intensity\n\
0,0.10,0.0,10.001,5000\n\
0,0.11,0.0,10.002,4900\n\
1,0.10,0.0,9.999,5100\n";

    fn parse(s: &str) -> Result<ScanDataset, IngestError> {
        parse_profile_csv(s.as_bytes(), &ParseOptions::default())
    }

    #[test]
    fn three_rows_in_file_order() {
        let ds = parse(SMALL).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.meta.scanner_id, "ZF5016A");
        assert_eq!(ds.meta.scanning_rate_khz, Some(136.671));
        assert_eq!(ds.meta.intensity_kind, IntensityKind::Raw);
        let ranges: Vec<f64> = ds.observations.iter().map(|o| o.range).collect();
        assert_eq!(ranges, vec![10.001, 10.002, 9.999]);
        assert_eq!(ds.observations[2].profile_index, 1);
    }

    #[test]
    fn negative_range_is_rejected_at_its_line() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,0.1,0,1.0,3\n0,0.2,0,-1.0,3\n";
        match parse(src) {
            Err(IngestError::InvalidRange { line, value }) => {
                assert_eq!(line, 3);
                assert_eq!(value, -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let src = "#intensity_kind=scaled\nprofile,vertical_angle,horizontal_angle,range,intensity\n";
        assert!(matches!(parse(src), Err(IngestError::EmptyDataset)));
    }

    #[test]
    fn nan_and_inf_are_non_finite() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,NaN,0,1.0,3\n";
        assert!(matches!(parse(src), Err(IngestError::NonFiniteValue { line: 2, column: "vertical_angle" })));
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,0,0,1.0,inf\n";
        assert!(matches!(parse(src), Err(IngestError::NonFiniteValue { column: "intensity", .. })));
    }

    #[test]
    fn missing_column() {
        let src = "profile,vertical_angle,range,intensity\n0,0.1,1.0,3\n";
        assert!(matches!(parse(src), Err(IngestError::MissingColumn("horizontal_angle"))));
    }

    #[test]
    fn short_row_is_malformed() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,0.1,0,1.0\n";
        assert!(matches!(parse(src), Err(IngestError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn lenient_parse_skips_and_counts() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n\
0,0.1,0,1.0,3\n0,0.1,0,-2.0,3\n0,abc,0,1.0,3\n1,0.1,0,1.5,2\n";
        let opts = ParseOptions { lenient: true, ..Default::default() };
        let ds = parse_profile_csv(src.as_bytes(), &opts).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.skipped_rows, 2);
    }

    #[test]
    fn crlf_reordered_columns_and_scientific_notation() {
        let src = "#intensity_kind=scaled\r\nrange,intensity,profile,horizontal_angle,vertical_angle\r\n1.5e1,4.2E-1,7,0,1e-3\r\n";
        let ds = parse(src).unwrap();
        let o = ds.observations[0];
        assert_eq!(o.range, 15.0);
        assert_eq!(o.intensity, 0.42);
        assert_eq!(o.profile_index, 7);
        assert_eq!(o.vertical_angle, 1e-3);
        assert_eq!(ds.meta.intensity_kind, IntensityKind::Scaled);
    }

    #[test]
    fn degree_and_gon_conversion() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,90,180,1,1\n";
        let deg =
            parse_profile_csv(src.as_bytes(), &ParseOptions { angle_unit: AngleUnit::Degrees, ..Default::default() })
                .unwrap();
        assert!((deg.observations[0].vertical_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let gon = parse_profile_csv(src.as_bytes(), &ParseOptions { angle_unit: AngleUnit::Gon, ..Default::default() })
            .unwrap();
        assert!((gon.observations[0].horizontal_angle - 0.9 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn intensity_kind_option_is_a_fallback() {
        let src = "profile,vertical_angle,horizontal_angle,range,intensity\n0,0,0,1,1\n";
        let opts = ParseOptions { intensity_kind: Some(IntensityKind::Scaled), ..Default::default() };
        assert_eq!(parse_profile_csv(src.as_bytes(), &opts).unwrap().meta.intensity_kind, IntensityKind::Scaled);
        let with_directive = format!("#intensity_kind=raw\n{src}");
        assert_eq!(
            parse_profile_csv(with_directive.as_bytes(), &opts).unwrap().meta.intensity_kind,
            IntensityKind::Raw
        );
    }

    #[test]
    fn bad_directive_value() {
        let src = "#rate_khz=fast\nprofile,vertical_angle,horizontal_angle,range,intensity\n0,0,0,1,1\n";
        assert!(matches!(parse(src), Err(IngestError::BadDirective { line: 1, .. })));
    }

    #[test]
    fn validation_counts_profiles() {
        let mut observations = Vec::new();
        for p in 0..2 {
            for t in 0..5 {
                observations.push(PolarObservation {
                    profile_index: p,
                    vertical_angle: 0.01 * t as f64,
                    horizontal_angle: 0.0,
                    range: 10.0,
                    intensity: 100.0 + t as f64,
                });
            }
        }
        let ds = ScanDataset { observations, ..Default::default() };
        let report = validate_dataset(&ds);
        assert_eq!(report.observation_count, 10);
        assert_eq!(report.profile_count, 2);
        assert_eq!(report.intensity_span, Some((100.0, 104.0)));
        assert!(report.is_clean());
    }

    #[test]
    fn validation_flags_injected_nan() {
        let mut ds = parse(SMALL).unwrap();
        ds.observations[1].intensity = f64::NAN;
        let before = ds.clone();
        let report = validate_dataset(&ds);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].index, 1);
        assert_eq!(report.violations[0].fault, ObservationFault::NonFiniteIntensity);
        assert!(before.observations[1].intensity.is_nan());
        assert_eq!(ds.len(), before.len());
    }

    #[test]
    fn serialize_then_parse_is_exact() {
        let ds = parse(SMALL).unwrap();
        let mut buf = Vec::new();
        serialize_dataset(&ds, &mut buf).unwrap();
        let back = parse_profile_csv(buf.as_slice(), &ParseOptions::default()).unwrap();
        assert_eq!(back, ds);
    }
}
