//! Sample statistics used by the tick screening.

use super::PreprocessError;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; even-length inputs give the midpoint of the two central order
/// statistics. NaN sorts last.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn spread_about(values: &[f64], center: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - center) * (v - center)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Sample standard deviation about the arithmetic mean (n - 1 divisor).
pub fn std_about_mean(values: &[f64]) -> Result<f64, PreprocessError> {
    if values.len() < 2 {
        return Err(PreprocessError::TooFewValues { needed: 2, got: values.len() });
    }
    Ok(spread_about(values, mean(values)))
}

/// Standard deviation about the median, with the same n - 1 divisor.
pub fn std_about_median(values: &[f64]) -> Result<f64, PreprocessError> {
    if values.len() < 2 {
        return Err(PreprocessError::TooFewValues { needed: 2, got: values.len() });
    }
    Ok(spread_about(values, median(values)))
}
