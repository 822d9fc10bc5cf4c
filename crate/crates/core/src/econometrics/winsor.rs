//! Percentile clipping.

use serde::Serialize;

use crate::error::{Error, Result};

/// Percentile of sorted data by linear interpolation between order
/// statistics: position `p (n - 1)` on the 0-based sorted sample.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Winsorized {
    pub values: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub clipped_low: usize,
    pub clipped_high: usize,
}

/// Clips `column` to its `lower` and `upper` percentiles. Missing values
/// (NaN) are ignored when computing percentiles and passed through.
pub fn winsorize(column: &[f64], lower: f64, upper: f64) -> Result<Winsorized> {
    if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower >= upper {
        return Err(Error::InvalidParameter(format!(
            "winsorisation needs 0 <= lower < upper <= 1, got ({lower}, {upper})"
        )));
    }
    let mut sorted: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Err(Error::Empty("no non-missing values to winsorise".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, lower);
    let hi = percentile(&sorted, upper);
    Ok(clip(column, lo, hi))
}

/// Clips to fixed bounds.
pub fn clip(column: &[f64], lower_bound: f64, upper_bound: f64) -> Winsorized {
    let mut clipped_low = 0;
    let mut clipped_high = 0;
    let values = column
        .iter()
        .map(|&v| {
            if v < lower_bound {
                clipped_low += 1;
                lower_bound
            } else if v > upper_bound {
                clipped_high += 1;
                upper_bound
            } else {
                v
            }
        })
        .collect();
    Winsorized {
        values,
        lower_bound,
        upper_bound,
        clipped_low,
        clipped_high,
    }
}
