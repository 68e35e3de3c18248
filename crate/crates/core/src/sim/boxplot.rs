use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tukey box-plot statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Smallest value not below `q25 − 1.5·IQR`, capped at `q25`.
    pub whisker_low: f64,
    /// Largest value not above `q75 + 1.5·IQR`, floored at `q75`.
    pub whisker_high: f64,
    /// Values outside the whiskers, in ascending order.
    pub outliers: Vec<f64>,
}

impl BoxSummary {
    pub fn is_outlier(&self, value: f64) -> bool {
        self.outliers.contains(&value)
    }
}

/// Quantile of sorted data with linear interpolation between order statistics
/// (position `(N−1)·q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box summary with the 1.5·IQR whisker rule. Values must be finite.
pub fn box_summary(values: &[f64]) -> Result<BoxSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let q25 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);

    let inside = || sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    // An interpolated quartile can sit beyond every in-fence point; the
    // whisker then collapses onto the box edge.
    let whisker_low = inside().next().map_or(q25, |v| v.min(q25));
    let whisker_high = inside().next_back().map_or(q75, |v| v.max(q75));
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lo_fence || *v > hi_fence)
        .collect();

    Ok(BoxSummary {
        median,
        q25,
        q75,
        whisker_low,
        whisker_high,
        outliers,
    })
}
