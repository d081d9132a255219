use serde::Serialize;

use crate::error::{usage, Result};
use crate::scalar::Scalar;

/// Whisker reach in multiples of the interquartile range.
pub const WHISKER_IQR: f64 = 1.5;

/// Boxplot summary of an offset sample, all values in frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Smallest sample not below `q1 − 1.5·IQR`.
    pub whisker_low: f64,
    /// Largest sample not above `q3 + 1.5·IQR`.
    pub whisker_high: f64,
    /// Samples outside the whiskers.
    pub outlier_count: usize,
}

/// Quantile of ascending `sorted` by linear interpolation at rank `p·(n−1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn offset_boxplot<S: Scalar>(samples: &[S]) -> Result<OffsetStats> {
    if samples.is_empty() {
        return Err(usage("boxplot of an empty sample"));
    }
    let mut sorted: Vec<f64> = samples.iter().map(|v| v.into_f64()).collect();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(usage("offset sample contains NaN"));
    }
    sorted.sort_by(f64::total_cmp);

    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr);

    let first_in = sorted.partition_point(|&v| v < lo_fence);
    let past_in = sorted.partition_point(|&v| v <= hi_fence);
    Ok(OffsetStats {
        n: sorted.len(),
        q1,
        median,
        q3,
        whisker_low: sorted[first_in],
        whisker_high: sorted[past_in - 1],
        outlier_count: first_in + (sorted.len() - past_in),
    })
}
