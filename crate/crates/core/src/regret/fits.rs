use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::math::fit_line;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub slope_se: f64,
    /// `slope - 2 se`.
    pub lower: f64,
    /// `slope + 2 se`.
    pub upper: f64,
    pub points: usize,
}

/// Least-squares slope of `ln R_t` on `ln t` over the last `window` entries
/// of a cumulative series (`t` is 1-based). Non-positive entries are
/// dropped.
pub fn exponent_fit(series: &[f64], window: usize) -> Result<ExponentFit> {
    let start = series.len().saturating_sub(window.max(1));
    let (lx, ly): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, r)| **r > 0.0 && r.is_finite())
        .map(|(i, r)| (Float::ln((i + 1) as f64), Float::ln(*r)))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::InsufficientData {
            requested: 3,
            available: lx.len(),
        });
    }
    let fit = fit_line(&lx, &ly)?;
    Ok(ExponentFit {
        slope: fit.slope,
        slope_se: fit.slope_se,
        lower: fit.slope - 2.0 * fit.slope_se,
        upper: fit.slope + 2.0 * fit.slope_se,
        points: fit.points,
    })
}
