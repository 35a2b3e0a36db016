//! Least-squares exponent fits on transformed coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `ln y` against `ln x`.
    LogLog,
    /// `ln ln(1/y)` against `ln x`; needs `0 < y < 1`.
    LogLogLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
    /// Smallest and largest `x` used.
    pub window: (f64, f64),
}

/// Ordinary least squares of `y` on `x` after the model's transform.
pub fn exponent_fit(points: &[(f64, f64)], model: FitModel) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    let mut tx = Vec::with_capacity(points.len());
    let mut ty = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Fit(format!("non-positive point ({x}, {y})")));
        }
        tx.push(x.ln());
        ty.push(match model {
            FitModel::LogLog => y.ln(),
            FitModel::LogLogLog => {
                if y >= 1.0 {
                    return Err(Error::Fit(format!("ln ln(1/y) undefined at y = {y}")));
                }
                (1.0 / y).ln().ln()
            }
        });
    }
    let (slope, intercept, stderr) = ols(&tx, &ty);
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        slope,
        intercept,
        stderr,
        points: points.len(),
        window: (lo, hi),
    })
}

/// Returns `(slope, intercept, slope stderr)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if x.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, intercept, stderr)
}
