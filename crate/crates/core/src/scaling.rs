//! Stable-case scaling function `F` and predicted critical profiles.
//!
//! `F` solves `x F' + 2F + F' + (1/2) (F * F)(x) = 0` with
//! `F(0) = alpha (alpha - 2) / 2`, where `(F * F)(x) = ∫_0^x F(y) F(x - y) dy`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, ldexp};
use crate::output::fmt_f64;
use crate::pmf::TiltedPmf;

/// `c(alpha) = alpha (alpha - 2) / 2`.
pub fn c_alpha(alpha: f64) -> f64 {
    alpha * (alpha - 2.0) / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSolution {
    pub alpha: f64,
    pub h: f64,
    pub x_max: f64,
    /// `F(i h)` for `i = 0..=M`.
    pub f_values: Vec<f64>,
    /// `max |F_h - F_{h/2}|` on the grid.
    pub self_convergence: f64,
    /// `non-positive` and/or `non-decreasing` when `F` leaves the expected shape.
    pub flags: Vec<String>,
}

impl ScalingSolution {
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Linear interpolation of `F`; `None` beyond `x_max`.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if !(0.0..=self.x_max + 1e-12).contains(&x) {
            return None;
        }
        let t = x / self.h;
        let i = (t.floor() as usize).min(self.f_values.len() - 1);
        if i + 1 >= self.f_values.len() {
            return Some(self.f_values[i]);
        }
        let w = t - i as f64;
        Some((1.0 - w) * self.f_values[i] + w * self.f_values[i + 1])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["x", "F"])?;
        for (i, f) in self.f_values.iter().enumerate() {
            wr.write_record([fmt_f64(self.x(i)), fmt_f64(*f)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_args(alpha: f64, x_max: f64, h: f64) -> Result<usize> {
    if !(alpha > 2.0 && alpha <= 4.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (2, 4]")));
    }
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::Config(format!("h = {h} outside (0, 1e-2]")));
    }
    if !(x_max > 0.0 && x_max <= 50.0) {
        return Err(Error::Config(format!("x_max = {x_max} outside (0, 50]")));
    }
    Ok((x_max / h).round() as usize)
}

/// Second-order marching solution on the grid `i h`, `i = 0..=round(x_max / h)`.
///
/// The convolution at step `i` is the trapezoid sum
/// `h [F_0 F_i + sum_{j=1}^{i-1} F_j F_{i-j}]`, linear in the new value `F_i`,
/// so the trapezoidal corrector `F_i = F_{i-1} + h/2 (G_{i-1} + G_i)` is solved
/// in closed form rather than iterated from an Euler predictor.
pub fn solve_f_raw(alpha: f64, x_max: f64, h: f64) -> Result<Vec<f64>> {
    let m = check_args(alpha, x_max, h)?;
    let mut f = vec![0.0; m + 1];
    f[0] = c_alpha(alpha);
    let f0 = f[0];
    let rhs = |fi: f64, s: f64, x: f64| -(2.0 * fi + 0.5 * h * (f0 * fi + s)) / (1.0 + x);
    // the convolution vanishes at x = 0
    let mut g_prev = -2.0 * f0;
    for i in 1..=m {
        let x = i as f64 * h;
        let s: f64 = (1..i).map(|j| f[j] * f[i - j]).sum();
        // F_i (1 + h/2 (2 + h F_0 / 2) / (1 + x)) = F_{i-1} + h/2 G_{i-1} - h^2/4 S / (1 + x)
        let a = 1.0 + 0.5 * h * (2.0 + 0.5 * h * f0) / (1.0 + x);
        let b = f[i - 1] + 0.5 * h * g_prev - 0.25 * h * h * s / (1.0 + x);
        let fi = b / a;
        if !fi.is_finite() {
            return Err(Error::NonFinite { x });
        }
        f[i] = fi;
        g_prev = rhs(fi, s, x);
    }
    Ok(f)
}

/// Solution on the `h` grid, Richardson-extrapolated from steps `h` and `h/2`.
pub fn solve_f(alpha: f64, x_max: f64, h: f64) -> Result<ScalingSolution> {
    let coarse = solve_f_raw(alpha, x_max, h)?;
    let fine = solve_f_raw(alpha, x_max, h / 2.0)?;
    let mut self_convergence: f64 = 0.0;
    let mut f_values = Vec::with_capacity(coarse.len());
    for (i, c) in coarse.iter().enumerate() {
        let fh2 = fine[2 * i];
        self_convergence = self_convergence.max((c - fh2).abs());
        f_values.push(if i == 0 { *c } else { (4.0 * fh2 - c) / 3.0 });
    }
    let mut flags = Vec::new();
    if f_values.iter().any(|&v| v <= 0.0) {
        flags.push("non-positive".to_string());
    }
    if f_values.windows(2).any(|w| w[1] >= w[0]) {
        flags.push("non-decreasing".to_string());
    }
    Ok(ScalingSolution {
        alpha,
        h,
        x_max: (coarse.len() - 1) as f64 * h,
        f_values,
        self_convergence,
        flags,
    })
}

/// Fourth-order derivative of grid data (five-point stencils).
fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    const AT0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const AT1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let n = f.len();
    assert!(n >= 5, "need at least five grid points");
    let dot = |c: &[f64; 5], pts: &mut dyn Iterator<Item = f64>| c.iter().zip(pts).map(|(a, b)| a * b).sum::<f64>();
    (0..n)
        .map(|i| {
            let d = match i {
                0 => dot(&AT0, &mut f[..5].iter().copied()),
                1 => dot(&AT1, &mut f[..5].iter().copied()),
                _ if i == n - 1 => -dot(&AT0, &mut f[n - 5..].iter().rev().copied()),
                _ if i == n - 2 => -dot(&AT1, &mut f[n - 5..].iter().rev().copied()),
                _ => f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2],
            };
            d / (12.0 * h)
        })
        .collect()
}

/// `∫_0^{x_i} F(y) F(x_i - y) dy` by Simpson's rule, closing odd counts
/// with the three-eighths rule.
fn self_convolution_simpson(f: &[f64], h: f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            let g = |j: usize| f[j] * f[i - j];
            match i {
                0 => 0.0,
                1 => 0.5 * h * (g(0) + g(1)),
                _ => {
                    let (simpson_end, tail) = if i % 2 == 0 { (i, false) } else { (i - 3, true) };
                    let mut s = 0.0;
                    if simpson_end > 0 {
                        s += g(0) + g(simpson_end);
                        for j in 1..simpson_end {
                            s += if j % 2 == 1 { 4.0 } else { 2.0 } * g(j);
                        }
                        s *= h / 3.0;
                    }
                    if tail {
                        let k = simpson_end;
                        s += 3.0 * h / 8.0 * (g(k) + 3.0 * g(k + 1) + 3.0 * g(k + 2) + g(k + 3));
                    }
                    s
                }
            }
        })
        .collect()
}

/// `x F' + 2F + F' + (F * F) / 2` on the grid, with independent quadrature.
pub fn residual(sol: &ScalingSolution) -> Vec<f64> {
    let d = derivative(&sol.f_values, sol.h);
    let conv = self_convolution_simpson(&sol.f_values, sol.h);
    sol.f_values
        .iter()
        .enumerate()
        .map(|(i, &f)| (1.0 + sol.x(i)) * d[i] + 2.0 * f + 0.5 * conv[i])
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileNormalization {
    /// `P(X_n = k) = (4 / n^2) 2^-k F(k / n)`.
    #[serde(rename = "paper-4")]
    FourOverNSquared,
    /// Same shape, scaled so that `sum_{k >= 1} P(X_n = k) = c(alpha) / n^2`.
    SurvivalMatched,
}

/// Predicted law at generation `n`, stored as `2^k P(X_n = k)` so that
/// deep entries do not underflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedProfile {
    pub n: usize,
    pub normalization: ProfileNormalization,
    /// Entry `k` is `2^k P(X_n = k)` for `k = 0..=floor(x_max n)`.
    pub tilted: Vec<f64>,
}

impl PredictedProfile {
    pub fn probability(&self, k: usize) -> f64 {
        self.tilted.get(k).map_or(0.0, |&q| ldexp(q, -(k as i64)))
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.tilted.len()).map(|k| self.probability(k)).collect()
    }
}

/// Predicted `P(X_n = k)` for `k = 0..=floor(x_max n)`.
pub fn predicted_profile(sol: &ScalingSolution, n: usize, normalization: ProfileNormalization) -> PredictedProfile {
    let nf = n as f64;
    let k_top = (sol.x_max * nf).floor() as usize;
    let raw: Vec<f64> = (0..=k_top)
        .map(|k| 4.0 / (nf * nf) * sol.eval(k as f64 / nf).unwrap_or(0.0))
        .collect();
    let tilted = match normalization {
        ProfileNormalization::FourOverNSquared => raw,
        ProfileNormalization::SurvivalMatched => {
            let s = csum(raw.iter().enumerate().skip(1).map(|(k, &q)| ldexp(q, -(k as i64))));
            let scale = c_alpha(sol.alpha) / (nf * nf) / s;
            raw.iter().map(|v| v * scale).collect()
        }
    };
    PredictedProfile {
        n,
        normalization,
        tilted,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub k: usize,
    pub exact: f64,
    pub predicted: f64,
    /// Ratio of exact to predicted.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub n: usize,
    /// `max_k n^2 2^k |P(X_n = k) - prediction_k|` over `1 <= k <= 5n`.
    pub sup_norm: f64,
    /// `(1/2) sum_k |P(X_n = k) - prediction_k|` over `1 <= k <= 5n`.
    pub total_variation: f64,
    pub table: Vec<ProfileRow>,
}

/// Distances between the law `exact` at generation `prediction.n` and the prediction.
pub fn compare_profile(exact: &TiltedPmf, prediction: &PredictedProfile) -> ProfileComparison {
    let n = prediction.n;
    let nf = n as f64;
    let k_top = (5 * n).min(prediction.tilted.len().saturating_sub(1));
    let mut sup: f64 = 0.0;
    let mut tv = Vec::with_capacity(k_top);
    let mut table = Vec::with_capacity(k_top);
    for (k, &pred_tilted) in prediction.tilted.iter().enumerate().take(k_top + 1).skip(1) {
        let q = exact.weights().get(k).copied().unwrap_or(0.0);
        let p = exact.probability(k);
        let pred = prediction.probability(k);
        sup = sup.max(nf * nf * (q - pred_tilted).abs());
        tv.push((p - pred).abs());
        table.push(ProfileRow {
            k,
            exact: p,
            predicted: pred,
            ratio: if pred_tilted > 0.0 { q / pred_tilted } else { f64::NAN },
        });
    }
    ProfileComparison {
        n,
        sup_norm: sup,
        total_variation: 0.5 * csum(tv),
        table,
    }
}
