//! Critical point location and free-energy brackets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::quadratic;
use crate::error::{Error, Result};
use crate::law::{pmf_from_law, InitialLaw};
use crate::numeric::{bisect, csum, CompensatedSum};
use crate::output::fmt_f64;
use crate::pmf::TiltedPmf;

/// Result of [`find_pc`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub p_c: f64,
    /// Set when `delta < 0` on `[0, 1)`; `p_c` is then 1.
    pub boundary: bool,
    /// `delta` at `p_c`.
    pub delta: f64,
}

/// Mixture weight at which `delta` changes sign, by bisection on `[0, 1]`.
///
/// `k_cap` is the support cap used to materialize infinite-tail families.
pub fn find_pc(family: &InitialLaw, k_cap: usize) -> Result<CriticalPoint> {
    if let InitialLaw::HeavyTailBeta { .. } = family {
        return Err(Error::Unsupported(
            "p_c = 0 for heavy-tail-beta: <X 2^X> is infinite, so delta is infinite for every p > 0"
                .into(),
        ));
    }
    let delta_at = |p: f64| -> f64 {
        pmf_from_law(&family.with_p(p), k_cap, true)
            .map(|pmf| pmf.delta())
            .unwrap_or(f64::NAN)
    };
    let d1 = delta_at(1.0);
    if d1.is_nan() {
        pmf_from_law(&family.with_p(1.0), k_cap, true)?;
    }
    if d1 <= 0.0 {
        return Ok(CriticalPoint {
            p_c: 1.0,
            boundary: true,
            delta: d1,
        });
    }
    let (lo, hi) = bisect(delta_at, 0.0, 1.0, 0.0, 200);
    // hi is the first grid point with delta >= 0; pick the smaller |delta|
    let (dl, dh) = (delta_at(lo), delta_at(hi));
    let (p_c, delta) = if dl.abs() < dh.abs() { (lo, dl) } else { (hi, dh) };
    Ok(CriticalPoint {
        p_c,
        boundary: false,
        delta,
    })
}

/// Law of a non-negative integer variable in plain probabilities: an atom
/// `p0` at zero and a dense window `body` on `offset..offset + body.len()`.
///
/// The window lets point masses far from zero stay single atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainChain {
    pub p0: f64,
    pub offset: u64,
    pub body: Vec<f64>,
    pub lost_mass: f64,
}

impl PlainChain {
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidPmf("plain probabilities must be finite and >= 0".into()));
        }
        let body = p.get(1..).unwrap_or(&[]).to_vec();
        let mut chain = Self {
            p0: 0.0,
            offset: 1,
            body,
            lost_mass: 0.0,
        };
        chain.trim();
        chain.p0 = (1.0 - chain.survival()).max(0.0);
        Ok(chain)
    }

    pub fn from_pmf(pmf: &TiltedPmf) -> Result<Self> {
        Self::from_probabilities(&pmf.probabilities())
    }

    fn trim(&mut self) {
        while self.body.last() == Some(&0.0) {
            self.body.pop();
        }
        let lead = self.body.iter().take_while(|x| **x == 0.0).count();
        if lead == self.body.len() {
            self.body.clear();
            self.offset = 1;
        } else if lead > 0 {
            self.body.drain(..lead);
            self.offset += lead as u64;
        }
    }

    pub fn survival(&self) -> f64 {
        csum(self.body.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        csum(
            self.body
                .iter()
                .enumerate()
                .map(|(i, &x)| (self.offset + i as u64) as f64 * x),
        )
    }

    /// One generation of `max(X + X' - 1, 0)`, keeping at most `max_window`
    /// body entries. Mass above the window moves to zero.
    pub fn step(&self, max_window: usize) -> PlainChain {
        self.step_with_loss(max_window).0
    }

    /// As [`PlainChain::step`], also returning the mean removed by the window.
    pub fn step_with_loss(&self, max_window: usize) -> (PlainChain, f64) {
        if self.body.is_empty() {
            return (self.clone(), 0.0);
        }
        let o = self.offset;
        let len = self.body.len() as u64;
        // components of X + X': 2 p0 body at o.., body*body at 2o..
        let lo = if self.p0 > 0.0 { o } else { 2 * o };
        let hi = 2 * o + 2 * (len - 1);
        let span = (hi - lo + 1).min(max_window as u64 + 1) as usize;
        let mut sum = vec![0.0; span];
        let mut kept = CompensatedSum::new();
        let mut lost_mean = CompensatedSum::new();
        let mut place = |value: u64, x: f64, sum: &mut [f64]| {
            let idx = value - lo;
            if idx < span as u64 {
                sum[idx as usize] += x;
            } else {
                lost_mean.add((value - 1) as f64 * x);
            }
        };
        if self.p0 > 0.0 {
            for (i, &x) in self.body.iter().enumerate() {
                place(o + i as u64, 2.0 * self.p0 * x, &mut sum);
            }
        }
        let sq = quadratic(&self.body, &self.body);
        for (j, &x) in sq.iter().enumerate() {
            place(2 * o + j as u64, x, &mut sum);
        }
        for &x in sum.iter() {
            kept.add(x);
        }
        // total positive mass before truncation: 1 - p0^2
        let s = self.survival();
        let positive_total = s * (2.0 - s);
        let dropped = (positive_total - kept.value()).max(0.0);
        // subtract one; value 1 folds into zero
        let (offset, body) = if lo >= 2 {
            (lo - 1, sum)
        } else {
            (1, sum[1..].to_vec())
        };
        let mut next = PlainChain {
            p0: 0.0,
            offset,
            body,
            lost_mass: self.lost_mass + dropped,
        };
        next.trim();
        next.p0 = (1.0 - next.survival()).max(0.0);
        (next, lost_mean.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeEnergyOptions {
    pub n_max: usize,
    /// Stop once `(upper - lower) / lower` falls to this value.
    pub rel_tol: f64,
    /// Largest number of stored positive values.
    pub max_window: usize,
}

impl Default for FreeEnergyOptions {
    fn default() -> Self {
        Self {
            n_max: 200,
            rel_tol: 1e-3,
            max_window: 4096,
        }
    }
}

/// Certified bracket `lower <= F <= upper` for `F = lim <X_n> / 2^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Generation at which each bound was attained.
    pub n_lower: usize,
    pub n_upper: usize,
    /// Generations evolved.
    pub generations: usize,
    /// Mass moved to zero by the window.
    pub lost_mass: f64,
}

impl FreeEnergyEstimate {
    pub fn relative_width(&self) -> f64 {
        if self.lower > 0.0 {
            (self.upper - self.lower) / self.lower
        } else {
            f64::INFINITY
        }
    }
}

/// Free-energy bracket from the initial law `pmf0`.
///
/// The chain `Y_n` keeps a bounded window and moves the overflow to zero, so
/// `Y_n` is stochastically below `X_n`. Since `(<X_n> - 1) / 2^n` increases,
/// `(<Y_n> - 1) / 2^n` bounds `F` from below. The exact identity
/// `<X_{n+1}> = 2 <X_n> - 1 + P(X_n = 0)^2`, run with `P(Y_n = 0) >= P(X_n = 0)`,
/// gives `U_n >= <X_n>`, and `U_n / 2^n` bounds `F` from above. `U_n` is
/// tracked as `<Y_n>` plus the doubled means dropped by the window, which
/// avoids cancellation when `F` is tiny.
pub fn free_energy(pmf0: &TiltedPmf, opts: &FreeEnergyOptions) -> Result<FreeEnergyEstimate> {
    free_energy_plain(&pmf0.probabilities(), opts)
}

/// As [`free_energy`], from plain probabilities.
pub fn free_energy_plain(p: &[f64], opts: &FreeEnergyOptions) -> Result<FreeEnergyEstimate> {
    if opts.n_max < 1 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let mut chain = PlainChain::from_probabilities(p)?;
    // U_n - <Y_n>: doubles each generation and grows by the mean the window drops
    let mut gap = 0.0f64;
    let mut scale = 1.0f64;
    let mut est = FreeEnergyEstimate {
        lower: 0.0,
        upper: chain.mean(),
        n_lower: 0,
        n_upper: 0,
        generations: 0,
        lost_mass: 0.0,
    };
    let lower0 = chain.mean() - 1.0;
    if lower0 > 0.0 {
        est.lower = lower0;
    }
    for n in 1..=opts.n_max {
        let (next, lost_mean) = chain.step_with_loss(opts.max_window);
        chain = next;
        gap = 2.0 * gap + lost_mean;
        scale *= 0.5;
        let mean = chain.mean();
        let upper = (mean + gap) * scale;
        if upper <= est.upper {
            est.upper = upper;
            est.n_upper = n;
        }
        let lower = (mean - 1.0) * scale;
        if lower > est.lower {
            est.lower = lower;
            est.n_lower = n;
        }
        est.generations = n;
        est.lost_mass = chain.lost_mass;
        if est.lower > 0.0 && est.relative_width() <= opts.rel_tol {
            break;
        }
        if chain.body.is_empty() {
            break;
        }
    }
    Ok(est)
}

/// Row of a free-energy scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub p: f64,
    pub delta: f64,
    pub estimate: FreeEnergyEstimate,
    /// Empty when the bracket is tight; otherwise `wide` and/or `zero-lower`.
    pub flags: Vec<String>,
}

/// Free-energy brackets over a grid of mixture weights, in parallel.
///
/// Rows whose bracket is wider than `flag_width` (relative) are flagged.
pub fn scan_free_energy(
    family: &InitialLaw,
    p_values: &[f64],
    k_cap: usize,
    opts: &FreeEnergyOptions,
    flag_width: f64,
) -> Result<Vec<ScanRow>> {
    p_values
        .par_iter()
        .map(|&p| {
            let law = family.with_p(p);
            let probs = law.probabilities(k_cap)?;
            let delta = match law {
                InitialLaw::HeavyTailBeta { .. } => f64::INFINITY,
                _ => pmf_from_law(&law, k_cap, true)?.delta(),
            };
            let estimate = free_energy_plain(&probs, opts)?;
            let mut flags = Vec::new();
            if estimate.lower <= 0.0 {
                flags.push("zero-lower".to_string());
            }
            if estimate.relative_width() > flag_width {
                flags.push("wide".to_string());
            }
            Ok(ScanRow {
                p,
                delta,
                estimate,
                flags,
            })
        })
        .collect()
}

pub const SCAN_HEADER: [&str; 7] = ["p", "delta", "fe_lower", "fe_upper", "n_lower", "n_upper", "flags"];

pub fn scan_record(r: &ScanRow) -> Vec<String> {
    vec![
        fmt_f64(r.p),
        fmt_f64(r.delta),
        fmt_f64(r.estimate.lower),
        fmt_f64(r.estimate.upper),
        r.estimate.n_lower.to_string(),
        r.estimate.n_upper.to_string(),
        r.flags.join(";"),
    ]
}
