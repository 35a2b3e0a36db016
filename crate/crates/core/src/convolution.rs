//! Discrete convolution of non-negative weight arrays.
//!
//! Tilting commutes with convolution (`z^k` factorises over `i + j = k`), so the
//! same kernels serve plain and tilted weights. The atom at zero is peeled off
//! before the product of the tails is formed: for laws near criticality almost
//! all mass sits at zero, and keeping it out of the fft keeps the round-off
//! relative to the (small) positive part rather than to the whole law.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which kernel forms the product of the tails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionMethod {
    /// Direct O(K^2) summation; every entry is a sum of non-negative products.
    Quadratic,
    /// Zero-padded complex fft, negative round-off clamped to zero.
    Fft,
    /// Quadratic up to `auto_threshold`, fft above.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Convolver {
    pub method: ConvolutionMethod,
    /// Operand length above which `Auto` switches to the fft.
    pub auto_threshold: usize,
    /// Largest padded transform length the fft path accepts.
    pub fft_max_len: usize,
}

impl Default for Convolver {
    fn default() -> Self {
        Self {
            method: ConvolutionMethod::Auto,
            auto_threshold: 4096,
            fft_max_len: 1 << 24,
        }
    }
}

impl Convolver {
    pub fn with_method(method: ConvolutionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    fn use_fft(&self, tail_a: usize, tail_b: usize) -> bool {
        match self.method {
            ConvolutionMethod::Quadratic => false,
            ConvolutionMethod::Fft => true,
            ConvolutionMethod::Auto => tail_a.max(tail_b) > self.auto_threshold,
        }
    }

    /// Full linear convolution, length `a.len() + b.len() - 1`.
    pub fn convolve(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidPmf("empty operand".into()));
        }
        let len = a.len() + b.len() - 1;
        let mut out = vec![0.0; len];
        let (a0, b0) = (a[0], b[0]);
        out[0] = a0 * b0;
        if b0 != 0.0 {
            for (o, &x) in out[1..].iter_mut().zip(&a[1..]) {
                *o += b0 * x;
            }
        }
        if a0 != 0.0 {
            for (o, &y) in out[1..].iter_mut().zip(&b[1..]) {
                *o += a0 * y;
            }
        }
        let (ta, tb) = (&a[1..], &b[1..]);
        if ta.is_empty() || tb.is_empty() {
            return Ok(out);
        }
        let same = std::ptr::eq(a, b);
        let tail = if self.use_fft(ta.len(), tb.len()) {
            fft_product(ta, tb, same, self.fft_max_len)?
        } else if same {
            quadratic_self(ta)
        } else {
            quadratic(ta, tb)
        };
        for (o, t) in out[2..].iter_mut().zip(tail) {
            *o += t;
        }
        Ok(out)
    }

    /// `a` convolved with itself `m - 1` times (the law of an `m`-fold sum).
    pub fn self_power(&self, a: &[f64], m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::InvalidPmf("self_power needs m >= 1".into()));
        }
        let mut acc = a.to_vec();
        if m >= 2 {
            acc = self.convolve(a, a)?;
        }
        for _ in 2..m {
            acc = self.convolve(&acc, a)?;
        }
        Ok(acc)
    }
}

/// Quadratic convolution skipping zero rows.
pub fn quadratic(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn quadratic_self(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; 2 * n - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        out[2 * i] += x * x;
        let twice = 2.0 * x;
        for (o, &y) in out[2 * i + 1..i + n].iter_mut().zip(&a[i + 1..]) {
            *o += twice * y;
        }
    }
    out
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_product(a: &[f64], b: &[f64], same: bool, max_len: usize) -> Result<Vec<f64>> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    if size > max_len {
        return Err(Error::FftTooLarge {
            requested: size,
            limit: max_len,
        });
    }
    let (forward, inverse) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    let load = |x: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (c, &v) in buf.iter_mut().zip(x) {
            c.re = v;
        }
        buf
    };
    let mut fa = load(a);
    forward.process(&mut fa);
    if same {
        for c in fa.iter_mut() {
            *c = *c * *c;
        }
    } else {
        let mut fb = load(b);
        forward.process(&mut fb);
        for (c, d) in fa.iter_mut().zip(&fb) {
            *c *= d;
        }
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    Ok(fa[..len].iter().map(|c| (c.re * scale).max(0.0)).collect())
}
