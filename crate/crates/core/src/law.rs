//! Parametric families of initial laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, ldexp};
use crate::pmf::TiltedPmf;

/// Default support cap for families with an infinite tail.
pub const DEFAULT_K_CAP: usize = 200;

/// Initial law `X_0`. Every family is a mixture `p * P* + (1 - p) * delta_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialLaw {
    /// `P* = delta_a`.
    DiracMixture { a: usize, p: f64 },
    /// `P*(k) ∝ k^-alpha 2^-k` for `k >= k_min`.
    HeavyTailAlpha {
        alpha: f64,
        #[serde(default = "default_k_min")]
        k_min: usize,
        #[serde(default = "one")]
        p: f64,
    },
    /// `P*(k) ∝ t_k - t_{k+1}` with `t_k = k^-beta 2^-k`, so that
    /// `P*(X >= k)` is exactly proportional to `t_k`.
    HeavyTailBeta { beta: f64, p: f64 },
}

fn default_k_min() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

impl InitialLaw {
    pub fn p(&self) -> f64 {
        match *self {
            InitialLaw::DiracMixture { p, .. }
            | InitialLaw::HeavyTailAlpha { p, .. }
            | InitialLaw::HeavyTailBeta { p, .. } => p,
        }
    }

    /// Same family with mixture weight `p`.
    pub fn with_p(mut self, new_p: f64) -> Self {
        match &mut self {
            InitialLaw::DiracMixture { p, .. }
            | InitialLaw::HeavyTailAlpha { p, .. }
            | InitialLaw::HeavyTailBeta { p, .. } => *p = new_p,
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialLaw::DiracMixture { .. } => "dirac-mixture",
            InitialLaw::HeavyTailAlpha { .. } => "heavy-tail-alpha",
            InitialLaw::HeavyTailBeta { .. } => "heavy-tail-beta",
        }
    }

    /// Largest atom of a finite-support family.
    pub fn finite_support(&self) -> Option<usize> {
        match *self {
            InitialLaw::DiracMixture { a, .. } => Some(a),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidLaw(format!("p = {p} outside [0, 1]")));
        }
        match *self {
            InitialLaw::DiracMixture { a, .. } if a < 1 => {
                Err(Error::InvalidLaw("dirac-mixture needs a >= 1".into()))
            }
            InitialLaw::HeavyTailAlpha { alpha, k_min, .. } => {
                if !(alpha > 2.0 && alpha <= 4.0) {
                    Err(Error::InvalidLaw(format!("alpha = {alpha} outside (2, 4]")))
                } else if k_min < 1 {
                    Err(Error::InvalidLaw("heavy-tail-alpha needs k_min >= 1".into()))
                } else {
                    Ok(())
                }
            }
            InitialLaw::HeavyTailBeta { beta, .. } => {
                if !(beta < 2.0) || !beta.is_finite() {
                    Err(Error::InvalidLaw(format!("beta = {beta} is not below 2")))
                } else if beta < -1.0 {
                    // t_1 - t_2 = (1 - 2^beta / 2) / 2 turns negative
                    Err(Error::InvalidLaw(format!(
                        "beta = {beta} gives negative tail differences"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Tilted weights of `P*` on `0..=k_cap`, summing to one in plain space.
    fn star_tilted(&self, k_cap: usize) -> Result<Vec<f64>> {
        match *self {
            InitialLaw::DiracMixture { a, .. } => {
                if k_cap < a {
                    return Err(Error::InvalidLaw(format!("k_cap = {k_cap} below atom {a}")));
                }
                let mut q = vec![0.0; a + 1];
                q[a] = ldexp(1.0, a as i64);
                Ok(q)
            }
            InitialLaw::HeavyTailAlpha { alpha, k_min, .. } => {
                if k_cap < k_min {
                    return Err(Error::InvalidLaw(format!("k_cap = {k_cap} below k_min = {k_min}")));
                }
                let mut q = vec![0.0; k_cap + 1];
                for (k, w) in q.iter_mut().enumerate().skip(k_min) {
                    *w = (k as f64).powf(-alpha);
                }
                let mass = csum(q.iter().enumerate().map(|(k, &w)| ldexp(w, -(k as i64))));
                q.iter_mut().for_each(|w| *w /= mass);
                Ok(q)
            }
            InitialLaw::HeavyTailBeta { beta, .. } => {
                if k_cap < 1 {
                    return Err(Error::InvalidLaw("k_cap must be >= 1".into()));
                }
                // 2^k (t_k - t_{k+1}) = k^-beta - (k+1)^-beta / 2
                let mut q = vec![0.0; k_cap + 1];
                for (k, w) in q.iter_mut().enumerate().skip(1) {
                    let k = k as f64;
                    *w = k.powf(-beta) - 0.5 * (k + 1.0).powf(-beta);
                    if *w < 0.0 {
                        return Err(Error::InvalidLaw(format!(
                            "negative tail difference at k = {k} (beta = {beta})"
                        )));
                    }
                }
                let mass = csum(q.iter().enumerate().map(|(k, &w)| ldexp(w, -(k as i64))));
                q.iter_mut().for_each(|w| *w /= mass);
                Ok(q)
            }
        }
    }

    /// Plain probabilities `P(X_0 = k)` on `0..=k_cap` (or the finite support).
    pub fn probabilities(&self, k_cap: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let p = self.p();
        let star = self.star_tilted(k_cap)?;
        let mut out: Vec<f64> = star
            .iter()
            .enumerate()
            .map(|(k, &w)| p * ldexp(w, -(k as i64)))
            .collect();
        out[0] = 0.0;
        let positive = csum(out.iter().copied());
        out[0] = 1.0 - positive;
        Ok(out)
    }
}

/// Materializes `law` on `0..=k_cap` as tilted weights.
///
/// Laws with `P(X_0 >= 2) = 0` are rejected unless `allow_degenerate` is set.
pub fn pmf_from_law(law: &InitialLaw, k_cap: usize, allow_degenerate: bool) -> Result<TiltedPmf> {
    law.validate()?;
    let p = law.p();
    let mut q: Vec<f64> = law.star_tilted(k_cap)?.iter().map(|w| p * w).collect();
    q[0] = 0.0;
    let positive = csum(q.iter().enumerate().map(|(k, &w)| ldexp(w, -(k as i64))));
    q[0] = (1.0 - positive).max(0.0);
    let pmf = TiltedPmf::from_tilted(q)?;
    if !allow_degenerate {
        let ge2 = csum((2..=pmf.k_max()).map(|k| pmf.probability(k)));
        if ge2 == 0.0 {
            return Err(Error::DegenerateLaw(format!("{} with p = {p}", law.name())));
        }
    }
    Ok(pmf)
}
