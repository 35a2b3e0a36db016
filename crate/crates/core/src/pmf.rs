//! Integer-supported laws in tilted form and the one-step recursion.
//!
//! A [`TiltedPmf`] stores `q_k = 2^k P(X = k)`. Every critical observable
//! carries a `2^X` weight, and at criticality the `q_k` are uniformly of order
//! `n^-2` while the plain `p_k` span hundreds of decades.

use serde::{Deserialize, Serialize};

use crate::convolution::Convolver;
use crate::error::{Error, Result};
use crate::numeric::{csum, ldexp, CompensatedSum};

/// Tolerance of the normalization check applied on construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Law of a non-negative integer random variable, stored as tilted weights.
///
/// The atom at zero absorbs any mass moved there by floor truncation, so the
/// plain probabilities always sum to one. `lost_mass` and `lost_tilted_mass`
/// record how much plain and tilted mass was moved.
#[derive(Clone, Debug, PartialEq)]
pub struct TiltedPmf {
    weights: Vec<f64>,
    lost_mass: f64,
    lost_tilted_mass: f64,
}

/// Wire format: `{"k_max", "q", "lost_mass", "lost_tilted_mass"}`.
#[derive(Serialize, Deserialize)]
struct PmfRecord {
    k_max: usize,
    q: Vec<f64>,
    lost_mass: f64,
    lost_tilted_mass: f64,
}

impl Serialize for TiltedPmf {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PmfRecord {
            k_max: self.k_max(),
            q: self.weights.clone(),
            lost_mass: self.lost_mass,
            lost_tilted_mass: self.lost_tilted_mass,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TiltedPmf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PmfRecord::deserialize(d)?;
        if rec.q.len() != rec.k_max + 1 {
            return Err(serde::de::Error::custom(format!(
                "k_max = {} but q has {} entries",
                rec.k_max,
                rec.q.len()
            )));
        }
        TiltedPmf::new(rec.q, rec.lost_mass, rec.lost_tilted_mass)
            .map_err(serde::de::Error::custom)
    }
}

impl TiltedPmf {
    /// Validates weights and ledgers. Trailing zeros are dropped.
    pub fn new(weights: Vec<f64>, lost_mass: f64, lost_tilted_mass: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPmf("no weights".into()));
        }
        if let Some((k, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidPmf(format!("q[{k}] = {w}")));
        }
        if !(lost_mass >= 0.0 && lost_tilted_mass >= 0.0) {
            return Err(Error::InvalidPmf("negative truncation ledger".into()));
        }
        let pmf = Self::from_parts(weights, lost_mass, lost_tilted_mass);
        let total = pmf.total_mass();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPmf(format!(
                "probabilities sum to {total} (off by {:e})",
                total - 1.0
            )));
        }
        Ok(pmf)
    }

    pub(crate) fn from_parts(mut weights: Vec<f64>, lost_mass: f64, lost_tilted_mass: f64) -> Self {
        while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
            weights.pop();
        }
        Self {
            weights,
            lost_mass,
            lost_tilted_mass,
        }
    }

    /// From tilted weights `q_k`.
    pub fn from_tilted(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, 0.0, 0.0)
    }

    /// From plain probabilities `p_k`.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        let q = p
            .iter()
            .enumerate()
            .map(|(k, &x)| ldexp(x, k as i64))
            .collect();
        Self::new(q, 0.0, 0.0)
    }

    /// Sparse constructor from `(value, probability)` atoms.
    pub fn from_atoms(atoms: &[(usize, f64)]) -> Result<Self> {
        let k_max = atoms.iter().map(|a| a.0).max().unwrap_or(0);
        let mut p = vec![0.0; k_max + 1];
        for &(k, x) in atoms {
            p[k] += x;
        }
        Self::from_probabilities(&p)
    }

    /// Point mass at `k`.
    pub fn dirac(k: usize) -> Self {
        let mut q = vec![0.0; k + 1];
        q[k] = ldexp(1.0, k as i64);
        Self::from_parts(q, 0.0, 0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest stored value; entries beyond are zero.
    pub fn k_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    pub fn lost_tilted_mass(&self) -> f64 {
        self.lost_tilted_mass
    }

    /// `P(X = k)`.
    pub fn probability(&self, k: usize) -> f64 {
        self.weights
            .get(k)
            .map_or(0.0, |&q| ldexp(q, -(k as i64)))
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.weights.len()).map(|k| self.probability(k)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        csum((0..self.weights.len()).map(|k| self.probability(k)))
    }

    /// `P(X > 0)`.
    pub fn survival(&self) -> f64 {
        csum((1..self.weights.len()).map(|k| self.probability(k)))
    }

    /// `<X>`.
    pub fn mean(&self) -> f64 {
        csum((1..self.weights.len()).map(|k| k as f64 * self.probability(k)))
    }

    /// `<2^X>`, the sum of the tilted weights.
    pub fn h2(&self) -> f64 {
        csum(self.weights.iter().copied())
    }

    /// `P(X = k | X > 0)` for `k = 1..=cap` (index 0 holds `k = 1`).
    pub fn conditional_pmf(&self, cap: usize) -> Vec<f64> {
        let s = self.survival();
        (1..=cap)
            .map(|k| {
                if s > 0.0 {
                    self.probability(k) / s
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Generating function `H(z) = <z^X>` for `z >= 0`.
    ///
    /// For `z > 2` the result is only meaningful because the stored support is
    /// finite; a truncated law understates the true value.
    pub fn gen_fn(&self, z: f64) -> f64 {
        assert!(z >= 0.0, "gen_fn needs z >= 0");
        if z == 0.0 {
            return self.weights[0];
        }
        let r = z / 2.0;
        let lr = r.ln();
        csum(
            self.weights
                .iter()
                .enumerate()
                .map(|(k, &q)| if q == 0.0 { 0.0 } else { q * (k as f64 * lr).exp() }),
        )
    }

    /// `<X^q 2^X>`.
    pub fn tilted_moment(&self, q: u32) -> f64 {
        csum(
            self.weights
                .iter()
                .enumerate()
                .map(|(k, &w)| (k as f64).powi(q as i32) * w),
        )
    }

    /// Distance to the critical manifold, `2H'(2) - H(2) = <(X - 1) 2^X>`.
    pub fn delta(&self) -> f64 {
        csum(
            self.weights
                .iter()
                .enumerate()
                .map(|(k, &w)| (k as f64 - 1.0) * w),
        )
    }

    /// [`delta`](Self::delta) with a reliability flag driven by the tilted ledger.
    pub fn delta_checked(&self, max_lost_tilted: f64) -> Delta {
        Delta {
            value: self.delta(),
            reliable: self.lost_tilted_mass <= max_lost_tilted,
        }
    }

    /// Criticality functional of the `m`-parent recursion,
    /// `m(m-1) H'(m) - H(m) = <((m-1)X - 1) m^X>`.
    pub fn delta_m(&self, m: usize) -> f64 {
        let lr = (m as f64 / 2.0).ln();
        csum(self.weights.iter().enumerate().map(|(k, &w)| {
            let k = k as f64;
            ((m as f64 - 1.0) * k - 1.0) * w * (k * lr).exp()
        }))
    }
}

/// Value of Δ together with whether truncation may have distorted it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delta {
    pub value: f64,
    pub reliable: bool,
}

/// How a single step disposes of the support beyond a cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Keep everything; fail if the support would exceed `max_len` entries.
    Exact { max_len: usize },
    /// Move mass beyond `cap` to zero. The cap doubles (up to `max_cap`)
    /// while the tilted mass beyond it exceeds `step_tilted_tol`.
    Floor {
        cap: usize,
        step_tilted_tol: f64,
        max_cap: usize,
    },
}

impl Truncation {
    pub const UNBOUNDED: Truncation = Truncation::Exact { max_len: 1 << 26 };
}

/// Convolution of two laws (the law of `X + X'` for independent operands).
pub fn convolve(a: &TiltedPmf, b: &TiltedPmf, conv: &Convolver) -> Result<TiltedPmf> {
    let w = conv.convolve(&a.weights, &b.weights)?;
    Ok(TiltedPmf::from_parts(
        w,
        a.lost_mass + b.lost_mass,
        a.lost_tilted_mass + b.lost_tilted_mass,
    ))
}

/// One generation of `X' = max(X1 + ... + Xm - 1, 0)`.
///
/// The sums 0 and 1 both land on 0. The atom at zero is then rebuilt from the
/// complement of the positive part: the direct value `c_0 + c_1/2` inherits the
/// instability of `H(1) -> H(1)^2`, which doubles any normalization error
/// every generation.
pub fn evolve_step(
    pmf: &TiltedPmf,
    m: usize,
    trunc: &Truncation,
    conv: &Convolver,
) -> Result<TiltedPmf> {
    if m < 2 {
        return Err(Error::InvalidPmf(format!("need m >= 2 parents, got {m}")));
    }
    let full_len = pmf.weights.len() * m - m;
    if let Truncation::Exact { max_len } = *trunc {
        if full_len.max(1) > max_len {
            return Err(Error::SupportTooLarge {
                requested: full_len,
                limit: max_len,
            });
        }
    }
    let sum = conv.self_power(&pmf.weights, m)?;
    // q'_k = 2^k P(S = k + 1) = c_{k+1} / 2
    let mut next: Vec<f64> = if sum.len() > 1 {
        sum[1..].iter().map(|c| 0.5 * c).collect()
    } else {
        vec![0.0]
    };
    let mut lost_mass = pmf.lost_mass;
    let mut lost_tilted = pmf.lost_tilted_mass;
    if let Truncation::Floor {
        cap,
        step_tilted_tol,
        max_cap,
    } = *trunc
    {
        let mut cap = cap.max(1);
        if next.len() > cap + 1 {
            let tail_tilted = |c: usize| csum(next[c + 1..].iter().copied());
            while next.len() > cap + 1 && cap < max_cap && tail_tilted(cap) > step_tilted_tol {
                cap = (cap * 2).min(max_cap);
            }
            if next.len() > cap + 1 {
                let mut moved = CompensatedSum::new();
                let mut moved_tilted = CompensatedSum::new();
                for (k, &w) in next.iter().enumerate().skip(cap + 1) {
                    moved.add(ldexp(w, -(k as i64)));
                    moved_tilted.add(w);
                }
                lost_mass += moved.value();
                lost_tilted += moved_tilted.value();
                next.truncate(cap + 1);
            }
        }
    }
    next[0] = 0.0;
    let positive = csum(
        next.iter()
            .enumerate()
            .skip(1)
            .map(|(k, &w)| ldexp(w, -(k as i64))),
    );
    next[0] = (1.0 - positive).max(0.0);
    Ok(TiltedPmf::from_parts(next, lost_mass, lost_tilted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolution::ConvolutionMethod;

    fn half_two() -> TiltedPmf {
        TiltedPmf::from_atoms(&[(0, 0.5), (2, 0.5)]).unwrap()
    }

    fn step(p: &TiltedPmf) -> TiltedPmf {
        evolve_step(p, 2, &Truncation::UNBOUNDED, &Convolver::default()).unwrap()
    }

    #[test]
    fn tilted_weights_of_two_point_law() {
        assert_eq!(half_two().weights(), &[0.5, 0.0, 2.0]);
        let d = TiltedPmf::from_atoms(&[(2, 1.0)]).unwrap();
        assert_eq!(d.weights(), &[0.0, 0.0, 4.0]);
    }

    #[test]
    fn rejects_bad_normalization_and_negatives() {
        assert!(TiltedPmf::from_tilted(vec![0.5, 0.5]).is_err());
        assert!(TiltedPmf::from_tilted(vec![1.5, -1.0]).is_err());
        assert!(TiltedPmf::from_tilted(vec![]).is_err());
    }

    #[test]
    fn convolution_examples() {
        let conv = Convolver::default();
        let d2 = TiltedPmf::dirac(2);
        let d4 = convolve(&d2, &d2, &conv).unwrap();
        assert_eq!(d4.k_max(), 4);
        assert_eq!(d4.weights()[4], 16.0);
        let h = half_two();
        let s = convolve(&h, &h, &conv).unwrap();
        assert_eq!(s.probabilities(), vec![0.25, 0.0, 0.5, 0.0, 0.25]);
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(&TiltedPmf::dirac(2)), TiltedPmf::dirac(3));
        assert_eq!(step(&TiltedPmf::dirac(0)), TiltedPmf::dirac(0));
        assert_eq!(step(&half_two()).probabilities(), vec![0.25, 0.5, 0.0, 0.25]);
        let crit = TiltedPmf::from_atoms(&[(0, 0.8), (2, 0.2)]).unwrap();
        let p = step(&crit).probabilities();
        let want = [16.0 / 25.0, 8.0 / 25.0, 0.0, 1.0 / 25.0];
        for (x, y) in p.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn generating_function_and_moments() {
        let h = half_two();
        assert_eq!(h.gen_fn(2.0), 2.5);
        assert_eq!(h.gen_fn(1.0), 1.0);
        assert_eq!(h.gen_fn(0.0), 0.5);
        assert_eq!(TiltedPmf::dirac(0).gen_fn(7.5), 1.0);
        assert_eq!(h.tilted_moment(1), 4.0);
        assert_eq!(h.tilted_moment(0), h.gen_fn(2.0));
        assert_eq!(TiltedPmf::dirac(2).tilted_moment(3), 32.0);
    }

    #[test]
    fn delta_examples() {
        assert_eq!(TiltedPmf::dirac(0).delta(), -1.0);
        assert_eq!(half_two().delta(), 1.5);
        for p in [0.0, 0.1, 0.2, 0.35, 1.0] {
            let law = TiltedPmf::from_atoms(&[(0, 1.0 - p), (2, p)]).unwrap();
            assert!((law.delta() - (5.0 * p - 1.0)).abs() < 1e-15);
        }
        let crit = TiltedPmf::from_atoms(&[(0, 0.8), (2, 0.2)]).unwrap();
        assert!(crit.delta().abs() < 1e-15);
        let evolved = step(&half_two());
        assert_eq!(evolved.tilted_moment(1), 7.0);
        assert_eq!(evolved.h2(), 3.25);
        assert_eq!(evolved.delta(), 3.75);
    }

    #[test]
    fn delta_checked_flags_heavy_truncation() {
        let law = TiltedPmf::new(vec![1.0], 0.5, 1e-3).unwrap();
        assert!(!law.delta_checked(1e-6).reliable);
        assert!(law.delta_checked(1e-2).reliable);
    }

    #[test]
    fn many_parent_step_and_functional() {
        let law = TiltedPmf::from_atoms(&[(0, 0.5), (1, 0.5)]).unwrap();
        let next = evolve_step(&law, 3, &Truncation::UNBOUNDED, &Convolver::default()).unwrap();
        // sums 0..3 with weights 1,3,3,1 over 8 -> (s - 1)^+
        let p = next.probabilities();
        assert_eq!(p, vec![0.5, 0.375, 0.125]);
        // m(m-1)H'(m) - H(m) at m = 2 reduces to delta
        let h = half_two();
        assert!((h.delta_m(2) - h.delta()).abs() < 1e-15);
        // m = 3 on {0: 1/2, 2: 1/2}: 6 * H'(3) - H(3) = 6 * 3 - 5
        assert!((h.delta_m(3) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn floor_truncation_moves_tail_to_zero() {
        let law = TiltedPmf::from_atoms(&[(0, 0.5), (5, 0.5)]).unwrap();
        let trunc = Truncation::Floor {
            cap: 4,
            step_tilted_tol: f64::INFINITY,
            max_cap: 4,
        };
        let next = evolve_step(&law, 2, &trunc, &Convolver::default()).unwrap();
        // sums {0: 1/4, 5: 1/2, 10: 1/4} -> {0: 1/4, 4: 1/2, 9: 1/4}; 9 is cut
        assert_eq!(next.k_max(), 4);
        assert!((next.probability(0) - 0.5).abs() < 1e-15);
        assert!((next.lost_mass() - 0.25).abs() < 1e-15);
        assert!((next.lost_tilted_mass() - 0.25 * 512.0).abs() < 1e-12);
        assert!((next.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_cap_doubles_for_tolerance() {
        let law = TiltedPmf::from_atoms(&[(0, 0.5), (5, 0.5)]).unwrap();
        let trunc = Truncation::Floor {
            cap: 2,
            step_tilted_tol: 1e-14,
            max_cap: 64,
        };
        let next = evolve_step(&law, 2, &trunc, &Convolver::default()).unwrap();
        assert_eq!(next.k_max(), 9);
        assert_eq!(next.lost_mass(), 0.0);
    }

    #[test]
    fn exact_mode_refuses_oversized_support() {
        let law = TiltedPmf::dirac(40);
        let err = evolve_step(&law, 2, &Truncation::Exact { max_len: 64 }, &Convolver::default());
        assert!(matches!(err, Err(Error::SupportTooLarge { .. })));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let law = step(&half_two());
        let s = serde_json::to_string(&law).unwrap();
        assert!(s.starts_with("{\"k_max\":3,\"q\":["));
        let back: TiltedPmf = serde_json::from_str(&s).unwrap();
        assert_eq!(back, law);
        let bad = r#"{"k_max": 3, "q": [1.0], "lost_mass": 0, "lost_tilted_mass": 0}"#;
        assert!(serde_json::from_str::<TiltedPmf>(bad).is_err());
    }

    #[test]
    fn fft_and_quadratic_paths_agree_on_random_law() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut q: Vec<f64> = (0..512).map(|_| rng.random::<f64>()).collect();
        let mass = csum(q.iter().enumerate().map(|(k, &w)| ldexp(w, -(k as i64))));
        q.iter_mut().for_each(|w| *w /= mass);
        let law = TiltedPmf::from_tilted(q).unwrap();
        let quad = Convolver::with_method(ConvolutionMethod::Quadratic);
        let fft = Convolver::with_method(ConvolutionMethod::Fft);
        let a = convolve(&law, &law, &quad).unwrap();
        let b = convolve(&law, &law, &fft).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            if x.abs() > 1e-300 {
                assert!((x - y).abs() <= 1e-10 * x.abs(), "{x} vs {y}");
            }
        }
    }
}
