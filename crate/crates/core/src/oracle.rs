//! Exact rational reference values by exhaustive enumeration.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::pmf::TiltedPmf;

/// Default bound on the number of enumerated leaf configurations.
pub const DEFAULT_BUDGET: f64 = 1e7;

/// Finitely supported law with exact rational probabilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactLaw {
    atoms: BTreeMap<u64, BigRational>,
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl ExactLaw {
    /// From `(value, numerator, denominator)` triples; must sum to one.
    pub fn from_ratios(atoms: &[(u64, i64, i64)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(k, num, den) in atoms {
            if num < 0 || den <= 0 {
                return Err(Error::InvalidPmf(format!("bad ratio {num}/{den} at {k}")));
            }
            *map.entry(k).or_insert_with(BigRational::zero) += rat(num, den);
        }
        Self::from_map(map)
    }

    fn from_map(mut atoms: BTreeMap<u64, BigRational>) -> Result<Self> {
        atoms.retain(|_, p| !p.is_zero());
        let total: BigRational = atoms.values().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidPmf(format!("exact probabilities sum to {total}")));
        }
        Ok(Self { atoms })
    }

    /// `(1 - p) delta_0 + p delta_a` with `p = num / den`.
    pub fn dirac_mixture(a: u64, num: i64, den: i64) -> Result<Self> {
        Self::from_ratios(&[(0, den - num, den), (a, num, den)])
    }

    /// Exact copy of a float law (every double is a dyadic rational).
    pub fn from_pmf(pmf: &TiltedPmf) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, p) in pmf.probabilities().into_iter().enumerate() {
            if p > 0.0 {
                let r = BigRational::from_float(p)
                    .ok_or_else(|| Error::InvalidPmf(format!("non-finite mass at {k}")))?;
                map.insert(k as u64, r);
            }
        }
        Self::from_map(map)
    }

    pub fn atoms(&self) -> &BTreeMap<u64, BigRational> {
        &self.atoms
    }

    pub fn probability(&self, k: u64) -> BigRational {
        self.atoms.get(&k).cloned().unwrap_or_else(BigRational::zero)
    }

    /// `<2^X>`.
    pub fn h2(&self) -> BigRational {
        self.atoms
            .iter()
            .map(|(&k, p)| p * BigRational::from_integer(BigInt::from(2).pow(k as u32)))
            .sum()
    }

    /// Law of `max(X + X' - 1, 0)` by enumeration of all parent pairs.
    pub fn step(&self) -> ExactLaw {
        let mut out: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (&a, pa) in &self.atoms {
            for (&b, pb) in &self.atoms {
                *out.entry((a + b).saturating_sub(1)).or_insert_with(BigRational::zero) += pa * pb;
            }
        }
        ExactLaw { atoms: out }
    }
}

/// Exact tree expectations at depth `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub n: usize,
    pub configurations: u64,
    /// `P(X_n = v)`.
    pub distribution: BTreeMap<u64, BigRational>,
    /// `<(1 + X_n) 2^X_n N_n>`.
    pub biased_total: BigRational,
    /// `k -> <(1 + X_n) 2^X_n N_n^(k)>`.
    pub biased_by_k: BTreeMap<u64, BigRational>,
    /// `l -> <N_n^(0) 1{X_n = l}>`.
    pub n0_by_ell: BTreeMap<u64, BigRational>,
    /// `prod_{i < n} <2^X_i>` from the exact pair recursion.
    pub h2_product: BigRational,
    /// Right side of the biased identity: `(k + 1) 2^k P(X_0 = k) * h2_product`.
    pub rhs_by_k: BTreeMap<u64, BigRational>,
    pub rhs_total: BigRational,
}

/// Enumerates all `support^(2^n)` leaf configurations of `law`.
pub fn brute_force_expectations(law: &ExactLaw, n: usize, budget: f64) -> Result<BruteForce> {
    let support: Vec<u64> = law.atoms.keys().copied().collect();
    let s = support.len();
    let leaves = 1usize << n;
    let configurations = (s as f64).powi(leaves as i32);
    if configurations > budget {
        return Err(Error::EnumerationBudget { configurations, budget });
    }
    // common denominator: P(v) = num[v] / den
    let den: BigInt = law
        .atoms
        .values()
        .fold(BigInt::one(), |acc, p| num_integer::Integer::lcm(&acc, p.denom()));
    let nums: Vec<BigUint> = law
        .atoms
        .values()
        .map(|p| (p.numer() * (&den / p.denom())).to_biguint().unwrap())
        .collect();
    let first_leaf = leaves - 1;
    let mut values = vec![0u64; 2 * leaves - 1];
    let mut path = vec![false; 2 * leaves - 1];
    let mut idx = vec![0usize; leaves];
    let mut dist: BTreeMap<u64, BigUint> = BTreeMap::new();
    let mut biased_total = BigUint::zero();
    let mut biased_by_k: BTreeMap<u64, BigUint> = support.iter().map(|&k| (k, BigUint::zero())).collect();
    let mut n0_by_ell: BTreeMap<u64, BigUint> = BTreeMap::new();
    let mut count = 0u64;
    loop {
        count += 1;
        let mut w = BigUint::one();
        for (leaf, &i) in idx.iter().enumerate() {
            values[first_leaf + leaf] = support[i];
            w *= &nums[i];
        }
        for i in (0..first_leaf).rev() {
            values[i] = (values[2 * i + 1] + values[2 * i + 2]).saturating_sub(1);
        }
        path[0] = true;
        for i in 0..first_leaf {
            let open = path[i] && values[2 * i + 1] + values[2 * i + 2] >= 1;
            path[2 * i + 1] = open;
            path[2 * i + 2] = open;
        }
        let x = values[0];
        let mut by_k: BTreeMap<u64, u64> = BTreeMap::new();
        let mut total = 0u64;
        for leaf in first_leaf..values.len() {
            if path[leaf] {
                total += 1;
                *by_k.entry(values[leaf]).or_insert(0) += 1;
            }
        }
        *dist.entry(x).or_insert_with(BigUint::zero) += &w;
        let bias = BigUint::from(1 + x) << x as usize;
        let wb = &w * &bias;
        biased_total += &wb * BigUint::from(total);
        for (&k, &c) in &by_k {
            *biased_by_k.get_mut(&k).unwrap() += &wb * BigUint::from(c);
        }
        if let Some(&c0) = by_k.get(&0) {
            *n0_by_ell.entry(x).or_insert_with(BigUint::zero) += &w * BigUint::from(c0);
        }
        // odometer over leaf indices
        let mut pos = 0;
        while pos < leaves {
            idx[pos] += 1;
            if idx[pos] < s {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == leaves {
            break;
        }
    }
    let scale = BigInt::from(den).pow(leaves as u32);
    let to_rat = |u: BigUint| BigRational::new(BigInt::from(u), scale.clone());
    let mut h2_product = BigRational::one();
    let mut cur = law.clone();
    for _ in 0..n {
        h2_product *= cur.h2();
        cur = cur.step();
    }
    let rhs_by_k: BTreeMap<u64, BigRational> = support
        .iter()
        .map(|&k| {
            let w = BigRational::from_integer(BigInt::from(1 + k) << k as usize);
            (k, w * law.probability(k) * &h2_product)
        })
        .collect();
    let rhs_total = rhs_by_k.values().cloned().sum();
    Ok(BruteForce {
        n,
        configurations: count,
        distribution: dist.into_iter().map(|(k, u)| (k, to_rat(u))).collect(),
        biased_total: to_rat(biased_total),
        biased_by_k: biased_by_k.into_iter().map(|(k, u)| (k, to_rat(u))).collect(),
        n0_by_ell: n0_by_ell.into_iter().map(|(k, u)| (k, to_rat(u))).collect(),
        h2_product,
        rhs_by_k,
        rhs_total,
    })
}

/// Float value of an exact rational.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn critical(a: u64) -> ExactLaw {
        // delta = p ((a - 1) 2^a + 1) - 1
        let den = ((a - 1) << a) + 1;
        ExactLaw::dirac_mixture(a, 1, den as i64).unwrap()
    }

    #[test]
    fn depth_one_hand_values() {
        let bf = brute_force_expectations(&critical(2), 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(bf.biased_total, rat(128, 25));
        assert_eq!(bf.biased_by_k[&2], rat(96, 25));
        assert_eq!(bf.n0_by_ell[&1], rat(8, 25));
        assert_eq!(bf.h2_product, rat(8, 5));
    }

    #[test]
    fn identity_holds_on_critical_laws() {
        for a in [2, 3] {
            for n in 1..=3 {
                let bf = brute_force_expectations(&critical(a), n, DEFAULT_BUDGET).unwrap();
                assert_eq!(bf.biased_total, bf.rhs_total, "a = {a}, n = {n}");
                assert_eq!(bf.biased_by_k, bf.rhs_by_k, "a = {a}, n = {n}");
            }
        }
    }

    #[test]
    fn identity_fails_off_the_manifold() {
        let law = ExactLaw::dirac_mixture(2, 1, 2).unwrap();
        let bf = brute_force_expectations(&law, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(bf.biased_total, rat(20, 1));
        assert_eq!(bf.rhs_total, rat(65, 4));
    }

    #[test]
    fn distribution_agrees_with_pair_recursion() {
        let law = ExactLaw::from_ratios(&[(0, 1, 2), (1, 1, 6), (3, 1, 3)]).unwrap();
        let bf = brute_force_expectations(&law, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(bf.distribution, law.step().step().atoms);
    }

    #[test]
    fn budget_is_enforced() {
        let law = ExactLaw::from_ratios(&[(0, 1, 4), (1, 1, 4), (2, 1, 4), (3, 1, 4)]).unwrap();
        assert!(matches!(
            brute_force_expectations(&law, 4, DEFAULT_BUDGET),
            Err(Error::EnumerationBudget { .. })
        ));
    }
}
