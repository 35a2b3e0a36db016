//! Sampler of the continuum open-subtree limit.
//!
//! A branch started at height `s0` with value `mu0` carries value
//! `mu_s = mu0 + (s - s0)` and branches at rate `2 mu_s / (1 - s)^2`. The
//! integrated rate diverges at `s = 1`, so branches stop at height `1 - eta`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bisect;
use crate::output::fmt_f64;
use crate::tree::replica_rng;

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;
pub const DEFAULT_ETA: f64 = 1e-3;

/// Integrated branching rate of a branch from `(s0, mu0)` up to height `s`.
pub fn integrated_rate(s0: f64, mu0: f64, s: f64) -> f64 {
    // 2 mu_u / (1-u)^2 = 2c / (1-u)^2 - 2 / (1-u) with c = mu0 - s0 + 1
    let c = mu0 - s0 + 1.0;
    2.0 * c * (1.0 / (1.0 - s) - 1.0 / (1.0 - s0)) + 2.0 * ((1.0 - s) / (1.0 - s0)).ln()
}

/// How a branch started at `(s0, mu0)` ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BranchEnd {
    /// Reached the cutoff height `1 - eta` without branching.
    Cutoff,
    /// Branched at this height.
    Branch(f64),
}

/// Draws the end of one branch.
pub fn sample_branch<R: Rng>(s0: f64, mu0: f64, eta: f64, rng: &mut R) -> BranchEnd {
    let e: f64 = Exp1.sample(rng);
    let top = 1.0 - eta;
    if integrated_rate(s0, mu0, top) <= e {
        return BranchEnd::Cutoff;
    }
    let (lo, hi) = bisect(|s| integrated_rate(s0, mu0, s) - e, s0, top, 1e-12, 200);
    BranchEnd::Branch(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitNode {
    pub height: f64,
    /// Value just before the split.
    pub value: f64,
    pub parent: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitLeaf {
    pub parent: usize,
    pub height: f64,
    pub value: f64,
    /// Always set: leaves are branches stopped at `1 - eta`.
    pub cutoff: bool,
}

/// Node 0 is the root at height 0 with value `x`; the others are branch points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitTree {
    pub root_value: f64,
    pub eta: f64,
    pub nodes: Vec<LimitNode>,
    pub leaves: Vec<LimitLeaf>,
}

/// Samples the limit tree with root value `x`.
pub fn sample_limit_tree(x: f64, eta: f64, seed: u64) -> Result<LimitTree> {
    sample_limit_tree_with(x, eta, &mut replica_rng(seed, 0), DEFAULT_NODE_BUDGET)
}

pub fn sample_limit_tree_with<R: Rng>(x: f64, eta: f64, rng: &mut R, budget: usize) -> Result<LimitTree> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Config(format!("root value x = {x} must be positive")));
    }
    if !(eta > 0.0 && eta <= 0.1) {
        return Err(Error::Config(format!("eta = {eta} outside (0, 0.1]")));
    }
    let mut tree = LimitTree {
        root_value: x,
        eta,
        nodes: vec![LimitNode {
            height: 0.0,
            value: x,
            parent: None,
        }],
        leaves: Vec::new(),
    };
    // pending branches: (parent node, start height, start value)
    let mut stack = vec![(0usize, 0.0f64, x)];
    while let Some((parent, s0, mu0)) = stack.pop() {
        if tree.nodes.len() + tree.leaves.len() > budget {
            return Err(Error::NodeBudget { budget, x, eta });
        }
        match sample_branch(s0, mu0, eta, rng) {
            BranchEnd::Cutoff => {
                let height = 1.0 - eta;
                tree.leaves.push(LimitLeaf {
                    parent,
                    height,
                    value: mu0 + (height - s0),
                    cutoff: true,
                });
            }
            BranchEnd::Branch(s) => {
                let mu = mu0 + (s - s0);
                let id = tree.nodes.len();
                tree.nodes.push(LimitNode {
                    height: s,
                    value: mu,
                    parent: Some(parent),
                });
                let u: f64 = rng.random();
                let left = u * mu;
                // second child first on the stack so the first is expanded next
                stack.push((id, s, mu - left));
                stack.push((id, s, left));
            }
        }
    }
    Ok(tree)
}

/// Number of bins of the branching-height histogram on `[0, 1)`.
pub const HEIGHT_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitTreeStats {
    pub x: f64,
    pub eta: f64,
    pub reps: u64,
    pub seed: u64,
    /// Leaf count -> number of replicas.
    pub leaf_count_hist: BTreeMap<usize, u64>,
    pub leaf_count_mean: f64,
    pub leaf_count_stderr: f64,
    /// Branching heights, counts per bin of width `1 / HEIGHT_BINS`.
    pub branching_height_hist: Vec<u64>,
    /// Mean and second moment of leaf values over all leaves.
    pub leaf_value_mean: f64,
    pub leaf_value_m2: f64,
    pub leaf_value_stderr: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Empirical statistics over `reps` independent trees (replica `r` uses stream `r`).
pub fn limit_tree_stats(x: f64, eta: f64, reps: u64, seed: u64) -> Result<LimitTreeStats> {
    if reps < 1 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let trees: Vec<LimitTree> = (0..reps)
        .into_par_iter()
        .map(|r| sample_limit_tree_with(x, eta, &mut replica_rng(seed, r), DEFAULT_NODE_BUDGET))
        .collect::<Result<_>>()?;
    let mut leaf_count_hist = BTreeMap::new();
    let mut branching_height_hist = vec![0u64; HEIGHT_BINS];
    let mut counts = Vec::with_capacity(trees.len());
    let mut values = Vec::new();
    for t in &trees {
        *leaf_count_hist.entry(t.leaves.len()).or_insert(0) += 1;
        counts.push(t.leaves.len() as f64);
        for node in &t.nodes[1..] {
            let bin = ((node.height * HEIGHT_BINS as f64) as usize).min(HEIGHT_BINS - 1);
            branching_height_hist[bin] += 1;
        }
        values.extend(t.leaves.iter().map(|l| l.value));
    }
    let (leaf_count_mean, leaf_count_stderr) = mean_stderr(&counts);
    let (leaf_value_mean, leaf_value_stderr) = mean_stderr(&values);
    let leaf_value_m2 = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    Ok(LimitTreeStats {
        x,
        eta,
        reps,
        seed,
        leaf_count_hist,
        leaf_count_mean,
        leaf_count_stderr,
        branching_height_hist,
        leaf_value_mean,
        leaf_value_m2,
        leaf_value_stderr,
    })
}

/// Statistics at `eta` and `eta / 2` side by side.
pub fn eta_sensitivity(x: f64, eta: f64, reps: u64, seed: u64) -> Result<[LimitTreeStats; 2]> {
    Ok([limit_tree_stats(x, eta, reps, seed)?, limit_tree_stats(x, eta / 2.0, reps, seed)?])
}

/// Total-variation distance between two count histograms.
pub fn histogram_tv<K: Ord + Copy>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let keys: std::collections::BTreeSet<K> = a.keys().chain(b.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| {
            let pa = *a.get(k).unwrap_or(&0) as f64 / na.max(1) as f64;
            let pb = *b.get(k).unwrap_or(&0) as f64 / nb.max(1) as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub const STATS_HEADER: [&str; 5] = ["eta", "quantity", "bin", "value", "stderr"];

/// Long-format CSV rows of `stats`.
pub fn stats_records(stats: &LimitTreeStats) -> Vec<Vec<String>> {
    let eta = fmt_f64(stats.eta);
    let row = |q: &str, bin: String, v: f64, e: f64| vec![eta.clone(), q.to_string(), bin, fmt_f64(v), fmt_f64(e)];
    let mut rows = vec![
        row("leaf_count_mean", String::new(), stats.leaf_count_mean, stats.leaf_count_stderr),
        row("leaf_value_mean", String::new(), stats.leaf_value_mean, stats.leaf_value_stderr),
        row("leaf_value_m2", String::new(), stats.leaf_value_m2, f64::NAN),
    ];
    let reps = stats.reps as f64;
    for (k, c) in &stats.leaf_count_hist {
        let p = *c as f64 / reps;
        rows.push(row("leaf_count_pmf", k.to_string(), p, (p * (1.0 - p) / reps).sqrt()));
    }
    for (b, c) in stats.branching_height_hist.iter().enumerate() {
        let per_tree = *c as f64 / reps * HEIGHT_BINS as f64;
        rows.push(row(
            "branching_height_density",
            fmt_f64(b as f64 / HEIGHT_BINS as f64),
            per_tree,
            f64::NAN,
        ));
    }
    rows
}
