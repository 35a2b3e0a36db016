//! Monte Carlo estimators over sampled trees, with block-jackknife errors.
//!
//! Replica `r` draws from stream `r` of the master seed, and replicas are
//! grouped into contiguous blocks whose sums are reduced in block order. The
//! output is therefore independent of the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{InitialLaw, DEFAULT_K_CAP};
use crate::tree::{open_subtree, replica_rng, LeafSampler, TreeSample, TreeWorkspace, DEFAULT_MAX_DEPTH};

/// Largest number of jackknife blocks.
pub const MAX_BLOCKS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McOptions {
    /// Support cap for infinite-tail laws.
    pub k_cap: usize,
    /// Largest `k` of the conditional law `P(X_n = k | X_n > 0)`.
    pub conditional_cap: usize,
    /// Largest moment order of `N_n`.
    pub q_max: u32,
    /// Largest `l` in `<N_n^(0) 1{X_n = l}>`.
    pub ell_max: usize,
    /// Leaf values `k` of the biased observables `<(1 + X_n) 2^X_n N_n^(k)>`.
    pub k_list: Vec<usize>,
    /// Grid for `<exp(lambda N_n)>`.
    pub lambdas: Vec<f64>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            k_cap: DEFAULT_K_CAP,
            conditional_cap: 10,
            q_max: 4,
            ell_max: 5,
            k_list: vec![0, 1, 2, 3],
            lambdas: vec![],
        }
    }
}

/// One estimated observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub observable: String,
    pub n: usize,
    pub estimate: f64,
    /// Jackknife standard error (`NaN` when there is a single block).
    pub stderr: f64,
    pub reps: u64,
    pub seed: u64,
}

enum Derived {
    Mean(usize),
    Ratio(usize, usize),
}

struct Layout {
    names: Vec<String>,
    derived: Vec<Derived>,
    columns: usize,
}

fn layout(opts: &McOptions) -> Layout {
    let mut names = Vec::new();
    let mut derived = Vec::new();
    let mut col = 0;
    let mean = |name: String, names: &mut Vec<String>, derived: &mut Vec<Derived>, col: &mut usize| {
        names.push(name);
        derived.push(Derived::Mean(*col));
        *col += 1;
    };
    mean("P(X_n>0)".into(), &mut names, &mut derived, &mut col);
    for k in 1..=opts.conditional_cap {
        names.push(format!("P(X_n={k}|X_n>0)"));
        derived.push(Derived::Ratio(col, 0));
        col += 1;
    }
    mean("<N_n>".into(), &mut names, &mut derived, &mut col);
    for q in 2..=opts.q_max {
        mean(format!("<N_n^{q}>"), &mut names, &mut derived, &mut col);
    }
    mean("<N_n^(0)>".into(), &mut names, &mut derived, &mut col);
    for l in 0..=opts.ell_max {
        mean(format!("<N_n^(0)1{{X_n={l}}}>"), &mut names, &mut derived, &mut col);
    }
    mean("<(1+X_n)2^X_n N_n>".into(), &mut names, &mut derived, &mut col);
    for k in &opts.k_list {
        mean(format!("<(1+X_n)2^X_n N_n^({k})>"), &mut names, &mut derived, &mut col);
    }
    for l in &opts.lambdas {
        mean(format!("<exp({l}N_n)>"), &mut names, &mut derived, &mut col);
    }
    Layout {
        names,
        derived,
        columns: col,
    }
}

fn record_replica(ws: &mut TreeWorkspace, opts: &McOptions, k_track: usize, acc: &mut [f64]) {
    let c = ws.open_counts(k_track);
    let x = c.root;
    let n = c.n_total as f64;
    let mut col = 0;
    let mut push = |v: f64, col: &mut usize| {
        acc[*col] += v;
        *col += 1;
    };
    push((x > 0) as u8 as f64, &mut col);
    for k in 1..=opts.conditional_cap as u64 {
        push((x == k) as u8 as f64, &mut col);
    }
    push(n, &mut col);
    for q in 2..=opts.q_max {
        push(n.powi(q as i32), &mut col);
    }
    let n0 = c.by_value.first().copied().unwrap_or(0) as f64;
    push(n0, &mut col);
    for l in 0..=opts.ell_max as u64 {
        push(if x == l { n0 } else { 0.0 }, &mut col);
    }
    let bias = (1.0 + x as f64) * 2f64.powf(x as f64);
    push(bias * n, &mut col);
    for &k in &opts.k_list {
        push(bias * c.by_value[k] as f64, &mut col);
    }
    for &l in &opts.lambdas {
        push((l * n).exp(), &mut col);
    }
}

/// Estimates of the tree observables of `law` at depth `n`.
pub fn mc_estimate(law: &InitialLaw, n: usize, reps: u64, seed: u64, opts: &McOptions) -> Result<Vec<McRecord>> {
    if reps < 1 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if n > DEFAULT_MAX_DEPTH {
        return Err(Error::DepthBudget {
            depth: n,
            max: DEFAULT_MAX_DEPTH,
        });
    }
    let sampler = LeafSampler::new(law, opts.k_cap)?;
    let lay = layout(opts);
    let k_track = opts.k_list.iter().copied().max().map_or(1, |k| k + 1).max(1);
    let blocks = (reps as usize).min(MAX_BLOCKS);
    let bounds: Vec<(u64, u64)> = (0..blocks as u64)
        .map(|b| (b * reps / blocks as u64, (b + 1) * reps / blocks as u64))
        .collect();
    let sums: Vec<Vec<f64>> = bounds
        .par_iter()
        .map(|&(start, end)| {
            let mut ws = TreeWorkspace::new(n);
            let mut acc = vec![0.0; lay.columns];
            for r in start..end {
                let mut rng = replica_rng(seed, r);
                ws.sample(&sampler, &mut rng);
                record_replica(&mut ws, opts, k_track, &mut acc);
            }
            acc
        })
        .collect();
    let counts: Vec<f64> = bounds.iter().map(|(s, e)| (e - s) as f64).collect();
    let (estimates, errors) = jackknife(&sums, &counts, &lay.derived);
    Ok(lay
        .names
        .into_iter()
        .zip(estimates.into_iter().zip(errors))
        .map(|(observable, (estimate, stderr))| McRecord {
            observable,
            n,
            estimate,
            stderr,
            reps,
            seed,
        })
        .collect())
}

fn evaluate(d: &Derived, means: &[f64]) -> f64 {
    match *d {
        Derived::Mean(c) => means[c],
        Derived::Ratio(a, b) => {
            if means[b] > 0.0 {
                means[a] / means[b]
            } else {
                0.0
            }
        }
    }
}

/// Delete-one-block jackknife of functions of column means.
fn jackknife(sums: &[Vec<f64>], counts: &[f64], derived: &[Derived]) -> (Vec<f64>, Vec<f64>) {
    let cols = sums[0].len();
    let total_n: f64 = counts.iter().sum();
    let total: Vec<f64> = (0..cols).map(|c| sums.iter().map(|s| s[c]).sum()).collect();
    let full: Vec<f64> = total.iter().map(|t| t / total_n).collect();
    let estimates: Vec<f64> = derived.iter().map(|d| evaluate(d, &full)).collect();
    let b = sums.len();
    if b < 2 {
        return (estimates, vec![f64::NAN; derived.len()]);
    }
    let loo: Vec<Vec<f64>> = sums
        .iter()
        .zip(counts)
        .map(|(s, n)| {
            let means: Vec<f64> = (0..cols).map(|c| (total[c] - s[c]) / (total_n - n)).collect();
            derived.iter().map(|d| evaluate(d, &means)).collect()
        })
        .collect();
    let errors = (0..derived.len())
        .map(|j| {
            let mean = loo.iter().map(|v| v[j]).sum::<f64>() / b as f64;
            let ss: f64 = loo.iter().map(|v| (v[j] - mean).powi(2)).sum();
            ((b as f64 - 1.0) / b as f64 * ss).sqrt()
        })
        .collect();
    (estimates, errors)
}

/// Trees conditioned on `X_n = floor(x n)`, with the acceptance statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSample {
    pub target: u64,
    pub trees: Vec<TreeSample>,
    pub attempts: u64,
    /// Acceptance rate and its binomial standard error.
    pub rate: f64,
    pub rate_stderr: f64,
}

/// Rejection sampler of `count` trees with root value `floor(x n)`.
///
/// Attempt `i` uses stream `i` of `seed`. Fails once `max_attempts` are spent
/// before `count` trees are accepted.
pub fn conditional_tree_samples(
    law: &InitialLaw,
    n: usize,
    x: f64,
    count: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<ConditionalSample> {
    if !(x > 0.0) {
        return Err(Error::Config(format!("x = {x} must be positive")));
    }
    if n > DEFAULT_MAX_DEPTH {
        return Err(Error::DepthBudget {
            depth: n,
            max: DEFAULT_MAX_DEPTH,
        });
    }
    let target = (x * n as f64).floor() as u64;
    let probs = law.probabilities(law.finite_support().unwrap_or(DEFAULT_K_CAP))?;
    let k_max = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64;
    let max_root = if k_max == 0 { 0 } else { (k_max - 1) * (1u64 << n) + 1 };
    if target > max_root {
        return Err(Error::Unreachable {
            target,
            depth: n,
            max: max_root,
        });
    }
    let sampler = LeafSampler::from_probabilities(&probs)?;
    let mut ws = TreeWorkspace::new(n);
    let mut trees = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while trees.len() < count {
        if attempts >= max_attempts {
            return Err(Error::AttemptsExhausted {
                attempts,
                accepted: trees.len() as u64,
                rate: trees.len() as f64 / attempts.max(1) as f64,
            });
        }
        let mut rng = replica_rng(seed, attempts);
        attempts += 1;
        if ws.sample(&sampler, &mut rng) == target {
            trees.push(ws.to_tree());
        }
    }
    let rate = count as f64 / attempts as f64;
    Ok(ConditionalSample {
        target,
        trees,
        attempts,
        rate,
        rate_stderr: (rate * (1.0 - rate) / attempts as f64).sqrt(),
    })
}

/// A single conditioned tree.
pub fn conditional_tree_sample(
    law: &InitialLaw,
    n: usize,
    x: f64,
    seed: u64,
    max_attempts: u64,
) -> Result<ConditionalSample> {
    conditional_tree_samples(law, n, x, 1, seed, max_attempts)
}

/// JSON dump of a small tree: node values and the open-leaf bitmask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub depth: usize,
    pub values: Vec<u64>,
    /// Bit `i` (little-endian bytes, least significant bit first) is leaf `i`.
    pub open_leaf_mask: String,
}

pub fn tree_dump(tree: &TreeSample) -> TreeDump {
    let open = open_subtree(tree);
    let mut bytes = vec![0u8; open.open_leaf_flags.len().div_ceil(8)];
    for (i, f) in open.open_leaf_flags.iter().enumerate() {
        if *f {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    TreeDump {
        depth: tree.depth,
        values: tree.values.clone(),
        open_leaf_mask: bytes.iter().map(|b| format!("{b:02x}")).collect(),
    }
}
