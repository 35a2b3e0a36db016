//! Full binary trees of the recursion and their open subtrees.
//!
//! Nodes live in a flat breadth-first array: the root is index 0, the
//! children of `i` are `2i + 1` and `2i + 2`, and the `2^n` leaves occupy
//! indices `2^n - 1 ..= 2^(n+1) - 2`.

use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{InitialLaw, DEFAULT_K_CAP};

/// Deepest tree [`sample_tree`] builds by default (`2^22` leaves).
pub const DEFAULT_MAX_DEPTH: usize = 22;

/// Random generator of replica `stream` under master `seed`.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sampler of `X_0`.
#[derive(Clone, Debug)]
pub struct LeafSampler {
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Constant(u64),
    /// Atom values with cumulative thresholds on `u64`; one draw per leaf.
    Table { values: Vec<u64>, thresholds: Vec<u64> },
    Alias { values: Vec<u64>, index: WeightedAliasIndex<f64> },
}

const TABLE_LIMIT: usize = 16;

impl LeafSampler {
    /// Sampler of `law`, with infinite tails cut at `k_cap` (mass moved to zero).
    pub fn new(law: &InitialLaw, k_cap: usize) -> Result<Self> {
        let cap = law.finite_support().unwrap_or(k_cap);
        Self::from_probabilities(&law.probabilities(cap)?)
    }

    /// Sampler of the law `P(X = k) = p[k]`.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        let atoms: Vec<(u64, f64)> = p
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(k, &x)| (k as u64, x))
            .collect();
        if atoms.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidPmf("sampler needs a non-negative, non-zero law".into()));
        }
        let kind = if atoms.len() == 1 {
            SamplerKind::Constant(atoms[0].0)
        } else if atoms.len() <= TABLE_LIMIT {
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let mut acc = 0.0;
            let mut thresholds = Vec::with_capacity(atoms.len());
            for (i, a) in atoms.iter().enumerate() {
                acc += a.1 / total;
                thresholds.push(if i + 1 == atoms.len() {
                    u64::MAX
                } else {
                    (acc * 2f64.powi(64)).min(u64::MAX as f64) as u64
                });
            }
            SamplerKind::Table {
                values: atoms.iter().map(|a| a.0).collect(),
                thresholds,
            }
        } else {
            let index = WeightedAliasIndex::new(atoms.iter().map(|a| a.1).collect())
                .map_err(|e| Error::InvalidPmf(e.to_string()))?;
            SamplerKind::Alias {
                values: atoms.iter().map(|a| a.0).collect(),
                index,
            }
        };
        Ok(Self { kind })
    }

    #[inline]
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            SamplerKind::Constant(v) => *v,
            SamplerKind::Table { values, thresholds } => {
                let u = rng.next_u64();
                let i = thresholds.iter().position(|&t| u < t).unwrap_or(values.len() - 1);
                values[i]
            }
            SamplerKind::Alias { values, index } => values[index.sample(rng)],
        }
    }
}

/// Node values of a depth-`n` tree in breadth-first layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSample {
    pub depth: usize,
    pub values: Vec<u64>,
}

impl TreeSample {
    /// Builds the tree above the given `2^n` leaves.
    pub fn from_leaves(leaves: &[u64]) -> Result<Self> {
        if leaves.is_empty() || !leaves.len().is_power_of_two() {
            return Err(Error::InvalidPmf(format!(
                "leaf count {} is not a power of two",
                leaves.len()
            )));
        }
        let depth = leaves.len().trailing_zeros() as usize;
        let mut values = vec![0u64; 2 * leaves.len() - 1];
        values[leaves.len() - 1..].copy_from_slice(leaves);
        fill_internal(&mut values, leaves.len() - 1);
        Ok(Self { depth, values })
    }

    pub fn root(&self) -> u64 {
        self.values[0]
    }

    pub fn leaves(&self) -> &[u64] {
        &self.values[(1usize << self.depth) - 1..]
    }
}

fn fill_internal(values: &mut [u64], first_leaf: usize) {
    for i in (0..first_leaf).rev() {
        values[i] = (values[2 * i + 1] + values[2 * i + 2]).saturating_sub(1);
    }
}

/// Samples a depth-`n` tree of `law`; a deterministic function of `(law, n, seed)`.
pub fn sample_tree(law: &InitialLaw, n: usize, seed: u64) -> Result<TreeSample> {
    if n > DEFAULT_MAX_DEPTH {
        return Err(Error::DepthBudget {
            depth: n,
            max: DEFAULT_MAX_DEPTH,
        });
    }
    let sampler = LeafSampler::new(law, DEFAULT_K_CAP)?;
    let mut ws = TreeWorkspace::new(n);
    ws.sample(&sampler, &mut replica_rng(seed, 0));
    Ok(ws.to_tree())
}

/// Open-path structure of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSubtree {
    /// One flag per leaf: every merge on the leaf's root path has `a + b >= 1`.
    pub open_leaf_flags: Vec<bool>,
    pub n_total: u64,
    /// `k -> N_n^(k)`, open leaves carrying value `k` (zero counts omitted).
    pub n_by_value: BTreeMap<u64, u64>,
    /// Depth over `n` of every node where both subtrees hold open leaves.
    pub branching_heights: Vec<f64>,
}

/// Open subtree of `tree`.
pub fn open_subtree(tree: &TreeSample) -> OpenSubtree {
    let n = tree.depth;
    let first_leaf = (1usize << n) - 1;
    let path = path_open(&tree.values, first_leaf);
    let open_leaf_flags: Vec<bool> = path[first_leaf..].to_vec();
    let mut n_by_value = BTreeMap::new();
    for (flag, v) in open_leaf_flags.iter().zip(tree.leaves()) {
        if *flag {
            *n_by_value.entry(*v).or_insert(0) += 1;
        }
    }
    let mut below = vec![0u64; tree.values.len()];
    for (i, f) in open_leaf_flags.iter().enumerate() {
        below[first_leaf + i] = *f as u64;
    }
    let mut branching_heights = Vec::new();
    for i in (0..first_leaf).rev() {
        let (l, r) = (below[2 * i + 1], below[2 * i + 2]);
        below[i] = l + r;
        if l > 0 && r > 0 {
            let depth = (usize::BITS - (i + 1).leading_zeros() - 1) as f64;
            branching_heights.push(if n > 0 { depth / n as f64 } else { 0.0 });
        }
    }
    branching_heights.sort_by(f64::total_cmp);
    OpenSubtree {
        open_leaf_flags,
        n_total: below[0],
        n_by_value,
        branching_heights,
    }
}

/// `path[i]`: every merge strictly above node `i` is open.
fn path_open(values: &[u64], first_leaf: usize) -> Vec<bool> {
    let mut path = vec![false; values.len()];
    path[0] = true;
    for i in 0..first_leaf {
        let open = path[i] && values[2 * i + 1] + values[2 * i + 2] >= 1;
        path[2 * i + 1] = open;
        path[2 * i + 2] = open;
    }
    path
}

/// Per-replica counts used by the Monte Carlo estimators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OpenCounts {
    pub root: u64,
    pub n_total: u64,
    /// `N_n^(k)` for `k < by_value.len()`; larger values are pooled in `overflow`.
    pub by_value: Vec<u64>,
    pub overflow: u64,
}

/// Reusable buffers for repeated tree sampling at a fixed depth.
#[derive(Clone, Debug)]
pub struct TreeWorkspace {
    depth: usize,
    values: Vec<u64>,
    path: Vec<bool>,
}

impl TreeWorkspace {
    pub fn new(depth: usize) -> Self {
        let len = (2usize << depth) - 1;
        Self {
            depth,
            values: vec![0; len],
            path: vec![false; len],
        }
    }

    pub fn sample<R: RngCore>(&mut self, sampler: &LeafSampler, rng: &mut R) -> u64 {
        let first_leaf = (1usize << self.depth) - 1;
        for v in &mut self.values[first_leaf..] {
            *v = sampler.sample(rng);
        }
        fill_internal(&mut self.values, first_leaf);
        self.values[0]
    }

    pub fn root(&self) -> u64 {
        self.values[0]
    }

    pub fn to_tree(&self) -> TreeSample {
        TreeSample {
            depth: self.depth,
            values: self.values.clone(),
        }
    }

    /// Open-leaf counts of the current tree, tracking `N^(k)` for `k < k_track`.
    pub fn open_counts(&mut self, k_track: usize) -> OpenCounts {
        let first_leaf = (1usize << self.depth) - 1;
        self.path[0] = true;
        for i in 0..first_leaf {
            let open = self.path[i] && self.values[2 * i + 1] + self.values[2 * i + 2] >= 1;
            self.path[2 * i + 1] = open;
            self.path[2 * i + 2] = open;
        }
        let mut c = OpenCounts {
            root: self.values[0],
            n_total: 0,
            by_value: vec![0; k_track],
            overflow: 0,
        };
        for (&open, &v) in self.path[first_leaf..].iter().zip(&self.values[first_leaf..]) {
            if open {
                c.n_total += 1;
                match c.by_value.get_mut(v as usize) {
                    Some(slot) => *slot += 1,
                    None => c.overflow += 1,
                }
            }
        }
        c
    }
}
