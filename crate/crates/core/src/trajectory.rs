//! Multi-generation evolution with an adaptive, monotone truncation cap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::convolution::Convolver;
use crate::error::{Error, Result};
use crate::output::fmt_f64;
use crate::pmf::{evolve_step, TiltedPmf, Truncation};

/// Truncation settings for a whole run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TruncationPolicy {
    /// Never truncate; fail once the support exceeds `max_len` entries.
    Exact {
        #[serde(default = "default_exact_len")]
        max_len: usize,
    },
    /// Floor truncation at `K(n) = max(base_cap, per_generation * n)`, doubled
    /// while a step would discard more than `step_tilted_tol` of tilted mass.
    Floor {
        #[serde(default = "default_base_cap")]
        base_cap: usize,
        #[serde(default = "default_per_generation")]
        per_generation: usize,
        #[serde(default = "default_step_tol")]
        step_tilted_tol: f64,
        /// Abort once the cumulative discarded tilted mass exceeds this.
        #[serde(default = "default_hard_cap")]
        hard_lost_tilted: f64,
        #[serde(default = "default_max_cap")]
        max_cap: usize,
    },
}

fn default_exact_len() -> usize {
    1 << 22
}
fn default_base_cap() -> usize {
    64
}
fn default_per_generation() -> usize {
    8
}
fn default_step_tol() -> f64 {
    1e-14
}
fn default_hard_cap() -> f64 {
    1e-6
}
fn default_max_cap() -> usize {
    1 << 20
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy::Floor {
            base_cap: default_base_cap(),
            per_generation: default_per_generation(),
            step_tilted_tol: default_step_tol(),
            hard_lost_tilted: default_hard_cap(),
            max_cap: default_max_cap(),
        }
    }
}

impl TruncationPolicy {
    /// Floor policy with a fixed cap and no adaptive doubling.
    pub fn fixed_cap(cap: usize) -> Self {
        TruncationPolicy::Floor {
            base_cap: cap,
            per_generation: 0,
            step_tilted_tol: f64::INFINITY,
            hard_lost_tilted: f64::INFINITY,
            max_cap: cap,
        }
    }
}

/// Stateful driver of [`evolve_step`]; the cap never shrinks.
#[derive(Clone, Debug)]
pub struct Evolver {
    pmf: TiltedPmf,
    generation: usize,
    m: usize,
    policy: TruncationPolicy,
    conv: Convolver,
    cap: usize,
}

impl Evolver {
    pub fn new(pmf0: TiltedPmf, m: usize, policy: TruncationPolicy, conv: Convolver) -> Self {
        Self {
            pmf: pmf0,
            generation: 0,
            m,
            policy,
            conv,
            cap: 0,
        }
    }

    pub fn pmf(&self) -> &TiltedPmf {
        &self.pmf
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn into_pmf(self) -> TiltedPmf {
        self.pmf
    }

    pub fn step(&mut self) -> Result<&TiltedPmf> {
        let next_gen = self.generation + 1;
        let trunc = match self.policy {
            TruncationPolicy::Exact { max_len } => Truncation::Exact { max_len },
            TruncationPolicy::Floor {
                base_cap,
                per_generation,
                step_tilted_tol,
                max_cap,
                ..
            } => {
                let target = base_cap.max(per_generation.saturating_mul(next_gen)).min(max_cap);
                self.cap = self.cap.max(target);
                Truncation::Floor {
                    cap: self.cap,
                    step_tilted_tol,
                    max_cap,
                }
            }
        };
        let next = evolve_step(&self.pmf, self.m, &trunc, &self.conv)?;
        if !next.h2().is_finite() {
            return Err(Error::TiltedOverflow {
                generation: next_gen,
                k_max: next.k_max(),
            });
        }
        if let TruncationPolicy::Floor {
            hard_lost_tilted, ..
        } = self.policy
        {
            self.cap = self.cap.max(next.k_max());
            if !(next.lost_tilted_mass() <= hard_lost_tilted) {
                return Err(Error::TruncationBudget {
                    generation: next_gen,
                    lost_tilted: next.lost_tilted_mass(),
                    cap: hard_lost_tilted,
                });
            }
        }
        self.pmf = next;
        self.generation = next_gen;
        Ok(&self.pmf)
    }
}

/// Observables recorded at each generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub generation: usize,
    pub survival: f64,
    pub mean: f64,
    pub h2: f64,
    /// Product of `<2^X_i>` over `i < generation`.
    pub h2_product: f64,
    pub delta: f64,
    /// `(q, <X^q 2^X>)` pairs.
    pub tilted_moments: Vec<(u32, f64)>,
    /// `P(X = k | X > 0)` for `k = 1..=conditional_cap`.
    pub conditional_pmf: Vec<f64>,
    pub k_max: usize,
    pub lost_mass: f64,
    pub lost_tilted_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOptions {
    pub m: usize,
    pub moments: Vec<u32>,
    pub conditional_cap: usize,
    pub conv: Convolver,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            m: 2,
            moments: vec![1, 2],
            conditional_cap: 10,
            conv: Convolver::default(),
        }
    }
}

fn summarize(n: usize, pmf: &TiltedPmf, product: f64, m: usize, opts: &TrajectoryOptions) -> TrajectorySummary {
    TrajectorySummary {
        generation: n,
        survival: pmf.survival(),
        mean: pmf.mean(),
        h2: pmf.h2(),
        h2_product: product,
        delta: if m == 2 { pmf.delta() } else { pmf.delta_m(m) },
        tilted_moments: opts.moments.iter().map(|&q| (q, pmf.tilted_moment(q))).collect(),
        conditional_pmf: pmf.conditional_pmf(opts.conditional_cap),
        k_max: pmf.k_max(),
        lost_mass: pmf.lost_mass(),
        lost_tilted_mass: pmf.lost_tilted_mass(),
    }
}

/// Evolves `pmf0` for `n_max` generations, returning one summary per
/// generation `0..=n_max`.
pub fn evolve_trajectory(
    pmf0: &TiltedPmf,
    n_max: usize,
    policy: TruncationPolicy,
    opts: &TrajectoryOptions,
) -> Result<Vec<TrajectorySummary>> {
    evolve_trajectory_with(pmf0, n_max, policy, opts, |_, _| {})
}

/// As [`evolve_trajectory`], also handing every generation's law to `visit`.
pub fn evolve_trajectory_with<F: FnMut(usize, &TiltedPmf)>(
    pmf0: &TiltedPmf,
    n_max: usize,
    policy: TruncationPolicy,
    opts: &TrajectoryOptions,
    mut visit: F,
) -> Result<Vec<TrajectorySummary>> {
    if n_max < 1 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    let mut ev = Evolver::new(pmf0.clone(), opts.m, policy, opts.conv);
    let mut product = 1.0;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let pmf = ev.pmf();
        let s = summarize(n, pmf, product, opts.m, opts);
        visit(n, pmf);
        product *= s.h2;
        out.push(s);
        if n < n_max {
            ev.step()?;
        }
    }
    Ok(out)
}

/// CSV with columns `n, survival, mean, h2, h2_product, delta, moment_q...`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectorySummary], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header: Vec<String> = ["n", "survival", "mean", "h2", "h2_product", "delta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(first) = rows.first() {
        header.extend(first.tilted_moments.iter().map(|(q, _)| format!("moment_{q}")));
    }
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.generation.to_string(),
            fmt_f64(r.survival),
            fmt_f64(r.mean),
            fmt_f64(r.h2),
            fmt_f64(r.h2_product),
            fmt_f64(r.delta),
        ];
        rec.extend(r.tilted_moments.iter().map(|(_, v)| fmt_f64(*v)));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{pmf_from_law, InitialLaw};

    fn run(pmf0: &TiltedPmf, n: usize, policy: TruncationPolicy) -> Vec<TrajectorySummary> {
        evolve_trajectory(pmf0, n, policy, &TrajectoryOptions::default()).unwrap()
    }

    #[test]
    fn deterministic_dirac_doubles() {
        let rows = run(&TiltedPmf::dirac(2), 5, TruncationPolicy::Exact { max_len: 1 << 10 });
        let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        assert_eq!(means, vec![2.0, 3.0, 5.0, 9.0, 17.0, 33.0]);
    }

    #[test]
    fn critical_delta_stays_zero() {
        let law = InitialLaw::DiracMixture { a: 2, p: 0.2 };
        let pmf = pmf_from_law(&law, 2, false).unwrap();
        let rows = run(&pmf, 12, TruncationPolicy::Exact { max_len: 1 << 14 });
        for r in &rows {
            assert!(r.delta.abs() < 1e-10 * (r.generation.max(1) as f64), "{r:?}");
            // <X 2^X> = <2^X> on the critical manifold
            assert!((r.tilted_moments[0].1 - r.h2).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_sequence_starts_as_enumerated() {
        let pmf = TiltedPmf::from_atoms(&[(0, 0.5), (2, 0.5)]).unwrap();
        let rows = run(&pmf, 2, TruncationPolicy::default());
        assert_eq!(rows[0].delta, 1.5);
        assert_eq!(rows[1].delta, 3.75);
        assert_eq!(rows[1].h2_product, 2.5);
        assert_eq!(rows[2].h2_product, 2.5 * 3.25);
    }

    #[test]
    fn cap_grows_with_generation() {
        let pmf = TiltedPmf::from_atoms(&[(0, 0.8), (2, 0.2)]).unwrap();
        let mut ev = Evolver::new(pmf, 2, TruncationPolicy::default(), Convolver::default());
        for _ in 0..40 {
            ev.step().unwrap();
        }
        assert!(ev.pmf().k_max() >= 320);
        assert!(ev.pmf().lost_tilted_mass() < 1e-12);
    }

    #[test]
    fn tilted_overflow_is_reported() {
        let pmf = TiltedPmf::from_atoms(&[(0, 0.5), (2, 0.5)]).unwrap();
        let err = evolve_trajectory(&pmf, 12, TruncationPolicy::default(), &TrajectoryOptions::default());
        assert!(matches!(err, Err(Error::TiltedOverflow { .. })));
    }

    #[test]
    fn hard_cap_aborts() {
        let pmf = TiltedPmf::from_atoms(&[(0, 0.5), (2, 0.5)]).unwrap();
        let policy = TruncationPolicy::Floor {
            base_cap: 4,
            per_generation: 0,
            step_tilted_tol: f64::INFINITY,
            hard_lost_tilted: 1e-3,
            max_cap: 4,
        };
        let err = evolve_trajectory(&pmf, 10, policy, &TrajectoryOptions::default());
        assert!(matches!(err, Err(Error::TruncationBudget { .. })));
    }

    #[test]
    fn csv_layout() {
        let rows = run(&TiltedPmf::dirac(2), 2, TruncationPolicy::default());
        let mut buf = Vec::new();
        write_trajectory_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,survival,mean,h2,h2_product,delta,moment_1,moment_2");
        assert_eq!(lines.next().unwrap(), "0,1,2,4,1,4,8,16");
    }
}
