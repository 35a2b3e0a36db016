use dr_lab::convolution::{ConvolutionMethod, Convolver};
use dr_lab::limit_tree::sample_limit_tree;
use dr_lab::montecarlo::{mc_estimate, McOptions};
use dr_lab::oracle::ExactLaw;
use dr_lab::tree::{open_subtree, sample_tree, TreeSample};
use dr_lab::{evolve_step, evolve_trajectory, InitialLaw, TiltedPmf, TrajectoryOptions, Truncation, TruncationPolicy};
use proptest::prelude::*;

fn law(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..=max_len).prop_filter_map("needs mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-3).then(|| w.iter().map(|x| x / s).collect())
    })
}

/// Laws with probabilities `w_k / 2^bits`, exactly representable.
fn dyadic_law(max_len: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..16, 2..=max_len).prop_filter("needs mass", |w| w.iter().sum::<u64>() > 0)
}

fn conv() -> Convolver {
    Convolver::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_ledger(p in law(12), cap in 1usize..20) {
        let pmf = TiltedPmf::from_probabilities(&p).unwrap();
        for trunc in [
            Truncation::UNBOUNDED,
            Truncation::Floor { cap, step_tilted_tol: f64::INFINITY, max_cap: cap },
        ] {
            // floor truncation keeps the total at one; the ledger only records what moved
            let next = evolve_step(&pmf, 2, &trunc, &conv()).unwrap();
            let total = next.probabilities().iter().sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&next.lost_mass()));
            prop_assert!(next.weights().iter().all(|&q| q >= 0.0));
        }
    }

    #[test]
    fn delta_propagates_by_h2(p in law(10)) {
        let pmf = TiltedPmf::from_probabilities(&p).unwrap();
        let next = evolve_step(&pmf, 2, &Truncation::UNBOUNDED, &conv()).unwrap();
        let want = pmf.h2() * pmf.delta();
        let scale = pmf.h2() * (pmf.h2() + pmf.tilted_moment(1));
        prop_assert!((next.delta() - want).abs() <= 1e-10 * want.abs() + 1e-14 * scale,
            "{} vs {}", next.delta(), want);
    }

    #[test]
    fn quadratic_and_fft_agree(a in prop::collection::vec(0.0f64..1.0, 1..600),
                               b in prop::collection::vec(0.0f64..1.0, 1..600)) {
        let q = Convolver::with_method(ConvolutionMethod::Quadratic).convolve(&a, &b).unwrap();
        let f = Convolver::with_method(ConvolutionMethod::Fft).convolve(&a, &b).unwrap();
        prop_assert_eq!(q.len(), f.len());
        for (x, y) in q.iter().zip(&f) {
            if x.abs() > 1e-300 {
                prop_assert!(((x - y) / x).abs() < 1e-10, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn open_counts_partition(n in 0usize..8, leaves in prop::collection::vec(0u64..4, 128)) {
        let t = TreeSample::from_leaves(&leaves[..1 << n]).unwrap();
        let open = open_subtree(&t);
        prop_assert_eq!(open.n_total, open.n_by_value.values().sum::<u64>());
        let merge_open = n == 0 || t.values[1] + t.values[2] >= 1;
        prop_assert_eq!(open.n_total == 0, !merge_open);
    }

    #[test]
    fn internal_nodes_follow_the_recursion(leaves in prop::collection::vec(0u64..4, 16)) {
        let t = TreeSample::from_leaves(&leaves).unwrap();
        for i in 0..15 {
            prop_assert_eq!(t.values[i], (t.values[2 * i + 1] + t.values[2 * i + 2]).saturating_sub(1));
        }
        let open = open_subtree(&t);
        prop_assert_eq!(open.n_total as usize, open.open_leaf_flags.iter().filter(|f| **f).count());
    }

    #[test]
    fn trees_are_deterministic(n in 0usize..10, seed in any::<u64>(), p in 0.0f64..1.0) {
        let law = InitialLaw::DiracMixture { a: 2, p };
        prop_assert_eq!(sample_tree(&law, n, seed).unwrap(), sample_tree(&law, n, seed).unwrap());
    }

    #[test]
    fn floor_truncation_is_dominated(p in law(8), cap in 2usize..12) {
        let pmf = TiltedPmf::from_probabilities(&p).unwrap();
        let opts = TrajectoryOptions::default();
        let small = evolve_trajectory(&pmf, 7, TruncationPolicy::fixed_cap(cap), &opts).unwrap();
        let large = evolve_trajectory(&pmf, 7, TruncationPolicy::fixed_cap(4 * cap), &opts).unwrap();
        let exact = evolve_trajectory(&pmf, 7, TruncationPolicy::Exact { max_len: 1 << 12 }, &opts).unwrap();
        for ((s, l), x) in small.iter().zip(&large).zip(&exact) {
            prop_assert!(s.survival <= x.survival * (1.0 + 1e-12));
            prop_assert!(s.mean <= x.mean * (1.0 + 1e-12));
            // the larger cap is only an upper reference while it has lost nothing
            if l.lost_mass == 0.0 {
                prop_assert!(s.survival <= l.survival * (1.0 + 1e-12));
                prop_assert!(s.mean <= l.mean * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn dyadic_steps_are_exact(w in dyadic_law(8)) {
        let total: u64 = w.iter().sum();
        // pad to a power-of-two denominator
        let den = total.next_power_of_two();
        let mut w = w;
        w[0] += den - total;
        let ratios: Vec<(u64, i64, i64)> =
            w.iter().enumerate().map(|(k, &x)| (k as u64, x as i64, den as i64)).collect();
        let exact = ExactLaw::from_ratios(&ratios).unwrap();
        let p: Vec<f64> = w.iter().map(|&x| x as f64 / den as f64).collect();
        let pmf = TiltedPmf::from_probabilities(&p).unwrap();
        let next = evolve_step(&pmf, 2, &Truncation::UNBOUNDED, &conv()).unwrap();
        prop_assert_eq!(ExactLaw::from_pmf(&next).unwrap(), exact.step());
    }

    #[test]
    fn free_energy_sequence_is_monotone(p in law(6)) {
        let pmf = TiltedPmf::from_probabilities(&p).unwrap();
        // 5 * 2^7 stays below the largest finite power of two
        let rows = evolve_trajectory(&pmf, 7, TruncationPolicy::Exact { max_len: 1 << 16 },
            &TrajectoryOptions::default()).unwrap();
        for w in rows.windows(2) {
            let a = w[0].mean / 2f64.powi(w[0].generation as i32);
            let b = w[1].mean / 2f64.powi(w[1].generation as i32);
            prop_assert!(b <= a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn limit_tree_conserves_value(x in 0.01f64..2.0, seed in any::<u64>()) {
        let t = sample_limit_tree(x, 0.1, seed).unwrap();
        // each segment adds its length to exactly one lineage; splits only share value out
        let segments: f64 = t.nodes.iter().skip(1).map(|nd| nd.height - t.nodes[nd.parent.unwrap()].height).sum::<f64>()
            + t.leaves.iter().map(|l| l.height - t.nodes[l.parent].height).sum::<f64>();
        let leaf_sum: f64 = t.leaves.iter().map(|l| l.value).sum();
        prop_assert!((leaf_sum - (x + segments)).abs() < 1e-9 * (1.0 + leaf_sum));
        for nd in t.nodes.iter().skip(1) {
            prop_assert!(nd.height > t.nodes[nd.parent.unwrap()].height);
        }
    }
}

#[test]
fn criticality_is_conserved() {
    let pmf = TiltedPmf::from_probabilities(&[0.8, 0.0, 0.2]).unwrap();
    let rows = evolve_trajectory(&pmf, 60, TruncationPolicy::default(), &TrajectoryOptions::default()).unwrap();
    for r in &rows {
        assert!(r.delta.abs() < 1e-10 * (r.generation as f64 + 1.0), "n = {}: {}", r.generation, r.delta);
        assert!((r.tilted_moments[0].1 - r.h2).abs() < 1e-10 * (r.generation as f64 + 1.0));
    }
}

#[test]
fn monte_carlo_ignores_thread_count() {
    let law = InitialLaw::DiracMixture { a: 2, p: 0.2 };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| mc_estimate(&law, 6, 3000, 11, &McOptions::default()).unwrap())
    };
    assert_eq!(run(1), run(3));
}
