use std::process::Command;

use dr_lab::criticality::{find_pc, free_energy, scan_free_energy, FreeEnergyOptions};
use dr_lab::fit::{exponent_fit, FitModel};
use dr_lab::limit_tree::{integrated_rate, limit_tree_stats, sample_branch, BranchEnd};
use dr_lab::montecarlo::{conditional_tree_sample, conditional_tree_samples, mc_estimate, McOptions, McRecord};
use dr_lab::oracle::{brute_force_expectations, to_f64, ExactLaw, DEFAULT_BUDGET};
use dr_lab::tree::{replica_rng, LeafSampler, TreeWorkspace};
use dr_lab::{evolve_trajectory, pmf_from_law, Error, InitialLaw, TiltedPmf, TrajectoryOptions, TruncationPolicy};

const CRITICAL: InitialLaw = InitialLaw::DiracMixture { a: 2, p: 0.2 };

fn record<'a>(records: &'a [McRecord], name: &str) -> &'a McRecord {
    records.iter().find(|r| r.observable == name).unwrap()
}

fn exact_law_at(law: &InitialLaw, n: usize) -> TiltedPmf {
    let pmf = pmf_from_law(law, 10, false).unwrap();
    let mut out = None;
    dr_lab::evolve_trajectory_with(
        &pmf,
        n,
        TruncationPolicy::Exact { max_len: 1 << 16 },
        &TrajectoryOptions::default(),
        |k, p| {
            if k == n {
                out = Some(p.clone());
            }
        },
    )
    .unwrap();
    out.unwrap()
}

#[test]
fn sampled_roots_follow_the_exact_law() {
    let n = 6;
    let reps = 100_000u64;
    let exact = exact_law_at(&CRITICAL, n);
    let sampler = LeafSampler::new(&CRITICAL, 10).unwrap();
    let mut ws = TreeWorkspace::new(n);
    let mut counts = vec![0u64; exact.k_max() + 2];
    for r in 0..reps {
        let root = ws.sample(&sampler, &mut replica_rng(5, r)) as usize;
        counts[root.min(exact.k_max() + 1)] += 1;
    }
    // chi-square over cells with enough expected counts, the rest pooled
    let mut chi2 = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (k, &c) in counts.iter().enumerate() {
        let e = exact.probability(k) * reps as f64;
        if e >= 20.0 {
            chi2 += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            pooled_obs += c as f64;
            pooled_exp += e;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let df = (cells - 1) as f64;
    assert!(chi2 < df + 5.0 * (2.0 * df).sqrt(), "chi2 = {chi2} with {df} degrees of freedom");
}

#[test]
fn biased_counts_match_enumeration() {
    let recs = mc_estimate(&CRITICAL, 1, 100_000, 3, &McOptions::default()).unwrap();
    for (name, exact) in [("<(1+X_n)2^X_n N_n>", 5.12), ("<(1+X_n)2^X_n N_n^(2)>", 3.84)] {
        let r = record(&recs, name);
        assert!((r.estimate - exact).abs() < 3.0 * r.stderr, "{name}: {} +- {}", r.estimate, r.stderr);
    }
    let n0 = record(&recs, "<N_n^(0)>");
    assert!(n0.estimate <= 1.0 + 3.0 * n0.stderr);
}

#[test]
fn open_leaf_bound_holds_exactly_and_in_mc() {
    let law = ExactLaw::dirac_mixture(2, 1, 5).unwrap();
    for n in 1..=3 {
        let bf = brute_force_expectations(&law, n, DEFAULT_BUDGET).unwrap();
        for (ell, v) in &bf.n0_by_ell {
            assert!(to_f64(v) <= 0.5f64.powi(*ell as i32), "n = {n}, l = {ell}");
        }
    }
    let recs = mc_estimate(&CRITICAL, 8, 20_000, 4, &McOptions::default()).unwrap();
    for ell in 0..=5 {
        let r = record(&recs, &format!("<N_n^(0)1{{X_n={ell}}}>"));
        assert!(r.estimate <= 0.5f64.powi(ell) + 3.0 * r.stderr);
    }
}

#[test]
fn deterministic_tree_cannot_be_conditioned_elsewhere() {
    let law = InitialLaw::DiracMixture { a: 2, p: 1.0 };
    // X_3 = 2^3 + 1 = 9 always; target floor(1.0 * 3) = 3 never occurs
    assert!(matches!(
        conditional_tree_sample(&law, 3, 1.0, 0, 1000),
        Err(Error::AttemptsExhausted { accepted: 0, .. })
    ));
    assert!(conditional_tree_sample(&law, 3, 3.0, 0, 10).is_ok());
}

#[test]
fn conditioned_trees_hit_the_target() {
    let s = conditional_tree_sample(&CRITICAL, 10, 1.0, 2, 50_000_000).unwrap();
    assert_eq!(s.target, 10);
    assert!(s.trees.iter().all(|t| t.root() == 10));
}

#[test]
fn acceptance_rate_matches_exact_probability() {
    let (n, x) = (5, 0.6);
    let s = conditional_tree_samples(&CRITICAL, n, x, 400, 8, 10_000_000).unwrap();
    let p = exact_law_at(&CRITICAL, n).probability(3);
    let se = (p * (1.0 - p) / s.attempts as f64).sqrt();
    assert!((s.rate - p).abs() < 3.0 * se, "{} vs {p}", s.rate);
    assert!(matches!(
        conditional_tree_sample(&CRITICAL, 2, 10.0, 0, 10),
        Err(Error::Unreachable { .. })
    ));
}

#[test]
fn first_branching_height_law() {
    // one-sample Kolmogorov-Smirnov test of the first branching above the root
    let (x, eta, reps) = (0.5, 0.05, 10_000u64);
    let mut heights: Vec<f64> = (0..reps)
        .map(|r| match sample_branch(0.0, x, eta, &mut replica_rng(21, r)) {
            BranchEnd::Branch(s) => s,
            BranchEnd::Cutoff => 1.0 - eta,
        })
        .collect();
    heights.sort_by(f64::total_cmp);
    let cdf = |s: f64| {
        if s >= 1.0 - eta {
            1.0
        } else {
            1.0 - (-integrated_rate(0.0, x, s)).exp()
        }
    };
    let nf = reps as f64;
    let mut d: f64 = 0.0;
    for (i, &h) in heights.iter().enumerate() {
        if h < 1.0 - eta {
            let f = cdf(h);
            d = d.max((f - i as f64 / nf).abs()).max(((i + 1) as f64 / nf - f).abs());
        }
    }
    let cut = heights.iter().filter(|&&h| h >= 1.0 - eta).count() as f64 / nf;
    let p_cut = (-integrated_rate(0.0, x, 1.0 - eta)).exp();
    assert!(d < 1.63 / nf.sqrt(), "KS distance {d}");
    assert!((cut - p_cut).abs() < 3.0 * (p_cut * (1.0 - p_cut) / nf).sqrt() + 1e-12);
}

#[test]
fn leaf_count_grows_with_root_value() {
    let means: Vec<f64> = [0.05, 0.5, 2.0]
        .iter()
        .map(|&x| limit_tree_stats(x, 0.05, 300, 1).unwrap().leaf_count_mean)
        .collect();
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    // small roots still branch near the top: the rate grows like 1 / (1 - s)^2
    assert!(means[0] > 1.0);
}

#[test]
fn dirac_delta_closed_form() {
    for a in 1..=4usize {
        for i in 0..=20 {
            let p = i as f64 / 20.0;
            let law = InitialLaw::DiracMixture { a, p };
            let d = pmf_from_law(&law, 10, true).unwrap().delta();
            let want = p * (((a as f64) - 1.0) * 2f64.powi(a as i32) + 1.0) - 1.0;
            assert!((d - want).abs() < 1e-12, "a = {a}, p = {p}");
        }
    }
}

#[test]
fn critical_points_bracket_the_sign_change() {
    for a in 2..=4usize {
        let fam = InitialLaw::DiracMixture { a, p: 0.5 };
        let pc = find_pc(&fam, 10).unwrap().p_c;
        let delta = |p: f64| pmf_from_law(&fam.with_p(p), 10, true).unwrap().delta();
        assert!(delta(pc - 1e-9) < 0.0 && delta(pc + 1e-9) > 0.0);
    }
    let one = find_pc(&InitialLaw::DiracMixture { a: 1, p: 0.5 }, 10).unwrap();
    assert!(one.boundary && one.p_c == 1.0);
    let beta = find_pc(&InitialLaw::HeavyTailBeta { beta: 1.0, p: 0.5 }, 100);
    assert!(matches!(beta, Err(Error::Unsupported(m)) if m.contains("p_c = 0")));
}

#[test]
fn free_energy_brackets_are_nested() {
    let pmf = pmf_from_law(&InitialLaw::DiracMixture { a: 2, p: 0.3 }, 10, false).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for n_max in [5, 10, 20, 40] {
        let opts = FreeEnergyOptions {
            n_max,
            rel_tol: 0.0,
            ..FreeEnergyOptions::default()
        };
        let e = free_energy(&pmf, &opts).unwrap();
        assert!(0.0 <= e.lower && e.lower <= e.upper);
        if let Some((lo, hi)) = prev {
            assert!(e.lower >= lo && e.upper <= hi);
        }
        prev = Some((e.lower, e.upper));
    }
}

#[test]
fn heavy_tail_beta_has_positive_free_energy() {
    let fam = InitialLaw::HeavyTailBeta { beta: 1.0, p: 0.05 };
    let opts = FreeEnergyOptions {
        n_max: 400,
        ..FreeEnergyOptions::default()
    };
    let rows = scan_free_energy(&fam, &[0.05, 0.1, 0.2], 200, &opts, 0.1).unwrap();
    for r in &rows {
        assert!(r.estimate.lower > 0.0 && r.estimate.lower <= r.estimate.upper, "p = {}", r.p);
        assert!(r.flags.is_empty());
        assert!(r.delta.is_infinite());
    }
}

#[test]
fn exponent_fit_examples() {
    let pts: Vec<(f64, f64)> = (10..=100).map(|n| (n as f64, 4.0 / (n * n) as f64)).collect();
    assert!((exponent_fit(&pts, FitModel::LogLog).unwrap().slope + 2.0).abs() < 1e-9);
    let pts: Vec<(f64, f64)> = (10..=100).map(|n| (n as f64, 0.7 * n as f64)).collect();
    assert!((exponent_fit(&pts, FitModel::LogLog).unwrap().slope - 1.0).abs() < 1e-9);
    let pts: Vec<(f64, f64)> = (1..=5).map(|n| (n as f64, 3.0)).collect();
    assert_eq!(exponent_fit(&pts, FitModel::LogLog).unwrap().slope, 0.0);
    assert!(exponent_fit(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0)], FitModel::LogLog).is_err());
}

#[test]
fn doubling_chain_mean() {
    let rows = evolve_trajectory(
        &TiltedPmf::dirac(2),
        5,
        TruncationPolicy::default(),
        &TrajectoryOptions::default(),
    )
    .unwrap();
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    assert_eq!(means, [2.0, 3.0, 5.0, 9.0, 17.0, 33.0]);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dr-lab"))
}

#[test]
fn cli_lists_experiments() {
    let out = bin().arg("list-experiments").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.contains("identity-check"));
}

#[test]
fn cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "experiment = \"open-branches\"\nreps = 500\n[family]\nkind = \"dirac-mixture\"\na = 2\np = 0.2\n\
         [options]\nn_list = [4]\nlambda_grid = [0.01]\n",
    )
    .unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .env("DR_LAB_THREADS", threads)
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--seed", "9", "--out"])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in ["mc.csv", "mc.json", "exp_moment.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"));
}

#[test]
fn cli_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"nope\"\n[family]\nkind = \"dirac-mixture\"\na = 2\np = 0.2\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = bin().env("DR_LAB_THREADS", "0").arg("list-experiments").output().unwrap();
    assert!(!out.status.success());
}
