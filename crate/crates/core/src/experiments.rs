//! Named experiments run from a [`RunConfig`].

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::BigRational;
use serde::Serialize;

use crate::config::RunConfig;
use crate::criticality::{scan_free_energy, scan_record, ScanRow, SCAN_HEADER};
use crate::error::{Error, Result};
use crate::fit::{exponent_fit, ExponentFit, FitModel};
use crate::law::{pmf_from_law, InitialLaw};
use crate::limit_tree::{eta_sensitivity, histogram_tv, sample_limit_tree, stats_records, HEIGHT_BINS, STATS_HEADER};
use crate::montecarlo::{conditional_tree_samples, mc_estimate, McOptions, McRecord};
use crate::oracle::{brute_force_expectations, to_f64, ExactLaw, DEFAULT_BUDGET};
use crate::output::{fmt_f64, write_csv, write_json, OutputDir};
use crate::scaling::{compare_profile, predicted_profile, residual, solve_f, ProfileComparison, ProfileNormalization};
use crate::trajectory::{evolve_trajectory_with, write_trajectory_csv, TrajectoryOptions, TrajectorySummary};
use crate::tree::open_subtree;

/// Experiment names with one-line descriptions.
pub const EXPERIMENTS: [(&str, &str); 12] = [
    ("survival-decay", "P(X_n > 0) and n^2 P(X_n > 0) along a critical trajectory"),
    ("mean-decay", "<X_n>, n^2 <X_n> and <X_n> / 2^n along a trajectory"),
    ("mgf-limit", "<2^X_n> and n (<2^X_n> - 1)"),
    ("product-growth", "product of <2^X_i> over i < n with a log-log fit"),
    ("conditional-law", "P(X_n = k | X_n > 0) against 2^-k"),
    ("tilted-moments", "<X_n^q 2^X_n> with a log-log fit per q"),
    ("free-energy-scaling", "free-energy brackets over a delta grid, fit of ln ln(1/F) against ln delta"),
    ("no-transition", "free-energy brackets of the heavy-tail-beta family, fit of ln ln(1/F) against ln p"),
    ("open-branches", "Monte Carlo open-subtree observables and the exp(lambda N_n) profile"),
    ("identity-check", "exact biased open-leaf identity by enumeration"),
    ("scaling-profile", "scaling function F and predicted against exact critical profiles"),
    ("limit-tree-stats", "continuum limit tree statistics, optionally against conditioned trees"),
];

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    files: &'a [String],
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub quantity: String,
    pub model: FitModel,
    pub fit: ExponentFit,
}

/// Runs `config` and writes its outputs plus `manifest.json` into `out`.
/// Returns the names of the files written.
pub fn run(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut dir = OutputDir::create(out)?;
    match config.experiment.as_str() {
        "survival-decay" => survival_decay(config, &mut dir)?,
        "mean-decay" => mean_decay(config, &mut dir)?,
        "mgf-limit" => mgf_limit(config, &mut dir)?,
        "product-growth" => product_growth(config, &mut dir)?,
        "conditional-law" => conditional_law(config, &mut dir)?,
        "tilted-moments" => tilted_moments(config, &mut dir)?,
        "free-energy-scaling" => free_energy_scaling(config, &mut dir)?,
        "no-transition" => no_transition(config, &mut dir)?,
        "open-branches" => open_branches(config, &mut dir)?,
        "identity-check" => identity_check(config, &mut dir)?,
        "scaling-profile" => scaling_profile(config, &mut dir)?,
        "limit-tree-stats" => limit_tree_stats_experiment(config, &mut dir)?,
        other => return Err(Error::UnknownExperiment(other.to_string())),
    }
    // the output directory does not affect results, so it stays out of the manifest
    let recorded = RunConfig {
        out: None,
        ..config.clone()
    };
    let files = dir.files().to_vec();
    write_json(
        dir.root().join("manifest.json"),
        &Manifest {
            experiment: &config.experiment,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: &recorded,
            files: &files,
        },
    )?;
    let mut all = files;
    all.push("manifest.json".into());
    Ok(all)
}

fn trajectory(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<TrajectorySummary>> {
    trajectory_with(cfg, dir, |_, _| {})
}

fn trajectory_with<F: FnMut(usize, &crate::pmf::TiltedPmf)>(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    visit: F,
) -> Result<Vec<TrajectorySummary>> {
    let opts = TrajectoryOptions {
        m: cfg.options.m,
        moments: cfg.options.moments.clone(),
        conditional_cap: cfg.options.conditional_cap,
        ..TrajectoryOptions::default()
    };
    let rows = evolve_trajectory_with(&cfg.family.pmf()?, cfg.n_max, cfg.truncation, &opts, visit)?;
    let file = std::fs::File::create(dir.file("trajectory.csv"))?;
    write_trajectory_csv(&rows, std::io::BufWriter::new(file))?;
    Ok(rows)
}

fn window(cfg: &RunConfig, default: (f64, f64)) -> (f64, f64) {
    cfg.options.fit_window.unwrap_or(default)
}

fn fit_in(points: &[(f64, f64)], (lo, hi): (f64, f64), model: FitModel, quantity: &str) -> Result<FitReport> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= lo && p.0 <= hi).collect();
    Ok(FitReport {
        quantity: quantity.to_string(),
        model,
        fit: exponent_fit(&pts, model)?,
    })
}

fn series(rows: &[TrajectorySummary], f: impl Fn(&TrajectorySummary) -> f64) -> Vec<(f64, f64)> {
    rows.iter().skip(1).map(|r| (r.generation as f64, f(r))).collect()
}

fn survival_decay(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let n = r.generation as f64;
            vec![r.generation.to_string(), fmt_f64(r.survival), fmt_f64(n * n * r.survival)]
        })
        .collect();
    write_csv(dir.file("survival.csv"), &["n", "survival", "n2_survival"], &table)?;
    let n = cfg.n_max as f64;
    let fit = fit_in(&series(&rows, |r| r.survival), window(cfg, (n / 4.0, n)), FitModel::LogLog, "survival")?;
    write_json(dir.file("fits.json"), &[fit])
}

fn mean_decay(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let n = r.generation as f64;
            vec![
                r.generation.to_string(),
                fmt_f64(r.mean),
                fmt_f64(n * n * r.mean),
                fmt_f64(crate::numeric::ldexp(r.mean, -(r.generation as i64))),
            ]
        })
        .collect();
    write_csv(dir.file("mean.csv"), &["n", "mean", "n2_mean", "mean_over_2n"], &table)?;
    let n = cfg.n_max as f64;
    let fit = fit_in(&series(&rows, |r| r.mean), window(cfg, (n / 4.0, n)), FitModel::LogLog, "mean")?;
    write_json(dir.file("fits.json"), &[fit])
}

#[derive(Serialize)]
struct MgfSummary {
    /// Smallest `n0` with `<2^X_n>` non-increasing for all `n >= n0`.
    monotone_from: usize,
    fits: Vec<FitReport>,
}

fn mgf_limit(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let n = r.generation as f64;
            vec![r.generation.to_string(), fmt_f64(r.h2), fmt_f64(n * (r.h2 - 1.0))]
        })
        .collect();
    write_csv(dir.file("mgf.csv"), &["n", "h2", "n_h2_minus_1"], &table)?;
    let mut monotone_from = rows.len() - 1;
    while monotone_from > 0 && rows[monotone_from].h2 <= rows[monotone_from - 1].h2 {
        monotone_from -= 1;
    }
    let n = cfg.n_max as f64;
    let fit = fit_in(&series(&rows, |r| r.h2 - 1.0), window(cfg, (n / 4.0, n)), FitModel::LogLog, "h2_minus_1")?;
    write_json(
        dir.file("summary.json"),
        &MgfSummary {
            monotone_from,
            fits: vec![fit],
        },
    )
}

fn product_growth(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.generation.to_string(), fmt_f64(r.h2_product)])
        .collect();
    write_csv(dir.file("product.csv"), &["n", "h2_product"], &table)?;
    let n = cfg.n_max as f64;
    let fit = fit_in(
        &series(&rows, |r| r.h2_product),
        window(cfg, (n / 4.0, n)),
        FitModel::LogLog,
        "h2_product",
    )?;
    write_json(dir.file("fits.json"), &[fit])
}

fn report_generations(cfg: &RunConfig) -> Vec<usize> {
    if cfg.options.n_list.is_empty() {
        vec![cfg.n_max]
    } else {
        cfg.options.n_list.iter().copied().filter(|&n| n <= cfg.n_max).collect()
    }
}

fn conditional_law(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let mut table = Vec::new();
    let mut sup = BTreeMap::new();
    for n in report_generations(cfg) {
        let mut worst: f64 = 0.0;
        for (i, &c) in rows[n].conditional_pmf.iter().enumerate() {
            let geo = 0.5f64.powi(i as i32 + 1);
            worst = worst.max((c - geo).abs());
            table.push(vec![n.to_string(), (i + 1).to_string(), fmt_f64(c), fmt_f64(geo), fmt_f64(c - geo)]);
        }
        sup.insert(n.to_string(), worst);
    }
    write_csv(dir.file("conditional.csv"), &["n", "k", "conditional", "geometric", "difference"], &table)?;
    write_json(dir.file("sup_error.json"), &sup)
}

fn tilted_moments(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let rows = trajectory(cfg, dir)?;
    let mut table = Vec::new();
    for r in &rows {
        for &(q, v) in &r.tilted_moments {
            table.push(vec![r.generation.to_string(), q.to_string(), fmt_f64(v)]);
        }
    }
    write_csv(dir.file("moments.csv"), &["n", "q", "moment"], &table)?;
    let n = cfg.n_max as f64;
    let mut fits = Vec::new();
    for (j, &q) in cfg.options.moments.iter().enumerate() {
        if q < 2 {
            // <X 2^X> equals <2^X> at criticality and tends to 1
            continue;
        }
        let pts = series(&rows, |r| r.tilted_moments[j].1);
        fits.push(fit_in(&pts, window(cfg, (n / 4.0, n)), FitModel::LogLog, &format!("moment_{q}"))?);
    }
    write_json(dir.file("fits.json"), &fits)
}

/// Mixture weights giving the target `delta` values: `delta` is affine in `p`,
/// equal to -1 at `p = 0`.
pub fn p_for_deltas(law: &InitialLaw, deltas: &[f64], k_cap: usize) -> Result<Vec<f64>> {
    let d1 = pmf_from_law(&law.with_p(1.0), k_cap, true)?.delta();
    deltas
        .iter()
        .map(|&d| {
            let p = (d + 1.0) / (d1 + 1.0);
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(Error::Config(format!("delta = {d} is not reachable with p in [0, 1]")))
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ScanFit {
    fit: Option<FitReport>,
    /// Rows left out because their lower bound is zero.
    excluded: usize,
    /// `1 / (2 - beta)` for the heavy-tail-beta family.
    #[serde(skip_serializing_if = "Option::is_none")]
    theta1_reference: Option<f64>,
}

fn scan_and_fit(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    law: &InitialLaw,
    p_values: &[f64],
    abscissa: impl Fn(&ScanRow) -> f64,
    win: (f64, f64),
    quantity: &str,
) -> Result<ScanFit> {
    let rows = scan_free_energy(law, p_values, cfg.family.k_cap, &cfg.options.free_energy, cfg.options.flag_width)?;
    write_csv(dir.file("scan.csv"), &SCAN_HEADER, &rows.iter().map(scan_record).collect::<Vec<_>>())?;
    let usable: Vec<&ScanRow> = rows.iter().filter(|r| r.estimate.lower > 0.0).collect();
    let pts: Vec<(f64, f64)> = usable
        .iter()
        .map(|r| (abscissa(r), 0.5 * (r.estimate.lower + r.estimate.upper)))
        .collect();
    let in_window = pts.iter().filter(|p| p.0 >= win.0 && p.0 <= win.1).count();
    let fit = if in_window >= 3 {
        Some(fit_in(&pts, win, FitModel::LogLogLog, quantity)?)
    } else {
        None
    };
    Ok(ScanFit {
        fit,
        excluded: rows.len() - usable.len(),
        theta1_reference: None,
    })
}

fn free_energy_scaling(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let law = cfg.family.law;
    law.validate()?;
    let p_values = if cfg.options.p_grid.is_empty() {
        p_for_deltas(&law, &cfg.options.delta_grid, cfg.family.k_cap)?
    } else {
        cfg.options.p_grid.clone()
    };
    let report = scan_and_fit(cfg, dir, &law, &p_values, |r| r.delta, window(cfg, (0.3, 1.0)), "free_energy")?;
    write_json(dir.file("fit.json"), &report)
}

fn no_transition(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let mut law = cfg.family.law;
    if let (InitialLaw::HeavyTailBeta { beta, .. }, Some(b)) = (&mut law, cfg.options.beta) {
        *beta = b;
    }
    let InitialLaw::HeavyTailBeta { beta, .. } = law else {
        return Err(Error::Config("no-transition needs the heavy-tail-beta family".into()));
    };
    law.validate()?;
    let mut report = scan_and_fit(
        cfg,
        dir,
        &law,
        &cfg.options.p_grid,
        |r| r.p,
        window(cfg, (0.0, 1.0)),
        "free_energy",
    )?;
    report.theta1_reference = Some(1.0 / (2.0 - beta));
    write_json(dir.file("fit.json"), &report)
}

#[derive(Serialize)]
struct FormuleRow {
    n: usize,
    lambda: f64,
    estimate: f64,
    stderr: f64,
    predicted: f64,
}

/// `-4/n^2 + 3 A lambda / sin^2(n sqrt(3 A lambda) / 2)`, continued to
/// `lambda < 0` through `sinh`.
pub fn exp_moment_prediction(n: usize, a: f64, lambda: f64) -> f64 {
    let nf = n as f64;
    let u = 3.0 * a * lambda;
    let tail = if u > 0.0 {
        u / (0.5 * nf * u.sqrt()).sin().powi(2)
    } else if u < 0.0 {
        -u / (0.5 * nf * (-u).sqrt()).sinh().powi(2)
    } else {
        4.0 / (nf * nf)
    };
    -4.0 / (nf * nf) + tail
}

fn open_branches(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let law = cfg.family.resolve()?;
    let depths = if cfg.options.n_list.is_empty() {
        vec![5, 10, 15]
    } else {
        cfg.options.n_list.clone()
    };
    let opts = McOptions {
        k_cap: cfg.family.k_cap,
        conditional_cap: cfg.options.conditional_cap,
        lambdas: cfg.options.lambda_grid.clone(),
        ..McOptions::default()
    };
    let mut records: Vec<McRecord> = Vec::new();
    for &n in &depths {
        records.extend(mc_estimate(&law, n, cfg.reps, cfg.seed, &opts)?);
    }
    let table: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.observable.clone(),
                r.n.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.stderr),
                r.reps.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    write_csv(dir.file("mc.csv"), &["observable", "n", "estimate", "stderr", "reps", "seed"], &table)?;
    write_json(dir.file("mc.json"), &records)?;
    if !opts.lambdas.is_empty() {
        // two stages: A is the mean open-leaf count at the deepest level
        let deepest = *depths.iter().max().unwrap();
        let a = records
            .iter()
            .find(|r| r.n == deepest && r.observable == "<N_n>")
            .map(|r| r.estimate)
            .unwrap_or(f64::NAN);
        let mut rows = Vec::new();
        for &n in &depths {
            for &l in &opts.lambdas {
                let name = format!("<exp({l}N_n)>");
                if let Some(r) = records.iter().find(|r| r.n == n && r.observable == name) {
                    rows.push(FormuleRow {
                        n,
                        lambda: l,
                        estimate: r.estimate - 1.0,
                        stderr: r.stderr,
                        predicted: exp_moment_prediction(n, a, l),
                    });
                }
            }
        }
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_f64(r.lambda),
                    fmt_f64(r.estimate),
                    fmt_f64(r.stderr),
                    fmt_f64(r.predicted),
                    fmt_f64(a),
                ]
            })
            .collect();
        write_csv(
            dir.file("exp_moment.csv"),
            &["n", "lambda", "mgf_minus_1", "stderr", "predicted", "a_estimate"],
            &table,
        )?;
    }
    Ok(())
}

/// Exact version of the configured law; the critical dirac mixture gets its
/// rational `p_c = 1 / ((a - 1) 2^a + 1)`.
pub fn exact_law(cfg: &RunConfig) -> Result<ExactLaw> {
    match cfg.family.law {
        InitialLaw::DiracMixture { a, .. } if cfg.family.critical => {
            let den = ((a as i64 - 1) << a) + 1;
            ExactLaw::dirac_mixture(a as u64, 1, den)
        }
        _ => ExactLaw::from_pmf(&cfg.family.pmf()?),
    }
}

fn identity_check(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let law = exact_law(cfg)?;
    let depths = if cfg.options.n_list.is_empty() {
        vec![1, 2, 3]
    } else {
        cfg.options.n_list.clone()
    };
    let mut table = Vec::new();
    let mut bound = Vec::new();
    let row = |n: usize, k: String, lhs: &BigRational, rhs: &BigRational| {
        vec![
            n.to_string(),
            k,
            lhs.to_string(),
            rhs.to_string(),
            fmt_f64(to_f64(lhs)),
            fmt_f64(to_f64(rhs)),
            (lhs == rhs).to_string(),
        ]
    };
    for n in depths {
        let bf = brute_force_expectations(&law, n, DEFAULT_BUDGET)?;
        table.push(row(n, "total".into(), &bf.biased_total, &bf.rhs_total));
        for (k, lhs) in &bf.biased_by_k {
            table.push(row(n, k.to_string(), lhs, &bf.rhs_by_k[k]));
        }
        for (ell, v) in &bf.n0_by_ell {
            bound.push(vec![
                n.to_string(),
                ell.to_string(),
                v.to_string(),
                fmt_f64(to_f64(v)),
                fmt_f64(0.5f64.powi(*ell as i32)),
            ]);
        }
    }
    write_csv(
        dir.file("identity.csv"),
        &["n", "k", "lhs", "rhs", "lhs_value", "rhs_value", "equal"],
        &table,
    )?;
    write_csv(dir.file("n0_bound.csv"), &["n", "ell", "exact", "value", "bound"], &bound)
}

#[derive(Serialize)]
struct SolverReport {
    alpha: f64,
    h: f64,
    x_max: f64,
    f0: f64,
    self_convergence: f64,
    max_residual: f64,
    flags: Vec<String>,
}

#[derive(Serialize)]
struct ProfileReport {
    normalization: ProfileNormalization,
    comparison: ProfileComparison,
}

fn scaling_profile(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let alpha = cfg.options.alpha.unwrap_or(match cfg.family.law {
        InitialLaw::HeavyTailAlpha { alpha, .. } => alpha,
        _ => 4.0,
    });
    let sol = solve_f(alpha, cfg.options.x_max, cfg.options.h)?;
    let mut csv_out = Vec::new();
    sol.write_csv(&mut csv_out)?;
    std::fs::write(dir.file("scaling.csv"), csv_out)?;
    let res = residual(&sol);
    write_json(
        dir.file("solver.json"),
        &SolverReport {
            alpha,
            h: sol.h,
            x_max: sol.x_max,
            f0: sol.f_values[0],
            self_convergence: sol.self_convergence,
            max_residual: res.iter().fold(0.0, |m, r| m.max(r.abs())),
            flags: sol.flags.clone(),
        },
    )?;
    let norms = match cfg.options.normalization {
        Some(n) => vec![n],
        None => vec![ProfileNormalization::FourOverNSquared, ProfileNormalization::SurvivalMatched],
    };
    let wanted = report_generations(cfg);
    let mut reports = Vec::new();
    trajectory_with(cfg, dir, |n, pmf| {
        if wanted.contains(&n) && n > 0 {
            for &norm in &norms {
                let pred = predicted_profile(&sol, n, norm);
                reports.push(ProfileReport {
                    normalization: norm,
                    comparison: compare_profile(pmf, &pred),
                });
            }
        }
    })?;
    let summary: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.comparison.n.to_string(),
                serde_json::to_value(r.normalization)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                fmt_f64(r.comparison.sup_norm),
                fmt_f64(r.comparison.total_variation),
            ]
        })
        .collect();
    write_csv(
        dir.file("profile_summary.csv"),
        &["n", "normalization", "sup_norm", "total_variation"],
        &summary,
    )?;
    write_json(dir.file("profile.json"), &reports)
}

#[derive(Serialize)]
struct ConditionalComparison {
    n: usize,
    target: u64,
    trees: usize,
    attempts: u64,
    acceptance_rate: f64,
    leaf_count_mean: f64,
    /// Total variation between leaf-count laws.
    leaf_count_tv: f64,
    /// Total variation between binned branching-height laws.
    branching_height_tv: f64,
}

fn limit_tree_stats_experiment(cfg: &RunConfig, dir: &mut OutputDir) -> Result<()> {
    let o = &cfg.options;
    let stats = eta_sensitivity(o.x, o.eta, cfg.reps, cfg.seed)?;
    let mut rows = stats_records(&stats[0]);
    rows.extend(stats_records(&stats[1]));
    write_csv(dir.file("stats.csv"), &STATS_HEADER, &rows)?;
    write_json(dir.file("tree.json"), &sample_limit_tree(o.x, o.eta, cfg.seed)?)?;
    if o.n_list.is_empty() || o.count == 0 {
        return Ok(());
    }
    let law = cfg.family.resolve()?;
    let limit_heights: BTreeMap<usize, u64> = stats[0]
        .branching_height_hist
        .iter()
        .enumerate()
        .map(|(b, &c)| (b, c))
        .collect();
    let mut out = Vec::new();
    for &n in &o.n_list {
        let sample = conditional_tree_samples(&law, n, o.x, o.count, cfg.seed, o.max_attempts)?;
        let mut counts = BTreeMap::new();
        let mut heights = BTreeMap::new();
        let mut total = 0u64;
        for t in &sample.trees {
            let open = open_subtree(t);
            total += open.n_total;
            *counts.entry(open.n_total as usize).or_insert(0u64) += 1;
            for h in open.branching_heights {
                let bin = ((h * HEIGHT_BINS as f64) as usize).min(HEIGHT_BINS - 1);
                *heights.entry(bin).or_insert(0u64) += 1;
            }
        }
        out.push(ConditionalComparison {
            n,
            target: sample.target,
            trees: sample.trees.len(),
            attempts: sample.attempts,
            acceptance_rate: sample.rate,
            leaf_count_mean: total as f64 / sample.trees.len() as f64,
            leaf_count_tv: histogram_tv(&counts, &stats[0].leaf_count_hist),
            branching_height_tv: histogram_tv(&heights, &limit_heights),
        });
    }
    write_json(dir.file("comparison.json"), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> RunConfig {
        RunConfig::from_toml(text).unwrap()
    }

    #[test]
    fn prediction_is_continuous_at_zero() {
        let n = 10;
        assert_eq!(exp_moment_prediction(n, 2.0, 0.0), 0.0);
        assert!(exp_moment_prediction(n, 2.0, 1e-9).abs() < 1e-6);
        assert!(exp_moment_prediction(n, 2.0, -1e-9).abs() < 1e-6);
    }

    #[test]
    fn deltas_map_to_weights() {
        let law = InitialLaw::DiracMixture { a: 2, p: 0.5 };
        let p = p_for_deltas(&law, &[0.5, 0.75, 1.0], 10).unwrap();
        for (got, want) in p.iter().zip([0.3, 0.35, 0.4]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(p_for_deltas(&law, &[5.0], 10).is_err());
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let cfg = config("experiment = \"nope\"\n[family]\nkind = \"dirac-mixture\"\na = 2\np = 0.2\n");
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run(&cfg, dir.path()), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn identity_table_is_exact() {
        let cfg = config(
            "experiment = \"identity-check\"\n[family]\nkind = \"dirac-mixture\"\na = 2\np = 0.5\ncritical = true\n",
        );
        let dir = tempfile::tempdir().unwrap();
        let files = run(&cfg, dir.path()).unwrap();
        assert_eq!(files, ["identity.csv", "n0_bound.csv", "manifest.json"]);
        let text = std::fs::read_to_string(dir.path().join("identity.csv")).unwrap();
        assert!(text.contains("1,total,128/25,128/25,5.12,5.12,true"));
        assert!(text.lines().skip(1).all(|l| l.ends_with("true")));
    }

    #[test]
    fn survival_run_is_reproducible() {
        let cfg = config(
            "experiment = \"survival-decay\"\nn_max = 40\n[family]\nkind = \"dirac-mixture\"\na = 2\np = 0.2\n",
        );
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let files = run(&cfg, a.path()).unwrap();
        run(&cfg, b.path()).unwrap();
        for f in files {
            assert_eq!(
                std::fs::read(a.path().join(&f)).unwrap(),
                std::fs::read(b.path().join(&f)).unwrap()
            );
        }
    }
}
