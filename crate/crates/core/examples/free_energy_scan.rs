//! Free-energy brackets above criticality and the essential-singularity fit
//! `ln ln(1/F)` against `ln delta`.

use dr_lab::criticality::{scan_free_energy, FreeEnergyOptions};
use dr_lab::experiments::p_for_deltas;
use dr_lab::fit::{exponent_fit, FitModel};
use dr_lab::InitialLaw;

fn main() -> dr_lab::Result<()> {
    let fam = InitialLaw::DiracMixture { a: 2, p: 1.0 };
    let deltas = [0.3, 0.4, 0.5, 0.6, 0.8, 1.0];
    let p = p_for_deltas(&fam, &deltas, 10)?;
    let opts = FreeEnergyOptions { n_max: 400, ..Default::default() };
    let rows = scan_free_energy(&fam, &p, 10, &opts, 0.1)?;
    println!("{:>8} {:>10} {:>12} {:>12} {:>6}", "delta", "p", "lower", "upper", "n");
    for r in &rows {
        let e = &r.estimate;
        println!("{:>8.3} {:>10.6} {:>12.4e} {:>12.4e} {:>6}", r.delta, r.p, e.lower, e.upper, e.generations);
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.delta, 0.5 * (r.estimate.lower + r.estimate.upper)))
        .collect();
    let fit = exponent_fit(&pts, FitModel::LogLogLog)?;
    println!("slope {:.4} +- {:.4}", fit.slope, fit.stderr);
    Ok(())
}
