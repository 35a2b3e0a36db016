//! Seeded Monte Carlo of the open-branch observables with jackknife errors.

use dr_lab::montecarlo::{mc_estimate, McOptions};
use dr_lab::InitialLaw;

fn main() -> dr_lab::Result<()> {
    let law = InitialLaw::DiracMixture { a: 2, p: 0.2 };
    let recs = mc_estimate(&law, 8, 20_000, 1, &McOptions::default())?;
    for r in recs.iter().take(16) {
        println!("{:<28} {:>12.6} +- {:.6}", r.observable, r.estimate, r.stderr);
    }
    Ok(())
}
