//! Critical trajectory of `{0: 4/5, 2: 1/5}`: survival, `<2^X>` and the
//! conditional law against their asymptotic forms.

use std::time::Instant;

use dr_lab::{evolve_trajectory, pmf_from_law, InitialLaw, TrajectoryOptions, TruncationPolicy};

fn main() -> dr_lab::Result<()> {
    let n_max: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let pmf0 = pmf_from_law(&InitialLaw::DiracMixture { a: 2, p: 0.2 }, 2, false)?;
    let start = Instant::now();
    let rows = evolve_trajectory(&pmf0, n_max, TruncationPolicy::default(), &TrajectoryOptions::default())?;
    println!("{:>6} {:>10} {:>10} {:>12} {:>10} {:>8}", "n", "n^2 P", "n(H2-1)", "delta", "sup|cond|", "k_max");
    for r in rows.iter().filter(|r| r.generation % (n_max / 10).max(1) == 0) {
        let n = r.generation as f64;
        let sup = r
            .conditional_pmf
            .iter()
            .enumerate()
            .map(|(i, c)| (c - 0.5f64.powi(i as i32 + 1)).abs())
            .fold(0.0, f64::max);
        println!(
            "{:>6} {:>10.5} {:>10.5} {:>12.3e} {:>10.2e} {:>8}",
            r.generation,
            n * n * r.survival,
            n * (r.h2 - 1.0),
            r.delta,
            sup,
            r.k_max
        );
    }
    let last = rows.last().unwrap();
    println!(
        "lost mass {:.3e}, lost tilted mass {:.3e}, {:.2?}",
        last.lost_mass,
        last.lost_tilted_mass,
        start.elapsed()
    );
    Ok(())
}
