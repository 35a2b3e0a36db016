//! Scaling function for several tail exponents and the profile match at one `n`.

use dr_lab::criticality::find_pc;
use dr_lab::scaling::{compare_profile, predicted_profile, residual, solve_f, ProfileNormalization};
use dr_lab::{evolve_trajectory_with, pmf_from_law, InitialLaw, TrajectoryOptions, TruncationPolicy};

fn main() -> dr_lab::Result<()> {
    let h = 1e-3;
    for alpha in [2.5, 3.0, 3.5, 4.0] {
        let sol = solve_f(alpha, 5.0, h)?;
        let res = residual(&sol).iter().fold(0.0f64, |m, r| m.max(r.abs()));
        println!(
            "alpha {alpha}: F(0) = {:.6}, F(1) = {:.6}, residual {res:.2e}, self-convergence {:.2e}",
            sol.f_values[0],
            sol.eval(1.0).unwrap(),
            sol.self_convergence
        );
    }

    let n = 300;
    let fam = InitialLaw::HeavyTailAlpha { alpha: 4.0, k_min: 2, p: 1.0 };
    let pc = find_pc(&fam, 4096)?.p_c;
    let pmf0 = pmf_from_law(&fam.with_p(pc), 4096, false)?;
    let mut last = None;
    evolve_trajectory_with(&pmf0, n, TruncationPolicy::default(), &TrajectoryOptions::default(), |g, pmf| {
        if g == n {
            last = Some(pmf.clone());
        }
    })?;
    let sol = solve_f(4.0, 5.0, h)?;
    let exact = last.expect("generation n is visited");
    for norm in [ProfileNormalization::FourOverNSquared, ProfileNormalization::SurvivalMatched] {
        let cmp = compare_profile(&exact, &predicted_profile(&sol, n, norm));
        println!("n = {n}, {norm:?}: sup {:.4}, total variation {:.3e}", cmp.sup_norm, cmp.total_variation);
    }
    Ok(())
}
