//! Critical mixture weights for the built-in families, and the sign of `delta` around them.

use dr_lab::criticality::find_pc;
use dr_lab::{pmf_from_law, InitialLaw};

fn main() -> dr_lab::Result<()> {
    let families = [
        InitialLaw::DiracMixture { a: 2, p: 0.5 },
        InitialLaw::DiracMixture { a: 3, p: 0.5 },
        InitialLaw::HeavyTailAlpha { alpha: 3.0, k_min: 2, p: 0.5 },
        InitialLaw::HeavyTailAlpha { alpha: 4.0, k_min: 2, p: 0.5 },
    ];
    println!("{:<18} {:>14} {:>12} {:>12}", "family", "p_c", "delta(0.9p)", "delta(1.1p)");
    for fam in families {
        let cp = find_pc(&fam, 4096)?;
        let below = pmf_from_law(&fam.with_p(0.9 * cp.p_c), 4096, false)?.delta();
        let above = pmf_from_law(&fam.with_p((1.1 * cp.p_c).min(1.0)), 4096, false)?.delta();
        println!("{:<18} {:>14.10} {:>12.3e} {:>12.3e}", fam.name(), cp.p_c, below, above);
    }
    Ok(())
}
