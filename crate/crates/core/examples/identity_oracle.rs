//! Exact rational enumeration of small trees: the size-biased identity and
//! the bound on `<N^(0) 1{X = l}>`.

use dr_lab::oracle::{brute_force_expectations, ExactLaw, DEFAULT_BUDGET};

fn main() -> dr_lab::Result<()> {
    let law = ExactLaw::dirac_mixture(2, 1, 5)?;
    for n in 1..=3 {
        let bf = brute_force_expectations(&law, n, DEFAULT_BUDGET)?;
        println!(
            "n = {n}: {} configurations, <(1+X)2^X N> = {}, rhs = {}, equal = {}",
            bf.configurations,
            bf.biased_total,
            bf.rhs_total,
            bf.biased_total == bf.rhs_total
        );
        for (ell, v) in &bf.n0_by_ell {
            println!("    <N^(0) 1{{X = {ell}}}> = {v}  (bound 1/{})", 1u64 << ell);
        }
    }
    Ok(())
}
