//! Rejection sampling of trees whose root value is `floor(x n)`.

use dr_lab::montecarlo::{conditional_tree_samples, tree_dump};
use dr_lab::tree::open_subtree;
use dr_lab::InitialLaw;

fn main() -> dr_lab::Result<()> {
    let law = InitialLaw::DiracMixture { a: 2, p: 0.2 };
    let s = conditional_tree_samples(&law, 8, 0.5, 50, 5, 10_000_000)?;
    println!(
        "target {} accepted {} of {} attempts (rate {:.3e} +- {:.1e})",
        s.target,
        s.trees.len(),
        s.attempts,
        s.rate,
        s.rate_stderr
    );
    let open: Vec<u64> = s.trees.iter().map(|t| open_subtree(t).n_total).collect();
    println!("open leaves per tree: {open:?}");
    println!("{}", serde_json::to_string(&tree_dump(&s.trees[0]))?);
    Ok(())
}
