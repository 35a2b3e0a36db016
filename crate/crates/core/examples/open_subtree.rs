//! One sampled tree and its open subtree: which leaves reach the root through
//! merges with `a + b >= 1`.

use dr_lab::tree::{open_subtree, sample_tree};
use dr_lab::InitialLaw;

fn main() -> dr_lab::Result<()> {
    let mut seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let law = InitialLaw::DiracMixture { a: 2, p: 0.2 };
    let n = 5;
    // first seed from the given one whose root survives
    let tree = loop {
        let t = sample_tree(&law, n, seed)?;
        if t.values[0] > 0 {
            break t;
        }
        seed += 1;
    };
    println!("seed {seed}");
    let open = open_subtree(&tree);
    let leaves = &tree.values[(1 << n) - 1..];
    let line: String = leaves
        .iter()
        .zip(&open.open_leaf_flags)
        .map(|(v, o)| if *o { format!("[{v}]") } else { format!(" {v} ") })
        .collect();
    println!("root value {}", tree.values[0]);
    println!("leaves (open in brackets):\n{line}");
    println!("N_n = {}, by value {:?}", open.n_total, open.n_by_value);
    println!("branching heights {:?}", open.branching_heights);
    Ok(())
}
