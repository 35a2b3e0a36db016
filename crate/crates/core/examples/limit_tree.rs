//! Continuum limit trees from root value `x`: leaf-count law and first branching heights.

use dr_lab::limit_tree::{limit_tree_stats, sample_limit_tree};

fn main() -> dr_lab::Result<()> {
    let eta = 0.05;
    let tree = sample_limit_tree(1.0, eta, 3)?;
    println!("one tree from x = 1: {} internal nodes, {} leaves", tree.nodes.len() - 1, tree.leaves.len());
    for x in [0.25, 0.5, 1.0, 2.0] {
        let s = limit_tree_stats(x, eta, 500, 11)?;
        println!(
            "x = {x}: mean leaves {:.1} +- {:.1}, mean leaf value {:.4} +- {:.4}",
            s.leaf_count_mean, s.leaf_count_stderr, s.leaf_value_mean, s.leaf_value_stderr
        );
    }
    Ok(())
}
