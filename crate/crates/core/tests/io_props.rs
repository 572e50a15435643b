//! Newick round-trip isomorphism over a random corpus.
//!
//! The parser numbers tips by order of appearance, so indices need not
//! survive a round trip; the tree shape, taxon set, and branch lengths must.

mod common;

use common::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ctmcgp_core::io::newick::{parse_newick, write_newick};
use ctmcgp_core::phylo::Phylogeny;

/// Canonical signature: per node, the sorted taxon set below it together
/// with the branch length above it, rounded to 12 decimals.
fn signature(tree: &Phylogeny) -> Vec<String> {
    fn descend(tree: &Phylogeny, v: usize, out: &mut Vec<String>) -> Vec<String> {
        let mut taxa = match tree.children(v) {
            None => vec![tree.tip_labels()[v].clone()],
            Some((l, r)) => {
                let mut a = descend(tree, l, out);
                a.extend(descend(tree, r, out));
                a.sort();
                a
            }
        };
        let branch = if v == tree.root() {
            0.0
        } else {
            tree.branch_length(v)
        };
        out.push(format!("{}|{branch:.12}", taxa.join(",")));
        taxa.sort();
        taxa
    }
    let mut out = Vec::new();
    descend(tree, tree.root(), &mut out);
    out.sort();
    out
}

#[test]
fn newick_round_trip_on_100_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for instance in 0..100 {
        let n_tips = rng.gen_range(2..=64);
        let tree = random_tree(n_tips, 3.0, &mut rng);
        let text = write_newick(&tree);
        let back = parse_newick(&text).unwrap();
        assert_eq!(tree.n_tips(), back.n_tips(), "instance {instance}");
        assert_eq!(
            signature(&tree),
            signature(&back),
            "instance {instance}: round trip is not isomorphic"
        );
        // serialization is a fixed point after one round trip
        assert_eq!(text, write_newick(&back), "instance {instance}");
    }
}
