//! Builds a multiplex lattice over three subgroups, one of which lacks a
//! feature, and walks the neighbourhood of a node.

use mi_lattice::lattice::{structural_counts, EdgeFamily, MultiplexGraph, NodeId};
use mi_lattice::{FeatureSubset, LevelBounds};

fn main() -> mi_lattice::Result<()> {
    let n = 5;
    for k in 1..=n {
        let (nodes, inter, intra) = structural_counts(k, LevelBounds::full(k));
        println!("n={k}: {nodes} nodes, {inter} inter-level, {intra} intra-level edges");
    }

    let full = FeatureSubset::full(n);
    let present = vec![full, full.without(2), full];
    let graph = MultiplexGraph::from_masks(n, present, LevelBounds::new(1, 3))?;
    println!("\nlevels 1..=3, {} subgroups, {} nodes", graph.n_subgroups(), graph.n_nodes());
    for i in 0..graph.n_subgroups() {
        let computable = graph.nodes().filter(|v| v.subgroup == i && graph.labelable(*v)).count();
        println!("subgroup {i}: {computable} computable subsets");
    }

    let v = NodeId::new(1, FeatureSubset::from_bits(0b00011));
    for family in [EdgeFamily::InterLevelDown, EdgeFamily::InterLevelUp, EdgeFamily::IntraLevel, EdgeFamily::InterLattice] {
        let nb = graph.neighbors(v, family)?;
        let shown: Vec<String> = nb.iter().map(|u| format!("g{}:{}", u.subgroup, u.subset.to_bit_string(n))).collect();
        println!("{family:?}: {}", shown.join(" "));
    }
    Ok(())
}
