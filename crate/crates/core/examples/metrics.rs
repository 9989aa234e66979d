//! Ranking and distribution metrics on hand-made inputs.

use std::collections::BTreeMap;

use mi_lattice::lattice::LatticeShape;
use mi_lattice::metrics::{ndcg_at_k, precision_at_k, spearman, tv_distance, upward_closure_accuracy};
use mi_lattice::{FeatureSubset, LevelBounds};

fn main() -> mi_lattice::Result<()> {
    let s = FeatureSubset::from_bits;
    let truth = [s(1), s(2), s(4)];
    let ranked = [s(1), s(8), s(2)];
    println!("nDCG@3 = {:.4}", ndcg_at_k(&ranked, &truth, 3)?);
    println!("precision@3 = {:.4}", precision_at_k(&ranked, &truth, 3)?);

    let a = [0.1, 0.2, 0.2, 0.3, 0.9];
    let b = [0.1, 0.5, 0.6, 0.8, 0.9];
    println!("TV over 20 bins = {:.4}", tv_distance(&a, &b, 20)?);
    println!("Spearman = {:.4}", spearman(&a, &b));

    // scores that grow with subset size respect upward closure everywhere
    let shape = LatticeShape::new(4, LevelBounds::full(4))?;
    let monotone: BTreeMap<_, _> = shape.subsets().iter().map(|&x| (x, x.level() as f64)).collect();
    let reversed: BTreeMap<_, _> = shape.subsets().iter().map(|&x| (x, -(x.level() as f64))).collect();
    for (name, scores) in [("monotone", &monotone), ("reversed", &reversed)] {
        let acc = upward_closure_accuracy(scores, &shape)?;
        println!("{name}: closure {:.2} over {} edges, per level {:?}", acc.overall, acc.edges, acc.per_level);
    }
    Ok(())
}
