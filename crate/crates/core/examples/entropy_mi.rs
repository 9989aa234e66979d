//! Entropy and mutual information on the small readmission table, computed
//! both from scratch and through the shared entropy store.

use std::path::PathBuf;

use mi_lattice::data::{partition_subgroups, Dataset, Schema};
use mi_lattice::info::{entropy_of_columns, mi_direct, mi_shared, EntropyStore};
use mi_lattice::{FeatureSubset, LevelBounds};

fn main() -> mi_lattice::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let schema = Schema::load(dir.join("readmission.schema.json"))?;
    let data = Dataset::load(dir.join("readmission.csv"), &schema)?.discretize_at("Age", &[40.0])?;

    let h = entropy_of_columns(&[data.target.cells().unwrap()])?;
    println!("H(Readmission) = {h:.4} bits");

    let (spec, groups) = partition_subgroups(&data, &["Ethnicity"])?;
    let names = &spec.selection_features;
    for (p, sg) in spec.predicates.iter().zip(&groups) {
        let store = EntropyStore::build(sg, LevelBounds::full(sg.n_features()))?;
        println!("\n{p}: {} rows, {} subsets with stored entropies", sg.n_rows(), store.len());
        for f in 0..names.len() {
            let s = FeatureSubset::from_bits(1 << f);
            match (mi_shared(&store, s), mi_direct(sg, s)) {
                (Ok(a), Ok(b)) => println!("  I({}; Y) = {a:.4} (direct {b:.4})", names[f]),
                _ => println!("  I({}; Y) not computable here", names[f]),
            }
        }
    }
    Ok(())
}
