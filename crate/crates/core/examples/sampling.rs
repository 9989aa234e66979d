//! Compares the random-walk, uniform and level-biased samplers by how well
//! the MI values they pick follow the full population of subsets.

use std::collections::BTreeMap;

use mi_lattice::info::{mi_shared, EntropyStore};
use mi_lattice::metrics::{tv_distance, TV_BINS};
use mi_lattice::sampler::{arbitrary_sample, budget_from_rate, level_biased_sample, randwalk_sample};
use mi_lattice::synth::{self, SynthConfig};
use mi_lattice::{FeatureSubset, LevelBounds};

fn main() -> mi_lattice::Result<()> {
    let cfg = SynthConfig {
        n_rows: 5000,
        n_subgroups: 1,
        missing_p: None,
        ..SynthConfig::default()
    };
    let sg = synth::generate(&cfg)?.subgroups.remove(0);
    let n = cfg.n_features();
    let bounds = LevelBounds::full(n);
    let store = EntropyStore::build(&sg, bounds)?;
    let mi: BTreeMap<FeatureSubset, f64> = store.subsets().map(|s| Ok((s, mi_shared(&store, s)?))).collect::<mi_lattice::Result<_>>()?;
    let population: Vec<f64> = mi.values().copied().collect();
    let full = FeatureSubset::full(n);

    println!("{:>6} {:>10} {:>10} {:>10}", "budget", "randwalk", "uniform", "biased");
    for rate in [0.1, 0.25, 0.5, 0.75] {
        let b = budget_from_rate(rate, full, bounds)?;
        let walk = randwalk_sample(full, b, bounds, 1)?;
        let uniform = arbitrary_sample(full, b, bounds, 1)?;
        let biased = level_biased_sample(full, b, bounds, 2.0, 1)?;
        let tv = |s: &[FeatureSubset]| {
            let v: Vec<f64> = s.iter().map(|x| mi[x]).collect();
            tv_distance(&v, &population, TV_BINS)
        };
        println!(
            "{rate:>6} {:>10.4} {:>10.4} {:>10.4}   (walk took {} steps for {b} subsets)",
            tv(&walk.sampled)?,
            tv(&uniform.sampled)?,
            tv(&biased.sampled)?,
            walk.steps
        );
    }
    Ok(())
}
