//! Wall-clock sweeps: features, subgroups, missingness, budget, and the
//! shared-entropy MI construction against per-subset recomputation.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::info::{mi_direct, mi_shared, EntropyStore};
use crate::pipeline::{self, Prepared};
use crate::subset::{subsets_within, FeatureSubset, LevelBounds};
use crate::synth::{self, SynthConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: String,
    pub value: f64,
    pub method: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharingRow {
    pub n_features: usize,
    pub subsets: usize,
    pub shared_seconds: f64,
    pub naive_seconds: f64,
    pub speedup: f64,
    /// Largest disagreement between the two routes, in bits.
    pub max_abs_diff: f64,
}

/// Synthetic layout with four relevant features and the rest split between
/// correlated, redundant and irrelevant ones.
pub fn synth_with(n: usize, subgroups: usize, rows: usize, seed: u64) -> SynthConfig {
    let relevant = n.min(4);
    let rest = n - relevant;
    let correlated = rest / 3;
    let redundant = rest / 3;
    SynthConfig {
        n_rows: rows,
        n_subgroups: subgroups,
        relevant,
        correlated,
        redundant,
        irrelevant: rest - correlated - redundant,
        formula: if relevant >= 4 {
            "(r0 ^ r1) | (r2 & r3)".parse().expect("valid formula")
        } else {
            "r0".parse().expect("valid formula")
        },
        missing_p: None,
        seed,
        ..SynthConfig::default()
    }
}

/// Times the shared store plus one lookup per subset against one
/// from-scratch MI per subset, on a single complete subgroup.
pub fn entropy_sharing(n: usize, rows: usize, seed: u64) -> Result<SharingRow> {
    let out = synth::generate(&SynthConfig {
        n_subgroups: 1,
        ..synth_with(n, 1, rows, seed)
    })?;
    let sg = &out.subgroups[0];
    let all = subsets_within(FeatureSubset::full(n), LevelBounds::full(n));

    let t = Instant::now();
    let store = EntropyStore::build(sg, LevelBounds::full(n))?;
    let shared: Vec<f64> = all.iter().map(|&s| mi_shared(&store, s)).collect::<Result<_>>()?;
    let shared_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let naive: Vec<f64> = all.iter().map(|&s| mi_direct(sg, s)).collect::<Result<_>>()?;
    let naive_seconds = t.elapsed().as_secs_f64();

    let max_abs_diff = shared
        .iter()
        .zip(&naive)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SharingRow {
        n_features: n,
        subsets: all.len(),
        shared_seconds,
        naive_seconds,
        speedup: naive_seconds / shared_seconds.max(1e-12),
        max_abs_diff,
    })
}

/// Graph-model time (stores, sampling, training, prediction) and KNN time
/// (imputation plus exact MI over subsets that touch a missing feature).
fn time_methods(cfg: &RunConfig, sweep: &str, value: f64, rows: &mut Vec<SweepRow>) -> Result<()> {
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let dataset = synth::generate_table(&cfg.synth)?.0;
    let prepared = pipeline::prepare(cfg, &dataset, seed)?;

    let t = Instant::now();
    let mut graph = pipeline::build_graph(cfg, &prepared)?;
    let stores = pipeline::build_stores(&prepared, graph.bounds())?;
    let samples = pipeline::draw_samples(cfg, &graph, seed)?;
    let labels = pipeline::label_graph(&mut graph, &stores, &samples)?;
    let quiet = RunConfig {
        baselines: crate::config::BaselineConfig {
            mlp: false,
            ..cfg.baselines.clone()
        },
        ..cfg.clone()
    };
    let models = pipeline::train_models(&quiet, &graph, &labels, seed)?;
    for (i, m) in models.gnn.iter().enumerate() {
        if let Some((m, _)) = m {
            m.predict_missing(&graph, i)?;
        }
    }
    rows.push(SweepRow {
        sweep: sweep.into(),
        value,
        method: pipeline::METHOD_GNN.into(),
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    knn_with_mi(cfg, &prepared)?;
    rows.push(SweepRow {
        sweep: sweep.into(),
        value,
        method: pipeline::METHOD_KNN.into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    Ok(())
}

fn knn_with_mi(cfg: &RunConfig, prepared: &Prepared) -> Result<()> {
    let n = prepared.n_features();
    let bounds = pipeline::bounds_of(cfg, prepared)?;
    for sg in &prepared.subgroups {
        let filled = crate::baselines::knn_impute(
            sg,
            &prepared.subgroups,
            crate::baselines::KnnConfig { k: cfg.baselines.knn_k },
        )?;
        for s in subsets_within(FeatureSubset::full(n), bounds) {
            if s.intersects(sg.missing) {
                mi_direct(&filled, s)?;
            }
        }
    }
    Ok(())
}

fn sweep_config(cfg: &RunConfig, n: usize, subgroups: usize) -> RunConfig {
    let b = &cfg.bench;
    let mut c = cfg.clone();
    c.synth = synth_with(n, subgroups, b.rows, cfg.synth.seed);
    c.data = crate::config::DataConfig::default();
    c.paths.dataset = None;
    c.paths.schema = None;
    c.model.epochs = b.epochs;
    c.lattice.level_max = 0;
    c
}

#[derive(Clone, Debug, Default)]
pub struct BenchResults {
    pub sweeps: Vec<SweepRow>,
    pub sharing: Vec<SharingRow>,
}

/// Runs every sweep in `cfg.bench`.
pub fn run(cfg: &RunConfig) -> Result<BenchResults> {
    let b = &cfg.bench;
    let mut out = BenchResults::default();
    for &n in &b.features {
        log::info!("bench: features = {n}");
        time_methods(&sweep_config(cfg, n, 4), "features", n as f64, &mut out.sweeps)?;
    }
    for &k in &b.subgroups {
        log::info!("bench: subgroups = {k}");
        time_methods(&sweep_config(cfg, b.base_features, k), "subgroups", k as f64, &mut out.sweeps)?;
    }
    for &p in &b.missing_p {
        log::info!("bench: missing_p = {p}");
        let mut c = sweep_config(cfg, b.base_features, 4);
        c.missing_p = p;
        time_methods(&c, "missing_p", p, &mut out.sweeps)?;
    }
    for &r in &b.budget {
        log::info!("bench: budget = {r}");
        let mut c = sweep_config(cfg, b.base_features, 4);
        c.sampling.budget_rate = r;
        time_methods(&c, "budget", r, &mut out.sweeps)?;
    }
    for &n in &b.features {
        log::info!("bench: entropy sharing, n = {n}");
        out.sharing.push(entropy_sharing(n, b.rows, cfg.synth.seed)?);
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    crate::io::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `bench/sweeps.csv` and `bench/sharing.csv` under `cfg.paths.out`.
pub fn stage_bench(cfg: &RunConfig) -> Result<BenchResults> {
    let results = run(cfg)?;
    let dir = cfg.paths.out.join("bench");
    write_csv(&dir.join("sweeps.csv"), &results.sweeps)?;
    write_csv(&dir.join("sharing.csv"), &results.sharing)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_add_up() {
        for n in 1..=20 {
            let c = synth_with(n, 2, 10, 0);
            assert_eq!(c.n_features(), n);
            c.validate().unwrap();
        }
    }

    #[test]
    fn sharing_routes_agree() {
        let r = entropy_sharing(6, 500, 1).unwrap();
        assert_eq!(r.subsets, 63);
        assert!(r.max_abs_diff < 1e-9);
    }

    #[test]
    fn small_sweep_writes_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.paths.out = dir.path().to_path_buf();
        cfg.model.hidden = 4;
        cfg.bench = crate::config::BenchConfig {
            features: vec![6],
            subgroups: vec![2],
            missing_p: vec![0.3],
            budget: vec![0.75],
            base_features: 6,
            rows: 300,
            epochs: 3,
        };
        let r = stage_bench(&cfg).unwrap();
        assert_eq!(r.sweeps.len(), 8);
        assert!(dir.path().join("bench/sweeps.csv").exists());
        assert!(dir.path().join("bench/sharing.csv").exists());
    }
}
