//! The two baselines on one subgroup: KNN imputation of its missing
//! features from the other subgroups, and an MLP fitted on its exact labels.

use mi_lattice::baselines::{knn_impute, train_mlp, KnnConfig};
use mi_lattice::config::RunConfig;
use mi_lattice::info::mi_direct;
use mi_lattice::pipeline;

fn main() -> mi_lattice::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.synth.n_rows = 6000;
    cfg.model.epochs = 300;
    let data = pipeline::load_dataset(&cfg)?;
    let prepared = pipeline::prepare(&cfg, &data, 0)?;
    let Some(sg) = prepared.subgroups.iter().find(|s| !s.missing.is_empty()) else {
        println!("no subgroup is missing a feature at this seed");
        return Ok(());
    };
    let names = prepared.names();

    let filled = knn_impute(sg, &prepared.subgroups, KnnConfig { k: cfg.baselines.knn_k })?;
    let complete = sg.with_missing(mi_lattice::FeatureSubset::from_bits(0));
    println!("subgroup {} misses {:?}", sg.index, sg.missing.features().map(|f| &names[f]).collect::<Vec<_>>());
    for f in sg.missing.features() {
        let s = mi_lattice::FeatureSubset::from_bits(1 << f);
        println!(
            "  {}: MI after imputation {:.4}, on complete values {:.4}",
            names[f],
            mi_direct(&filled, s)?,
            mi_direct(&complete, s)?
        );
    }

    let mut graph = pipeline::build_graph(&cfg, &prepared)?;
    let stores = pipeline::build_stores(&prepared, graph.bounds())?;
    let samples = pipeline::draw_samples(&cfg, &graph, 0)?;
    let labels = pipeline::label_graph(&mut graph, &stores, &samples)?;
    let (mlp, report) = train_mlp(graph.n_features(), sg.index, &labels[sg.index], &cfg.model, 0)?;
    println!(
        "MLP: {} train / {} val labels, best val MSE {:.5} at epoch {}",
        report.n_train,
        report.n_val,
        report.best_val_loss(),
        report.selected_epoch
    );
    let preds = mlp.predict_missing(&graph, sg.index)?;
    let spread = preds.values().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("  {} predictions in [{:.4}, {:.4}]", preds.len(), spread.0, spread.1);
    Ok(())
}
