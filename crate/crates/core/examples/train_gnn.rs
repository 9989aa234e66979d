//! Labels a sample of each subgroup's lattice with exact MI, trains the
//! graph model for one subgroup and prints its loss curve and predictions
//! for the subsets that touch the missing feature.

use mi_lattice::config::RunConfig;
use mi_lattice::pipeline;

fn main() -> mi_lattice::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.synth.n_rows = 8000;
    cfg.synth.n_subgroups = 3;
    cfg.model.hidden = 16;
    cfg.model.epochs = 300;
    cfg.sampling.budget_rate = 0.5;

    let data = pipeline::load_dataset(&cfg)?;
    let prepared = pipeline::prepare(&cfg, &data, 0)?;
    let mut graph = pipeline::build_graph(&cfg, &prepared)?;
    let stores = pipeline::build_stores(&prepared, graph.bounds())?;
    let samples = pipeline::draw_samples(&cfg, &graph, 0)?;
    let labels = pipeline::label_graph(&mut graph, &stores, &samples)?;

    let Some(i) = (0..graph.n_subgroups()).find(|&i| pipeline::needs_model(&graph, i)) else {
        println!("no subgroup is missing a feature at this seed");
        return Ok(());
    };
    println!("subgroup {i}: {} exact labels, missing {:?}", labels[i].len(), prepared.subgroups[i].missing);
    let (model, report) = mi_lattice::nn::train_subgroup(&graph, i, &labels[i], &cfg.model, 0)?;
    for e in (0..report.train_loss.len()).step_by(50) {
        println!("epoch {e:>4}: train {:.5} val {:.5}", report.train_loss[e], report.val_loss[e]);
    }
    println!("kept epoch {} (val {:.5})", report.selected_epoch, report.best_val_loss());

    let n = graph.n_features();
    let mut preds: Vec<_> = model.predict_missing(&graph, i)?.into_iter().collect();
    preds.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (s, p) in preds.iter().take(5) {
        println!("{} predicted {p:.4} bits", s.to_bit_string(n));
    }
    Ok(())
}
