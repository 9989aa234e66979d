//! Answers a top-K query per subgroup, mixing exact MI for sampled subsets
//! with model predictions for the rest, and compares against the ranking a
//! complete dataset would give.

use mi_lattice::config::RunConfig;
use mi_lattice::metrics::ndcg_at_k;
use mi_lattice::pipeline;
use mi_lattice::query::ground_truth_topk;

fn main() -> mi_lattice::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.synth.n_rows = 8000;
    cfg.model.hidden = 16;
    cfg.model.epochs = 200;
    cfg.query.m = 2;
    cfg.query.k = 5;
    cfg.baselines.mlp = false;

    let data = pipeline::load_dataset(&cfg)?;
    let run = pipeline::run_seed(&cfg, &data, 0)?;
    for r in &run.rankings.methods[pipeline::METHOD_GNN] {
        let sg = &run.prepared.subgroups[r.subgroup];
        let truth = ground_truth_topk(sg, cfg.query.m, cfg.query.k, run.prepared.names())?;
        println!("subgroup {} (missing {} features)", r.subgroup, sg.missing.level());
        for (got, want) in r.entries.iter().zip(&truth.entries) {
            println!(
                "  {:<28} {:.4} {:<9}  | truth {:<28} {:.4}",
                got.features.join(","),
                got.score,
                format!("{:?}", got.provenance),
                want.features.join(","),
                want.score
            );
        }
        println!("  nDCG@{} = {:.3}", cfg.query.k, ndcg_at_k(&r.subsets(), &truth.subsets(), cfg.query.k)?);
    }
    Ok(())
}
