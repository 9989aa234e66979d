//! Runs every stage on disk for two seeds and prints the averaged metrics.
//! Artifacts go to the directory given as the first argument, or a
//! temporary one.

use mi_lattice::config::RunConfig;
use mi_lattice::pipeline;

fn main() -> mi_lattice::Result<()> {
    let tmp;
    let out = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            tmp = std::env::temp_dir().join("mi-lattice-example");
            tmp.clone()
        }
    };
    let mut cfg = RunConfig::default();
    cfg.paths.out = out;
    cfg.synth.n_rows = 6000;
    cfg.model.hidden = 16;
    cfg.model.epochs = 200;
    cfg.seeds = vec![0, 1];
    cfg.validate()?;

    let report = pipeline::run_all(&cfg)?;
    for (method, metrics) in &report.averages {
        let line: Vec<String> = metrics.iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
        println!("{method:>4}: {}", line.join(", "));
    }
    println!("artifacts under {}", cfg.paths.out.display());
    Ok(())
}
