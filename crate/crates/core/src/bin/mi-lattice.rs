use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mi_lattice::config::RunConfig;
use mi_lattice::pipeline::{self, Stage};
use mi_lattice::{bench, Error};

#[derive(Parser)]
#[command(name = "mi-lattice", version, about = "Top-K mutual-information feature subsets per subgroup")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-subgroup work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic dataset.
    Synth,
    /// Partition into subgroups and inject systematic missingness.
    Prep,
    /// Build the multiplex lattice graph.
    Lattice,
    /// Draw the per-subgroup samples.
    Sample,
    /// Build entropy stores and label the samples.
    Mi,
    /// Train graph and MLP models.
    Train,
    /// Rank top-K subsets per subgroup.
    Rank,
    /// Score rankings against the complete data.
    Eval,
    /// Timing sweeps.
    Bench,
    /// Every stage for every seed.
    Pipeline,
    /// Print the default configuration.
    DefaultConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn per_seed(cfg: &RunConfig, stage: Stage) -> Result<(), Error> {
    for &seed in &cfg.seeds {
        log::info!("seed {seed}: {}", stage.name());
        pipeline::run_stage(cfg, stage, seed)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    match cli.command {
        Command::Synth => pipeline::stage_synth(&cfg),
        Command::Prep => per_seed(&cfg, Stage::Prep),
        Command::Lattice => per_seed(&cfg, Stage::Lattice),
        Command::Sample => per_seed(&cfg, Stage::Sample),
        Command::Mi => per_seed(&cfg, Stage::Mi),
        Command::Train => per_seed(&cfg, Stage::Train),
        Command::Rank => per_seed(&cfg, Stage::Rank),
        Command::Eval => {
            per_seed(&cfg, Stage::Eval)?;
            let report = pipeline::aggregate_metrics(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.averages)?);
            Ok(())
        }
        Command::Bench => {
            let r = bench::stage_bench(&cfg)?;
            for s in &r.sharing {
                println!(
                    "n={:>2} shared {:.3}s naive {:.3}s speedup {:.1}x",
                    s.n_features, s.shared_seconds, s.naive_seconds, s.speedup
                );
            }
            Ok(())
        }
        Command::Pipeline => {
            let report = pipeline::run_all(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.averages)?);
            Ok(())
        }
        Command::DefaultConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
