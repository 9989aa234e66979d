//! Staged runs: data preparation, lattice, sampling, MI, training, ranking
//! and evaluation. Each stage has an in-memory form and an on-disk driver
//! that reads upstream artifacts and writes its own plus a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{knn_impute, train_mlp, KnnConfig, MlpModel};
use crate::config::RunConfig;
use crate::data::{inject_systematic_missingness, partition_subgroups, Dataset, Schema, SubgroupData, SubgroupSpec};
use crate::error::{Error, Result};
use crate::info::{mi_shared, EntropyStore};
use crate::lattice::{build_multiplex, MultiplexGraph, NodeId};
use crate::metrics::{ndcg_at_k, precision_at_k, upward_closure_accuracy, MetricReport};
use crate::nn::{train_subgroup, GnnModel, TrainReport};
use crate::query::{ground_truth_topk, topk, Provenance, TopKResult};
use crate::sampler::{budget_from_rate, label_samples, load_samples, sample_all, save_samples, SampleSet};
use crate::subset::{binomial, FeatureSubset, LevelBounds};
use crate::{io, rng, synth};

/// Bumped whenever an artifact format changes.
pub const STAGE_VERSION: u32 = 1;

// stream ids for per-stage seeds
const PREP_STREAM: u64 = 11;
const SAMPLE_STREAM: u64 = 12;
const GNN_STREAM: u64 = 13;
const MLP_STREAM: u64 = 14;

pub const METHOD_GNN: &str = "gnn";
pub const METHOD_MLP: &str = "mlp";
pub const METHOD_KNN: &str = "knn";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Synth,
    Prep,
    Lattice,
    Sample,
    Mi,
    Train,
    Rank,
    Eval,
    Bench,
}

impl Stage {
    pub const PER_SEED: [Stage; 7] = [
        Stage::Prep,
        Stage::Lattice,
        Stage::Sample,
        Stage::Mi,
        Stage::Train,
        Stage::Rank,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Prep => "prep",
            Stage::Lattice => "lattice",
            Stage::Sample => "sample",
            Stage::Mi => "mi",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Eval => "eval",
            Stage::Bench => "bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub version: u32,
    pub seed: Option<u64>,
    pub config_hash: String,
}

fn write_manifest(dir: &Path, cfg: &RunConfig, stage: Stage, seed: Option<u64>) -> Result<()> {
    io::write_json(
        dir.join(format!("manifest-{}.json", stage.name())),
        &Manifest {
            stage,
            version: STAGE_VERSION,
            seed,
            config_hash: cfg.hash(),
        },
    )
}

// ---------------------------------------------------------------- data

/// The input table, from the configured CSV or from the generator.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset_path();
    if cfg.paths.dataset.is_none() && !path.exists() {
        return Ok(synth::generate_table(&cfg.synth)?.0);
    }
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let schema = Schema::load(cfg.schema_path())?;
    Dataset::load(&path, &schema)
}

fn discretized(cfg: &RunConfig, dataset: &Dataset) -> Result<Dataset> {
    let mut d = dataset.clone();
    for (col, edges) in &cfg.data.edges {
        d = d.discretize_at(col, edges)?;
    }
    for (col, &bins) in &cfg.data.bins {
        if !cfg.data.edges.contains_key(col) {
            d = d.discretize(col, bins)?;
        }
    }
    Ok(d)
}

/// Subgroups of one seed, after missingness injection.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: SubgroupSpec,
    pub subgroups: Vec<SubgroupData>,
}

impl Prepared {
    pub fn names(&self) -> &[String] {
        &self.spec.selection_features
    }

    pub fn n_features(&self) -> usize {
        self.spec.selection_features.len()
    }

    pub fn present(&self) -> Vec<FeatureSubset> {
        self.subgroups.iter().map(|s| s.present).collect()
    }
}

/// On-disk form of [`Prepared`]: masks only, the rows come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepFile {
    pub spec: SubgroupSpec,
    pub missing_p: f64,
    pub rows: Vec<usize>,
    pub missing: Vec<FeatureSubset>,
}

pub fn prepare(cfg: &RunConfig, dataset: &Dataset, seed: u64) -> Result<Prepared> {
    let d = discretized(cfg, dataset)?;
    let names: Vec<&str> = cfg.data.subgroup_features.iter().map(String::as_str).collect();
    let (spec, parts) = partition_subgroups(&d, &names)?;
    let subgroups = if cfg.missing_p > 0.0 {
        inject_systematic_missingness(&parts, cfg.missing_p, rng::derive_seed(seed, PREP_STREAM))?
    } else {
        parts
            .iter()
            .map(|s| s.with_missing(FeatureSubset::from_bits(0)))
            .collect()
    };
    Ok(Prepared { spec, subgroups })
}

fn restore(cfg: &RunConfig, dataset: &Dataset, file: &PrepFile) -> Result<Prepared> {
    let d = discretized(cfg, dataset)?;
    let names: Vec<&str> = cfg.data.subgroup_features.iter().map(String::as_str).collect();
    let (spec, parts) = partition_subgroups(&d, &names)?;
    if spec != file.spec || parts.len() != file.missing.len() {
        return Err(Error::Artifact {
            path: "prep.json".into(),
            reason: "subgroups do not match the dataset".into(),
        });
    }
    let subgroups = parts
        .iter()
        .zip(&file.missing)
        .map(|(s, &m)| s.with_missing(m))
        .collect();
    Ok(Prepared { spec, subgroups })
}

pub fn bounds_of(cfg: &RunConfig, prepared: &Prepared) -> Result<LevelBounds> {
    cfg.bounds(prepared.n_features())
}

pub fn build_graph(cfg: &RunConfig, prepared: &Prepared) -> Result<MultiplexGraph> {
    build_multiplex(prepared.n_features(), &prepared.subgroups, bounds_of(cfg, prepared)?)
}

pub fn build_stores(prepared: &Prepared, bounds: LevelBounds) -> Result<Vec<EntropyStore>> {
    prepared
        .subgroups
        .par_iter()
        .map(|sg| EntropyStore::build(sg, bounds))
        .collect()
}

pub fn draw_samples(cfg: &RunConfig, graph: &MultiplexGraph, seed: u64) -> Result<Vec<SampleSet>> {
    let present: Vec<FeatureSubset> = (0..graph.n_subgroups()).map(|i| graph.present(i)).collect();
    let budgets = present
        .iter()
        .map(|&p| budget_from_rate(cfg.sampling.budget_rate, p, graph.bounds()))
        .collect::<Result<Vec<_>>>()?;
    sample_all(
        cfg.sampling.sampler,
        &present,
        &budgets,
        graph.bounds(),
        rng::derive_seed(seed, SAMPLE_STREAM),
    )
}

pub type Labels = Vec<BTreeMap<FeatureSubset, f64>>;

/// Exact MI of every sampled subset, also written into the graph.
pub fn label_graph(graph: &mut MultiplexGraph, stores: &[EntropyStore], samples: &[SampleSet]) -> Result<Labels> {
    graph.clear_labels();
    let mut out = Vec::with_capacity(samples.len());
    for (set, store) in samples.iter().zip(stores) {
        let labels = label_samples(store, set)?;
        for (&s, &mi) in &labels {
            graph.set_label(NodeId::new(set.subgroup, s), mi)?;
        }
        out.push(labels);
    }
    Ok(out)
}

/// Whether subgroup `i` has nodes that only a model can score.
pub fn needs_model(graph: &MultiplexGraph, i: usize) -> bool {
    graph.labels(i).iter().any(Option::is_none)
}

// ---------------------------------------------------------------- models

#[derive(Clone, Debug, Default)]
pub struct Models {
    pub gnn: Vec<Option<(GnnModel, TrainReport)>>,
    pub mlp: Vec<Option<(MlpModel, TrainReport)>>,
}

pub fn train_models(cfg: &RunConfig, graph: &MultiplexGraph, labels: &Labels, seed: u64) -> Result<Models> {
    let mut models = Models::default();
    for (i, l) in labels.iter().enumerate() {
        if !needs_model(graph, i) {
            models.gnn.push(None);
            models.mlp.push(None);
            continue;
        }
        let s = rng::derive_seed(rng::derive_seed(seed, GNN_STREAM), i as u64);
        log::info!("training graph model for subgroup {i} on {} labels", l.len());
        models.gnn.push(Some(train_subgroup(graph, i, l, &cfg.model, s)?));
        if cfg.baselines.mlp {
            let s = rng::derive_seed(rng::derive_seed(seed, MLP_STREAM), i as u64);
            models
                .mlp
                .push(Some(train_mlp(graph.n_features(), i, l, &cfg.model, s)?));
        } else {
            models.mlp.push(None);
        }
    }
    Ok(models)
}

// ---------------------------------------------------------------- ranking

/// Scores of every node of one subgroup: exact where labeled, predicted elsewhere.
pub type Scores = BTreeMap<FeatureSubset, f64>;

fn merged_scores(graph: &MultiplexGraph, i: usize, predictions: &Scores) -> Scores {
    let mut all = predictions.clone();
    for (v, &s) in graph.shape().subsets().iter().enumerate() {
        if let Some(y) = graph.labels(i)[v] {
            all.insert(s, y);
        }
    }
    all
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    /// `method → one result per subgroup`.
    pub methods: BTreeMap<String, Vec<TopKResult>>,
    /// `method → per-subgroup scores of every lattice node`, exact labels included.
    #[serde(default)]
    pub scores: BTreeMap<String, Vec<Scores>>,
}

fn effective_k(cfg: &RunConfig, n: usize) -> usize {
    cfg.query.k.min(binomial(n, cfg.query.m) as usize).max(1)
}

/// Ranks each subgroup with every available method. `gnn` and `mlp` hold
/// one prediction map per subgroup, `None` where no model exists.
pub fn rank_all(
    cfg: &RunConfig,
    prepared: &Prepared,
    graph: &MultiplexGraph,
    stores: &[EntropyStore],
    gnn: &[Option<Scores>],
    mlp: Option<&[Option<Scores>]>,
) -> Result<Rankings> {
    let names = prepared.names();
    let k = cfg.query.k;
    let m = cfg.query.m;
    let mut out = Rankings::default();
    let mut learned = vec![(METHOD_GNN, Some(gnn))];
    learned.push((METHOD_MLP, mlp));
    for (method, preds) in learned {
        let Some(preds) = preds else { continue };
        let mut results = Vec::new();
        let mut scores = Vec::new();
        for (i, store) in stores.iter().enumerate() {
            let p = preds.get(i).and_then(Option::as_ref);
            results.push(topk(graph, store, p, i, m, k, names)?);
            scores.push(merged_scores(graph, i, p.unwrap_or(&Scores::new())));
        }
        out.methods.insert(method.to_string(), results);
        out.scores.insert(method.to_string(), scores);
    }
    if cfg.baselines.knn {
        out.methods
            .insert(METHOD_KNN.to_string(), knn_rankings(cfg, prepared)?);
    }
    Ok(out)
}

/// Imputes each subgroup and ranks by exact MI on the completed columns.
pub fn knn_rankings(cfg: &RunConfig, prepared: &Prepared) -> Result<Vec<TopKResult>> {
    let config = KnnConfig { k: cfg.baselines.knn_k };
    let n = prepared.n_features();
    let bounds = bounds_of(cfg, prepared)?;
    if !bounds.contains(cfg.query.m) {
        return Err(Error::LevelOutOfBounds {
            m: cfg.query.m,
            min: bounds.min,
            max: bounds.max,
        });
    }
    prepared
        .subgroups
        .iter()
        .map(|sg| {
            let filled = knn_impute(sg, &prepared.subgroups, config)?;
            let mut r = crate::query::ground_truth_from_columns(
                &filled.columns,
                &filled.target,
                sg.index,
                cfg.query.m,
                cfg.query.k,
                prepared.names(),
            )?;
            for e in &mut r.entries {
                if e.subset.bits() & sg.missing.bits() != 0 {
                    e.provenance = Provenance::Predicted;
                }
            }
            debug_assert!(n == filled.n_features());
            Ok(r)
        })
        .collect()
}

// ---------------------------------------------------------------- evaluation

/// Ranking quality against the pre-injection data, plus closure accuracy
/// and absolute error on predicted nodes for the learned methods.
pub fn evaluate(cfg: &RunConfig, prepared: &Prepared, rankings: &Rankings, seed: u64) -> Result<MetricReport> {
    let n = prepared.n_features();
    let k = effective_k(cfg, n);
    let bounds = bounds_of(cfg, prepared)?;
    let shape = crate::lattice::LatticeShape::new(n, bounds)?;
    let mut report = MetricReport::default();
    let truths = prepared
        .subgroups
        .iter()
        .map(|sg| ground_truth_topk(sg, cfg.query.m, k, prepared.names()))
        .collect::<Result<Vec<_>>>()?;
    let need_true_mi = rankings.scores.values().any(|v| !v.is_empty());
    let true_stores = if need_true_mi {
        prepared
            .subgroups
            .par_iter()
            .map(|sg| EntropyStore::build(&sg.with_missing(FeatureSubset::from_bits(0)), bounds))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    for (method, results) in &rankings.methods {
        for (r, truth) in results.iter().zip(&truths) {
            let got = r.subsets();
            let want = truth.subsets();
            report.push(seed, r.subgroup, method, "ndcg", ndcg_at_k(&got, &want, k)?);
            report.push(seed, r.subgroup, method, "precision", precision_at_k(&got, &want, k)?);
        }
        let Some(scores) = rankings.scores.get(method) else { continue };
        for (i, s) in scores.iter().enumerate() {
            let acc = upward_closure_accuracy(s, &shape)?;
            report.push(seed, i, method, "closure", acc.overall);
            let missing = prepared.subgroups[i].missing;
            let mut err = 0.0;
            let mut count = 0usize;
            for (&sub, &p) in s {
                if sub.bits() & missing.bits() != 0 {
                    err += (p - mi_shared(&true_stores[i], sub)?).abs();
                    count += 1;
                }
            }
            if count > 0 {
                report.push(seed, i, method, "mae", err / count as f64);
            }
        }
    }
    report.summarize();
    Ok(report)
}

/// Everything one seed produces, kept in memory.
pub struct SeedRun {
    pub prepared: Prepared,
    pub graph: MultiplexGraph,
    pub samples: Vec<SampleSet>,
    pub models: Models,
    pub rankings: Rankings,
    pub report: MetricReport,
}

/// Runs every per-seed stage without touching the disk.
pub fn run_seed(cfg: &RunConfig, dataset: &Dataset, seed: u64) -> Result<SeedRun> {
    let prepared = prepare(cfg, dataset, seed)?;
    let mut graph = build_graph(cfg, &prepared)?;
    let stores = build_stores(&prepared, graph.bounds())?;
    let samples = draw_samples(cfg, &graph, seed)?;
    let labels = label_graph(&mut graph, &stores, &samples)?;
    let models = train_models(cfg, &graph, &labels, seed)?;
    let gnn = models
        .gnn
        .iter()
        .enumerate()
        .map(|(i, m)| m.as_ref().map(|(m, _)| m.predict_missing(&graph, i)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let mlp = if cfg.baselines.mlp {
        Some(
            models
                .mlp
                .iter()
                .enumerate()
                .map(|(i, m)| m.as_ref().map(|(m, _)| m.predict_missing(&graph, i)).transpose())
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let rankings = rank_all(cfg, &prepared, &graph, &stores, &gnn, mlp.as_deref())?;
    let report = evaluate(cfg, &prepared, &rankings, seed)?;
    Ok(SeedRun {
        prepared,
        graph,
        samples,
        models,
        rankings,
        report,
    })
}

// ---------------------------------------------------------------- on-disk stages

/// Artifact locations for one seed.
pub struct SeedPaths {
    pub dir: PathBuf,
}

impl SeedPaths {
    pub fn new(cfg: &RunConfig, seed: u64) -> Self {
        SeedPaths { dir: cfg.seed_dir(seed) }
    }
    pub fn prep(&self) -> PathBuf {
        self.dir.join("prep.json")
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.json")
    }
    pub fn samples(&self) -> PathBuf {
        self.dir.join("samples.json")
    }
    pub fn store(&self, i: usize) -> PathBuf {
        self.dir.join("stores").join(format!("store-{i}.json"))
    }
    pub fn labels(&self) -> PathBuf {
        self.dir.join("labels.json")
    }
    pub fn model(&self, method: &str, i: usize) -> PathBuf {
        self.dir.join("models").join(format!("{method}-{i}.ckpt"))
    }
    pub fn report(&self, method: &str, i: usize) -> PathBuf {
        self.dir.join("models").join(format!("{method}-{i}.report.json"))
    }
    pub fn topk(&self) -> PathBuf {
        self.dir.join("topk.json")
    }
    pub fn metrics(&self) -> (PathBuf, PathBuf) {
        (self.dir.join("metrics.json"), self.dir.join("metrics.csv"))
    }
}

/// Graph summary written by the lattice stage.
#[derive(Debug, Serialize)]
pub struct GraphSummary {
    pub n_features: usize,
    pub subgroups: usize,
    pub bounds: LevelBounds,
    pub present: Vec<String>,
    pub nodes: usize,
    pub inter_level_edges: u64,
    pub intra_level_edges: u64,
    pub inter_lattice_edges_per_pair: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<crate::lattice::GraphExport>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct LabelsFile {
    /// One map per subgroup from MSB-first bit string to MI.
    subgroups: Vec<BTreeMap<String, f64>>,
}

fn labels_to_file(labels: &Labels, n: usize) -> LabelsFile {
    LabelsFile {
        subgroups: labels
            .iter()
            .map(|l| l.iter().map(|(s, &v)| (s.to_bit_string(n), v)).collect())
            .collect(),
    }
}

fn labels_from_file(file: LabelsFile, path: &Path) -> Result<Labels> {
    file.subgroups
        .into_iter()
        .map(|l| {
            l.into_iter()
                .map(|(k, v)| {
                    u32::from_str_radix(&k, 2)
                        .map(|b| (FeatureSubset::from_bits(b), v))
                        .map_err(|e| Error::Artifact {
                            path: path.to_path_buf(),
                            reason: format!("bad bit string `{k}`: {e}"),
                        })
                })
                .collect()
        })
        .collect()
}

/// Loaded upstream state shared by the later stages.
struct Context {
    prepared: Prepared,
    graph: MultiplexGraph,
}

fn context(cfg: &RunConfig, paths: &SeedPaths) -> Result<Context> {
    let file: PrepFile = io::read_json(paths.prep())?;
    let dataset = load_dataset(cfg)?;
    let prepared = restore(cfg, &dataset, &file)?;
    let graph = build_graph(cfg, &prepared)?;
    Ok(Context { prepared, graph })
}

fn load_stores(paths: &SeedPaths, k: usize) -> Result<Vec<EntropyStore>> {
    (0..k)
        .map(|i| {
            let p = paths.store(i);
            if !p.exists() {
                return Err(Error::MissingArtifact(p));
            }
            EntropyStore::load(p)
        })
        .collect()
}

fn load_labels(paths: &SeedPaths, graph: &mut MultiplexGraph) -> Result<Labels> {
    let path = paths.labels();
    let labels = labels_from_file(io::read_json(&path)?, &path)?;
    graph.clear_labels();
    for (i, l) in labels.iter().enumerate() {
        for (&s, &v) in l {
            graph.set_label(NodeId::new(i, s), v)?;
        }
    }
    Ok(labels)
}

pub fn stage_synth(cfg: &RunConfig) -> Result<()> {
    let (dataset, _) = synth::generate_table(&cfg.synth)?;
    let csv = cfg.paths.out.join("data").join("dataset.csv");
    let schema = cfg.paths.out.join("data").join("schema.json");
    dataset.save(&csv, &schema)?;
    write_manifest(&cfg.paths.out.join("data"), cfg, Stage::Synth, None)
}

pub fn stage_prep(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    let dataset = load_dataset(cfg)?;
    let prepared = prepare(cfg, &dataset, seed)?;
    let file = PrepFile {
        spec: prepared.spec.clone(),
        missing_p: cfg.missing_p,
        rows: prepared.subgroups.iter().map(SubgroupData::n_rows).collect(),
        missing: prepared.subgroups.iter().map(|s| s.missing).collect(),
    };
    io::write_json(paths.prep(), &file)?;
    write_manifest(&paths.dir, cfg, Stage::Prep, Some(seed))
}

pub fn stage_lattice(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    let ctx = context(cfg, &paths)?;
    let g = &ctx.graph;
    let n = g.n_features();
    let summary = GraphSummary {
        n_features: n,
        subgroups: g.n_subgroups(),
        bounds: g.bounds(),
        present: (0..g.n_subgroups()).map(|i| g.present(i).to_bit_string(n)).collect(),
        nodes: g.n_nodes(),
        inter_level_edges: g.shape().inter_level_edges(),
        intra_level_edges: g.shape().intra_level_edges(),
        inter_lattice_edges_per_pair: g.inter_lattice_edges_per_pair(),
        full: cfg.lattice.export_edges.then(|| g.export()),
    };
    io::write_json(paths.graph(), &summary)?;
    write_manifest(&paths.dir, cfg, Stage::Lattice, Some(seed))
}

pub fn stage_sample(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    if !paths.graph().exists() {
        return Err(Error::MissingArtifact(paths.graph()));
    }
    let ctx = context(cfg, &paths)?;
    save_samples(paths.samples(), &draw_samples(cfg, &ctx.graph, seed)?)?;
    write_manifest(&paths.dir, cfg, Stage::Sample, Some(seed))
}

pub fn stage_mi(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    let mut ctx = context(cfg, &paths)?;
    let samples = load_samples(paths.samples())?;
    let stores = build_stores(&ctx.prepared, ctx.graph.bounds())?;
    for (i, s) in stores.iter().enumerate() {
        s.save(paths.store(i))?;
    }
    let labels = label_graph(&mut ctx.graph, &stores, &samples)?;
    io::write_json(paths.labels(), &labels_to_file(&labels, ctx.prepared.n_features()))?;
    write_manifest(&paths.dir, cfg, Stage::Mi, Some(seed))
}

pub fn stage_train(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    let mut ctx = context(cfg, &paths)?;
    let labels = load_labels(&paths, &mut ctx.graph)?;
    let models = train_models(cfg, &ctx.graph, &labels, seed)?;
    for (i, m) in models.gnn.iter().enumerate() {
        if let Some((m, r)) = m {
            m.save(paths.model(METHOD_GNN, i))?;
            io::write_json(paths.report(METHOD_GNN, i), r)?;
        }
    }
    for (i, m) in models.mlp.iter().enumerate() {
        if let Some((m, r)) = m {
            m.save(paths.model(METHOD_MLP, i))?;
            io::write_json(paths.report(METHOD_MLP, i), r)?;
        }
    }
    write_manifest(&paths.dir, cfg, Stage::Train, Some(seed))
}

pub fn stage_rank(cfg: &RunConfig, seed: u64) -> Result<()> {
    let paths = SeedPaths::new(cfg, seed);
    let mut ctx = context(cfg, &paths)?;
    load_labels(&paths, &mut ctx.graph)?;
    let k = ctx.graph.n_subgroups();
    let stores = load_stores(&paths, k)?;
    let mut gnn = Vec::with_capacity(k);
    let mut mlp = Vec::with_capacity(k);
    for i in 0..k {
        if !needs_model(&ctx.graph, i) {
            gnn.push(None);
            mlp.push(None);
            continue;
        }
        let p = paths.model(METHOD_GNN, i);
        if !p.exists() {
            return Err(Error::MissingModel(i));
        }
        gnn.push(Some(GnnModel::load(p)?.predict_missing(&ctx.graph, i)?));
        if cfg.baselines.mlp {
            let p = paths.model(METHOD_MLP, i);
            if !p.exists() {
                return Err(Error::MissingModel(i));
            }
            mlp.push(Some(MlpModel::load(p)?.predict_missing(&ctx.graph, i)?));
        }
    }
    let mlp = cfg.baselines.mlp.then_some(mlp.as_slice());
    let rankings = rank_all(cfg, &ctx.prepared, &ctx.graph, &stores, &gnn, mlp)?;
    io::write_json(paths.topk(), &rankings)?;
    write_manifest(&paths.dir, cfg, Stage::Rank, Some(seed))
}

pub fn stage_eval(cfg: &RunConfig, seed: u64) -> Result<MetricReport> {
    let paths = SeedPaths::new(cfg, seed);
    let ctx = context(cfg, &paths)?;
    let rankings: Rankings = io::read_json(paths.topk())?;
    let report = evaluate(cfg, &ctx.prepared, &rankings, seed)?;
    let (json, csv) = paths.metrics();
    report.save(json, csv)?;
    write_manifest(&paths.dir, cfg, Stage::Eval, Some(seed))?;
    Ok(report)
}

/// Merges the per-seed metric files into `out/metrics.{json,csv}`.
pub fn aggregate_metrics(cfg: &RunConfig) -> Result<MetricReport> {
    let mut all = MetricReport::default();
    for &seed in &cfg.seeds {
        let (json, _) = SeedPaths::new(cfg, seed).metrics();
        all.merge(io::read_json(json)?);
    }
    all.save(cfg.paths.out.join("metrics.json"), cfg.paths.out.join("metrics.csv"))?;
    Ok(all)
}

/// Runs one per-seed stage.
pub fn run_stage(cfg: &RunConfig, stage: Stage, seed: u64) -> Result<()> {
    match stage {
        Stage::Prep => stage_prep(cfg, seed),
        Stage::Lattice => stage_lattice(cfg, seed),
        Stage::Sample => stage_sample(cfg, seed),
        Stage::Mi => stage_mi(cfg, seed),
        Stage::Train => stage_train(cfg, seed),
        Stage::Rank => stage_rank(cfg, seed),
        Stage::Eval => stage_eval(cfg, seed).map(|_| ()),
        Stage::Synth | Stage::Bench => Err(Error::Config(format!("{} is not a per-seed stage", stage.name()))),
    }
}

/// Every stage for every configured seed, then the merged metrics.
pub fn run_all(cfg: &RunConfig) -> Result<MetricReport> {
    if cfg.paths.dataset.is_none() {
        stage_synth(cfg)?;
    }
    for &seed in &cfg.seeds {
        for stage in Stage::PER_SEED {
            log::info!("seed {seed}: {}", stage.name());
            run_stage(cfg, stage, seed)?;
        }
    }
    aggregate_metrics(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HyperParams;
    use crate::synth::SynthConfig;

    pub(crate) fn small_config(out: &Path) -> RunConfig {
        RunConfig {
            synth: SynthConfig {
                n_rows: 2000,
                n_subgroups: 3,
                relevant: 4,
                correlated: 1,
                redundant: 1,
                irrelevant: 0,
                missing_p: None,
                ..SynthConfig::default()
            },
            model: HyperParams {
                hidden: 8,
                epochs: 20,
                ..HyperParams::default()
            },
            seeds: vec![0],
            query: crate::config::QueryConfig { m: 2, k: 5 },
            paths: crate::config::Paths {
                out: out.to_path_buf(),
                ..Default::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn in_memory_run_produces_all_methods() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let ds = load_dataset(&cfg).unwrap();
        let run = run_seed(&cfg, &ds, 0).unwrap();
        for method in [METHOD_GNN, METHOD_MLP, METHOD_KNN] {
            let v = run.report.average(method, "ndcg").unwrap();
            assert!((0.0..=1.0).contains(&v), "{method}: {v}");
        }
        assert!(run.report.average(METHOD_GNN, "closure").is_some());
    }

    #[test]
    fn staged_run_matches_in_memory_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let disk = run_all(&cfg).unwrap();
        let ds = load_dataset(&cfg).unwrap();
        let mem = run_seed(&cfg, &ds, 0).unwrap().report;
        // the CSV round trip may reorder domain codes, which moves sums by an ulp
        assert_eq!(disk.rows.len(), mem.rows.len());
        for (a, b) in disk.rows.iter().zip(&mem.rows) {
            assert_eq!((a.subgroup, &a.method, &a.metric), (b.subgroup, &b.method, &b.metric));
            assert!((a.value - b.value).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rank_without_train_reports_missing_model() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        stage_synth(&cfg).unwrap();
        for st in [Stage::Prep, Stage::Lattice, Stage::Sample, Stage::Mi] {
            run_stage(&cfg, st, 0).unwrap();
        }
        assert!(matches!(stage_rank(&cfg, 0), Err(Error::MissingModel(_))));
    }

    #[test]
    fn out_of_order_stage_names_the_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        assert!(matches!(stage_lattice(&cfg, 0), Err(Error::MissingArtifact(_))));
    }
}
