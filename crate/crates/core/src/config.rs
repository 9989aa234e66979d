//! Run configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::HyperParams;
use crate::sampler::SamplerKind;
use crate::subset::LevelBounds;
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Output root for every artifact.
    pub out: PathBuf,
    /// Input CSV; when absent the synthetic generator provides the data.
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            dataset: None,
            schema: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub subgroup_features: Vec<String>,
    /// Equal-width bin counts for numeric columns.
    pub bins: BTreeMap<String, usize>,
    /// Explicit cut points, applied before `bins`.
    pub edges: BTreeMap<String, Vec<f64>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            subgroup_features: vec![crate::synth::GROUP_COLUMN.to_string()],
            bins: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub level_min: usize,
    /// `0` means the number of selection features.
    pub level_max: usize,
    /// Write every edge to `graph.json`, not only the summary.
    pub export_edges: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            level_min: 1,
            level_max: 0,
            export_edges: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub sampler: SamplerKind,
    pub budget_rate: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            sampler: SamplerKind::Randwalk,
            budget_rate: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig { m: 3, k: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub mlp: bool,
    pub knn: bool,
    pub knn_k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            mlp: true,
            knn: true,
            knn_k: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub features: Vec<usize>,
    pub subgroups: Vec<usize>,
    pub missing_p: Vec<f64>,
    pub budget: Vec<f64>,
    /// Features used in the subgroup, missingness and budget sweeps.
    pub base_features: usize,
    pub rows: usize,
    /// Training epochs used inside sweeps.
    pub epochs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            features: vec![8, 10, 12],
            subgroups: vec![2, 4, 8],
            missing_p: vec![0.1, 0.2, 0.3],
            budget: vec![0.25, 0.5, 0.75, 1.0],
            base_features: 10,
            rows: 10_000,
            epochs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub lattice: LatticeConfig,
    pub sampling: SamplingConfig,
    /// Systematic missingness probability applied at the prep stage.
    pub missing_p: f64,
    pub query: QueryConfig,
    pub model: HyperParams,
    pub baselines: BaselineConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            data: DataConfig::default(),
            // the prep stage applies `missing_p`; the generator's own is unused
            synth: SynthConfig::default(),
            lattice: LatticeConfig::default(),
            sampling: SamplingConfig::default(),
            missing_p: 0.2,
            query: QueryConfig::default(),
            model: HyperParams::default(),
            baselines: BaselineConfig::default(),
            seeds: vec![0, 1, 2],
            workers: 1,
            bench: BenchConfig::default(),
        }
    }
}

/// Environment variables that may override paths and seeds.
pub const ENV_OUT: &str = "MI_LATTICE_OUT";
pub const ENV_DATASET: &str = "MI_LATTICE_DATASET";
pub const ENV_SCHEMA: &str = "MI_LATTICE_SCHEMA";
pub const ENV_SEEDS: &str = "MI_LATTICE_SEEDS";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies path and seed overrides from the environment.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(ENV_OUT) {
            self.paths.out = v.into();
        }
        if let Ok(v) = std::env::var(ENV_DATASET) {
            self.paths.dataset = Some(v.into());
        }
        if let Ok(v) = std::env::var(ENV_SCHEMA) {
            self.paths.schema = Some(v.into());
        }
        if let Ok(v) = std::env::var(ENV_SEEDS) {
            self.seeds = v
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{ENV_SEEDS}: {e}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let r = self.sampling.budget_rate;
        if !(r > 0.0 && r <= 1.0) {
            return bad(format!("budget_rate = {r} outside (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.missing_p) {
            return bad(format!("missing_p = {} outside [0, 1)", self.missing_p));
        }
        if self.query.k < 1 {
            return bad("K must be at least 1".into());
        }
        if self.lattice.level_min < 1 {
            return bad("level_min must be at least 1".into());
        }
        if self.lattice.level_max != 0 {
            if self.lattice.level_max < self.lattice.level_min {
                return bad("level_max below level_min".into());
            }
            if !(self.lattice.level_min..=self.lattice.level_max).contains(&self.query.m) {
                return bad(format!(
                    "m = {} outside levels {}..={}",
                    self.query.m, self.lattice.level_min, self.lattice.level_max
                ));
            }
        } else if self.query.m < self.lattice.level_min {
            return bad(format!("m = {} below level_min", self.query.m));
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.model.layers < 1 || self.model.hidden < 1 || self.model.epochs < 1 {
            return bad("model layers, hidden width and epochs must be positive".into());
        }
        if self.baselines.knn_k < 1 {
            return bad("knn_k must be at least 1".into());
        }
        if self.paths.dataset.is_some() != self.paths.schema.is_some() {
            return bad("dataset and schema paths must be given together".into());
        }
        if self.paths.dataset.is_none() {
            self.synth.validate()?;
        }
        Ok(())
    }

    /// Level bounds for `n` selection features.
    pub fn bounds(&self, n: usize) -> Result<LevelBounds> {
        let max = if self.lattice.level_max == 0 { n } else { self.lattice.level_max };
        LevelBounds::new(self.lattice.level_min, max).validate(n)
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded. The output
    /// directory and worker count don't affect artifacts and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out = Paths::default().out;
        c.workers = 1;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.paths.out.join(format!("seed-{seed}"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.paths
            .dataset
            .clone()
            .unwrap_or_else(|| self.paths.out.join("data").join("dataset.csv"))
    }

    pub fn schema_path(&self) -> PathBuf {
        self.paths
            .schema
            .clone()
            .unwrap_or_else(|| self.paths.out.join("data").join("schema.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml(
            "seeds = [7]\nmissing_p = 0.1\n[query]\nm = 2\nK = 5\n[model]\nhidden = 16\n[synth]\nn_rows = 100\n",
        )
        .unwrap();
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.query.k, 5);
        assert_eq!(c.model.hidden, 16);
        assert_eq!(c.model.epochs, 1000);
        assert_eq!(c.synth.n_rows, 100);
    }

    #[test]
    fn validation_failures() {
        let mut c = RunConfig::default();
        c.sampling.budget_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.lattice.level_max = 2;
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("unknown = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.paths.out = "elsewhere".into();
        b.workers = 4;
        assert_eq!(a.hash(), b.hash());
        b.query.k = 5;
        assert_ne!(a.hash(), b.hash());
    }
}
