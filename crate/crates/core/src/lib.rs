//! Mutual-information ranking of feature subsets across subgroups with
//! systematically missing features.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod info;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod query;
pub mod rng;
pub mod sampler;
pub mod subset;
pub mod synth;

pub use error::{Error, Result};
pub use subset::{FeatureSubset, LevelBounds};
