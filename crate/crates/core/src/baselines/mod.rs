//! Comparison methods: nearest-neighbor imputation and a graph-free MLP.

pub mod knn;
pub mod mlp;

pub use knn::{knn_impute, KnnConfig};
pub use mlp::{mlp_gradient_check, train_mlp, MlpModel};
