//! Regressors over lattice nodes and the training machinery they share.

pub mod gnn;
pub mod train;

pub use gnn::{gradient_check, train_subgroup, GnnModel, GraphInput};
pub use train::{HyperParams, Params, Regressor, TrainReport};
