//! Fully connected regressor on subset indicator vectors.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::MultiplexGraph;
use crate::nn::train::{self, HyperParams, Params, Regressor, TrainReport};
use crate::rng;
use crate::subset::FeatureSubset;

const MAGIC: &[u8; 8] = b"MILMLP01";

/// Width of both hidden layers.
pub const MLP_HIDDEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpMeta {
    pub n_features: usize,
    pub hidden: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    pub trained_for: Option<usize>,
}

/// `n → hidden → hidden → 1` with ReLU activations.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub meta: MlpMeta,
    pub params: Params,
}

struct Cache {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    y: Array1<f64>,
}

impl MlpModel {
    pub fn new(n: usize, hidden: usize, hyper: &HyperParams, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let mut params = Params::new();
        params.push_matrix(hidden, n, &mut r);
        params.push_bias(hidden);
        params.push_matrix(hidden, hidden, &mut r);
        params.push_bias(hidden);
        params.push_matrix(1, hidden, &mut r);
        params.push_bias(1);
        MlpModel {
            meta: MlpMeta {
                n_features: n,
                hidden,
                seed,
                hyper: hyper.clone(),
                trained_for: None,
            },
            params,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Cache {
        let t = &self.params.tensors;
        let z1 = x.dot(&t[0].t()) + &t[1];
        let h1 = z1.mapv(|v| v.max(0.0));
        let z2 = h1.dot(&t[2].t()) + &t[3];
        let h2 = z2.mapv(|v| v.max(0.0));
        let y = h2.dot(&t[4].row(0)) + t[5][[0, 0]];
        Cache { z1, h1, z2, h2, y }
    }

    fn inputs(&self, subsets: &[FeatureSubset]) -> Array2<f64> {
        let n = self.meta.n_features;
        Array2::from_shape_fn((subsets.len(), n), |(v, f)| if subsets[v].contains(f) { 1.0 } else { 0.0 })
    }

    /// Raw predictions, one per subset.
    pub fn predict(&self, subsets: &[FeatureSubset]) -> Vec<f64> {
        self.forward(&self.inputs(subsets)).y.to_vec()
    }

    fn loss_grad_on(&self, x: &Array2<f64>, idx: &[usize], targets: &[f64]) -> (f64, Vec<Array2<f64>>, Vec<f64>) {
        let c = self.forward(x);
        let t = &self.params.tensors;
        let count = idx.len().max(1) as f64;
        let mut dy = Array1::<f64>::zeros(c.y.len());
        let mut loss = 0.0;
        for (&v, &y) in idx.iter().zip(targets) {
            let r = c.y[v] - y;
            loss += r * r;
            dy[v] += 2.0 * r / count;
        }
        loss /= count;
        let mut g = self.params.zeros_like();
        g[4].row_mut(0).assign(&c.h2.t().dot(&dy));
        g[5][[0, 0]] = dy.sum();
        let mut dz2 = dy.view().insert_axis(Axis(1)).dot(&t[4]);
        ndarray::Zip::from(&mut dz2).and(&c.z2).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        g[2] = dz2.t().dot(&c.h1);
        g[3] = dz2.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dz1 = dz2.dot(&t[2]);
        ndarray::Zip::from(&mut dz1).and(&c.z1).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        g[0] = dz1.t().dot(x);
        g[1] = dz1.sum_axis(Axis(0)).insert_axis(Axis(0));
        (loss, g, c.y.to_vec())
    }

    /// Non-negative predictions for the nodes of subgroup `i` without an exact label.
    pub fn predict_missing(&self, graph: &MultiplexGraph, i: usize) -> Result<BTreeMap<FeatureSubset, f64>> {
        if self.meta.trained_for.is_none() {
            return Err(Error::Untrained);
        }
        let labels = graph.labels(i);
        let todo: Vec<FeatureSubset> = graph
            .shape()
            .subsets()
            .iter()
            .enumerate()
            .filter(|(v, _)| labels[*v].is_none())
            .map(|(_, &s)| s)
            .collect();
        let preds = self.predict(&todo);
        Ok(todo.into_iter().zip(preds).map(|(s, p)| (s, p.max(0.0))).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        train::write_checkpoint(path.as_ref(), MAGIC, &self.meta, &self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, params) = train::read_checkpoint(path.as_ref(), MAGIC)?;
        Ok(MlpModel { meta, params })
    }
}

/// The model paired with the fixed input matrix it is fit on.
pub struct BoundMlp<'a> {
    pub model: &'a mut MlpModel,
    pub inputs: Array2<f64>,
}

impl Regressor for BoundMlp<'_> {
    fn params(&self) -> &Params {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.model.params
    }

    fn predict_at(&self, idx: &[usize]) -> Vec<f64> {
        let y = self.model.forward(&self.inputs).y;
        idx.iter().map(|&v| y[v]).collect()
    }

    fn loss_grad(&self, idx: &[usize], targets: &[f64]) -> (f64, Vec<Array2<f64>>, Vec<f64>) {
        self.model.loss_grad_on(&self.inputs, idx, targets)
    }
}

/// Fits an MLP on the exact labels of one subgroup with the same optimizer,
/// split and epoch selection as the graph model.
pub fn train_mlp(
    n: usize,
    subgroup: usize,
    labels: &BTreeMap<FeatureSubset, f64>,
    hyper: &HyperParams,
    seed: u64,
) -> Result<(MlpModel, TrainReport)> {
    let subsets: Vec<FeatureSubset> = labels.keys().copied().collect();
    let labeled: Vec<(usize, f64, usize)> = labels
        .iter()
        .enumerate()
        .map(|(k, (s, &y))| (k, y, s.level()))
        .collect();
    let mut model = MlpModel::new(n, MLP_HIDDEN, hyper, seed);
    let inputs = model.inputs(&subsets);
    let report = {
        let mut bound = BoundMlp {
            model: &mut model,
            inputs,
        };
        train::fit(&mut bound, &labeled, hyper, rng::derive_seed(seed, 1))?
    };
    model.meta.trained_for = Some(subgroup);
    Ok((model, report))
}

/// Gradient check on the given labels; see [`train::gradient_check`].
pub fn mlp_gradient_check(model: &mut MlpModel, labels: &BTreeMap<FeatureSubset, f64>, eps: f64) -> f64 {
    let subsets: Vec<FeatureSubset> = labels.keys().copied().collect();
    let y: Vec<f64> = labels.values().copied().collect();
    let idx: Vec<usize> = (0..subsets.len()).collect();
    let inputs = model.inputs(&subsets);
    let mut bound = BoundMlp { model, inputs };
    train::gradient_check(&mut bound, &idx, &y, eps, 1e-8)
}
