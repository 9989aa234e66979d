//! Heterogeneous message passing over the multiplex lattice graph.
//!
//! Layer `t` for a node `v` of subgroup `i`:
//!
//! ```text
//! m   = W_agg[t,i] · mean_{u ∈ N_i(v)} h_u  +  Σ_{j ≠ i} W_cross[t,j→i] · h_{v_j}
//! h_v = ReLU(W_conc[t,i] · [h_v ‖ m] + b[t,i])
//! ```
//!
//! where `N_i(v)` pools inter-level and intra-level neighbors and `v_j` is the
//! same subset in subgroup `j`. Layer 0 is the subset's 0/1 indicator. The
//! output for subgroup `i` is `w_out[i] · h_v + b_out[i]`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::train::{self, HyperParams, Params, Regressor, TrainReport};
use crate::error::{Error, Result};
use crate::lattice::MultiplexGraph;
use crate::rng;
use crate::subset::{FeatureSubset, LevelBounds};

const MAGIC: &[u8; 8] = b"MILGNN01";

/// Pooled intra-lattice neighborhoods over local indices, rows sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    rows: Vec<Vec<u32>>,
}

impl Adjacency {
    pub fn from_rows(mut rows: Vec<Vec<u32>>) -> Self {
        for r in &mut rows {
            r.sort_unstable();
        }
        Adjacency { rows }
    }

    pub fn of_graph(graph: &MultiplexGraph) -> Self {
        let shape = graph.shape();
        let rows = (0..shape.len())
            .map(|v| {
                let mut r = shape.down().row(v).to_vec();
                r.extend_from_slice(shape.up().row(v));
                r.extend_from_slice(shape.intra().row(v));
                r
            })
            .collect();
        Adjacency::from_rows(rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn mean(&self, h: &Array2<f64>) -> Array2<f64> {
        let (v, d) = h.dim();
        let mut out = Array2::zeros((v, d));
        let h = h.as_standard_layout();
        let src = h.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("standard layout");
        for (a, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let acc = &mut dst[a * d..(a + 1) * d];
            for &b in row {
                let b = b as usize;
                for (x, y) in acc.iter_mut().zip(&src[b * d..(b + 1) * d]) {
                    *x += y;
                }
            }
            let inv = 1.0 / row.len() as f64;
            acc.iter_mut().for_each(|x| *x *= inv);
        }
        out
    }

    /// Transpose of [`Adjacency::mean`] applied to `g`.
    fn mean_backward(&self, g: &Array2<f64>) -> Array2<f64> {
        let (v, d) = g.dim();
        let mut out = Array2::zeros((v, d));
        let g = g.as_standard_layout();
        let src = g.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("standard layout");
        for (a, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            let inv = 1.0 / row.len() as f64;
            for &b in row {
                let b = b as usize;
                for (x, y) in dst[b * d..(b + 1) * d].iter_mut().zip(&src[a * d..(a + 1) * d]) {
                    *x += y * inv;
                }
            }
        }
        out
    }
}

/// Graph-side inputs of a forward pass.
#[derive(Clone, Debug)]
pub struct GraphInput {
    x: Array2<f64>,
    adj: Adjacency,
    subgroups: usize,
    n: usize,
    bounds: LevelBounds,
}

impl GraphInput {
    pub fn new(graph: &MultiplexGraph) -> Self {
        Self::with_adjacency(graph, Adjacency::of_graph(graph))
    }

    pub fn with_adjacency(graph: &MultiplexGraph, adj: Adjacency) -> Self {
        let n = graph.n_features();
        let subsets = graph.shape().subsets();
        let x = Array2::from_shape_fn((subsets.len(), n), |(v, f)| {
            if subsets[v].contains(f) {
                1.0
            } else {
                0.0
            }
        });
        GraphInput {
            x,
            adj,
            subgroups: graph.n_subgroups(),
            n,
            bounds: graph.bounds(),
        }
    }

    pub fn n_local(&self) -> usize {
        self.x.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnMeta {
    pub n_features: usize,
    pub subgroups: usize,
    pub layers: usize,
    pub hidden: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    pub bounds: LevelBounds,
    /// Subgroup whose labels the parameters were fit to.
    pub trained_for: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    pub meta: GnnMeta,
    pub params: Params,
    broken_relu_backward: bool,
}

#[derive(Default)]
struct LayerCache {
    agg: Vec<Option<Array2<f64>>>,
    cat: Vec<Option<Array2<f64>>>,
    z: Vec<Option<Array2<f64>>>,
    h: Vec<Option<Array2<f64>>>,
}

impl GnnModel {
    /// Fresh model with Glorot-uniform matrices and zero biases.
    pub fn new(n: usize, subgroups: usize, bounds: LevelBounds, hyper: &HyperParams, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let mut params = Params::new();
        let d = hyper.hidden;
        for t in 0..hyper.layers {
            let d_in = if t == 0 { n } else { d };
            for _ in 0..subgroups {
                params.push_matrix(d, d_in, &mut r);
                for _ in 1..subgroups {
                    params.push_matrix(d, d_in, &mut r);
                }
                params.push_matrix(d, d_in + d, &mut r);
                params.push_bias(d);
            }
        }
        for _ in 0..subgroups {
            params.push_matrix(1, d, &mut r);
            params.push_bias(1);
        }
        GnnModel {
            meta: GnnMeta {
                n_features: n,
                subgroups,
                layers: hyper.layers,
                hidden: d,
                seed,
                hyper: hyper.clone(),
                bounds,
                trained_for: None,
            },
            params,
            broken_relu_backward: false,
        }
    }

    /// Test hook: drop the ReLU mask in the backward pass.
    #[doc(hidden)]
    pub fn break_relu_backward(&mut self) {
        self.broken_relu_backward = true;
    }

    fn block(&self, t: usize, i: usize) -> usize {
        let p = self.meta.subgroups;
        (t * p + i) * (p + 2)
    }

    fn w_agg(&self, t: usize, i: usize) -> usize {
        self.block(t, i)
    }

    fn w_cross(&self, t: usize, j: usize, i: usize) -> usize {
        self.block(t, i) + 1 + if j < i { j } else { j - 1 }
    }

    fn w_conc(&self, t: usize, i: usize) -> usize {
        self.block(t, i) + self.meta.subgroups
    }

    fn b_conc(&self, t: usize, i: usize) -> usize {
        self.block(t, i) + self.meta.subgroups + 1
    }

    fn w_out(&self, i: usize) -> usize {
        self.block(self.meta.layers, 0) + 2 * i
    }

    fn b_out(&self, i: usize) -> usize {
        self.w_out(i) + 1
    }

    fn p(&self, k: usize) -> &Array2<f64> {
        &self.params.tensors[k]
    }

    fn check(&self, input: &GraphInput) -> Result<()> {
        if input.subgroups != self.meta.subgroups || input.n != self.meta.n_features {
            return Err(Error::Shape(format!(
                "graph has {} subgroups over {} features, model expects {} over {}",
                input.subgroups, input.n, self.meta.subgroups, self.meta.n_features
            )));
        }
        if input.bounds != self.meta.bounds {
            return Err(Error::Shape(format!(
                "graph levels {}..={} differ from model levels {}..={}",
                input.bounds.min, input.bounds.max, self.meta.bounds.min, self.meta.bounds.max
            )));
        }
        Ok(())
    }

    /// Runs all layers, computing the last one only for `last`.
    fn forward_cache(&self, input: &GraphInput, last: &[usize]) -> Vec<LayerCache> {
        let p = self.meta.subgroups;
        let layers = self.meta.layers;
        let all: Vec<usize> = (0..p).collect();
        let mut caches: Vec<LayerCache> = Vec::with_capacity(layers);
        for t in 0..layers {
            let targets = if t + 1 == layers { last } else { &all[..] };
            let mut cache = LayerCache {
                agg: vec![None; p],
                cat: vec![None; p],
                z: vec![None; p],
                h: vec![None; p],
            };
            let prev = |j: usize| -> &Array2<f64> {
                if t == 0 {
                    &input.x
                } else {
                    caches[t - 1].h[j].as_ref().expect("previous layer computed")
                }
            };
            for &i in targets {
                let agg = input.adj.mean(prev(i));
                let mut m = agg.dot(&self.p(self.w_agg(t, i)).t());
                for j in (0..p).filter(|&j| j != i) {
                    m += &prev(j).dot(&self.p(self.w_cross(t, j, i)).t());
                }
                let cat = concatenate(Axis(1), &[prev(i).view(), m.view()]).expect("row counts agree");
                let mut z = cat.dot(&self.p(self.w_conc(t, i)).t());
                z += self.p(self.b_conc(t, i));
                let h = z.mapv(|x| x.max(0.0));
                cache.agg[i] = Some(agg);
                cache.cat[i] = Some(cat);
                cache.z[i] = Some(z);
                cache.h[i] = Some(h);
            }
            caches.push(cache);
        }
        caches
    }

    fn output(&self, caches: &[LayerCache], i: usize) -> Array1<f64> {
        let h = caches.last().expect("at least one layer").h[i].as_ref().expect("computed");
        let w = self.p(self.w_out(i));
        let b = self.p(self.b_out(i))[[0, 0]];
        h.dot(&w.row(0)) + b
    }

    /// Predictions for every local node of subgroup `i`.
    pub fn predict_subgroup(&self, input: &GraphInput, i: usize) -> Result<Vec<f64>> {
        self.check(input)?;
        if i >= self.meta.subgroups {
            return Err(Error::Shape(format!("no subgroup {i}")));
        }
        let caches = self.forward_cache(input, &[i]);
        Ok(self.output(&caches, i).to_vec())
    }

    /// Predictions for every node of the graph, ordered by global id.
    pub fn forward(&self, graph: &MultiplexGraph) -> Result<Vec<f64>> {
        let input = GraphInput::new(graph);
        self.check(&input)?;
        let all: Vec<usize> = (0..self.meta.subgroups).collect();
        let caches = self.forward_cache(&input, &all);
        Ok(all.iter().flat_map(|&i| self.output(&caches, i).to_vec()).collect())
    }

    fn loss_grad_for(
        &self,
        input: &GraphInput,
        i: usize,
        idx: &[usize],
        targets: &[f64],
    ) -> (f64, Vec<Array2<f64>>, Vec<f64>) {
        let p = self.meta.subgroups;
        let layers = self.meta.layers;
        let caches = self.forward_cache(input, &[i]);
        let y = self.output(&caches, i);
        let mut grads = self.params.zeros_like();
        let count = idx.len().max(1) as f64;
        let mut dy = Array1::<f64>::zeros(y.len());
        let mut loss = 0.0;
        for (&v, &t) in idx.iter().zip(targets) {
            let r = y[v] - t;
            loss += r * r;
            dy[v] += 2.0 * r / count;
        }
        loss /= count;

        let h_last = caches[layers - 1].h[i].as_ref().expect("computed");
        grads[self.w_out(i)]
            .row_mut(0)
            .assign(&h_last.t().dot(&dy));
        grads[self.b_out(i)][[0, 0]] = dy.sum();
        let w_out = self.p(self.w_out(i)).row(0);
        let mut dh: Vec<Option<Array2<f64>>> = vec![None; p];
        dh[i] = Some(
            dy.view()
                .insert_axis(Axis(1))
                .dot(&w_out.insert_axis(Axis(0))),
        );

        for t in (0..layers).rev() {
            let d_in = if t == 0 { self.meta.n_features } else { self.meta.hidden };
            let mut dprev: Vec<Option<Array2<f64>>> = vec![None; p];
            let prev = |j: usize| -> &Array2<f64> {
                if t == 0 {
                    &input.x
                } else {
                    caches[t - 1].h[j].as_ref().expect("computed")
                }
            };
            for j in 0..p {
                let Some(g) = dh[j].take() else { continue };
                let z = caches[t].z[j].as_ref().expect("computed");
                let dz = if self.broken_relu_backward {
                    g
                } else {
                    let mut g = g;
                    ndarray::Zip::from(&mut g).and(z).for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    g
                };
                let cat = caches[t].cat[j].as_ref().expect("computed");
                grads[self.w_conc(t, j)] += &dz.t().dot(cat);
                grads[self.b_conc(t, j)] += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
                let dcat = dz.dot(self.p(self.w_conc(t, j)));
                let dself = dcat.slice(s![.., ..d_in]);
                let dm = dcat.slice(s![.., d_in..]).to_owned();
                let agg = caches[t].agg[j].as_ref().expect("computed");
                grads[self.w_agg(t, j)] += &dm.t().dot(agg);
                for k in (0..p).filter(|&k| k != j) {
                    grads[self.w_cross(t, k, j)] += &dm.t().dot(prev(k));
                }
                if t == 0 {
                    continue;
                }
                let dagg = dm.dot(self.p(self.w_agg(t, j)));
                let own = input.adj.mean_backward(&dagg) + dself;
                add_into(&mut dprev[j], own);
                for k in (0..p).filter(|&k| k != j) {
                    add_into(&mut dprev[k], dm.dot(self.p(self.w_cross(t, k, j))));
                }
            }
            dh = dprev;
        }
        (loss, grads, y.to_vec())
    }

    /// Non-negative predictions for every node of subgroup `i` without an
    /// exact label in `graph`.
    pub fn predict_missing(&self, graph: &MultiplexGraph, i: usize) -> Result<BTreeMap<FeatureSubset, f64>> {
        if self.meta.trained_for.is_none() {
            return Err(Error::Untrained);
        }
        let preds = self.predict_subgroup(&GraphInput::new(graph), i)?;
        let labels = graph.labels(i);
        Ok(graph
            .shape()
            .subsets()
            .iter()
            .enumerate()
            .filter(|(v, _)| labels[*v].is_none())
            .map(|(v, &s)| (s, preds[v].max(0.0)))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        train::write_checkpoint(path.as_ref(), MAGIC, &self.meta, &self.params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, params): (GnnMeta, Params) = train::read_checkpoint(path.as_ref(), MAGIC)?;
        let probe = GnnModel::new(meta.n_features, meta.subgroups, meta.bounds, &meta.hyper, meta.seed);
        let shapes_ok = probe.params.tensors.len() == params.tensors.len()
            && probe
                .params
                .tensors
                .iter()
                .zip(&params.tensors)
                .all(|(a, b)| a.dim() == b.dim());
        if !shapes_ok {
            return Err(Error::Artifact {
                path: path.as_ref().to_path_buf(),
                reason: "parameter shapes do not match header".into(),
            });
        }
        Ok(GnnModel {
            meta,
            params,
            broken_relu_backward: false,
        })
    }
}

fn add_into(slot: &mut Option<Array2<f64>>, value: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &value,
        None => *slot = Some(value),
    }
}

/// A model tied to a graph and the subgroup whose labels drive the loss.
pub struct BoundGnn<'a> {
    pub model: &'a mut GnnModel,
    pub input: &'a GraphInput,
    pub subgroup: usize,
}

impl Regressor for BoundGnn<'_> {
    fn params(&self) -> &Params {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.model.params
    }

    fn predict_at(&self, idx: &[usize]) -> Vec<f64> {
        let caches = self.model.forward_cache(self.input, &[self.subgroup]);
        let y = self.model.output(&caches, self.subgroup);
        idx.iter().map(|&v| y[v]).collect()
    }

    fn loss_grad(&self, idx: &[usize], targets: &[f64]) -> (f64, Vec<Array2<f64>>, Vec<f64>) {
        self.model.loss_grad_for(self.input, self.subgroup, idx, targets)
    }
}

fn labeled_positions(
    graph: &MultiplexGraph,
    labels: &BTreeMap<FeatureSubset, f64>,
) -> Result<Vec<(usize, f64, usize)>> {
    labels
        .iter()
        .map(|(&s, &y)| {
            graph
                .shape()
                .index(s)
                .map(|v| (v, y, s.level()))
                .ok_or(Error::UnknownNode {
                    subgroup: 0,
                    subset: s.bits(),
                })
        })
        .collect()
}

/// Fits a model for subgroup `i` on its exact labels. Every node of every
/// subgroup takes part in message passing; only `labels` enter the loss.
pub fn train_subgroup(
    graph: &MultiplexGraph,
    i: usize,
    labels: &BTreeMap<FeatureSubset, f64>,
    hyper: &HyperParams,
    seed: u64,
) -> Result<(GnnModel, TrainReport)> {
    if i >= graph.n_subgroups() {
        return Err(Error::Shape(format!("no subgroup {i}")));
    }
    let labeled = labeled_positions(graph, labels)?;
    let input = GraphInput::new(graph);
    let mut model = GnnModel::new(graph.n_features(), graph.n_subgroups(), graph.bounds(), hyper, seed);
    let report = {
        let mut bound = BoundGnn {
            model: &mut model,
            input: &input,
            subgroup: i,
        };
        train::fit(&mut bound, &labeled, hyper, rng::derive_seed(seed, 1))?
    };
    model.meta.trained_for = Some(i);
    Ok((model, report))
}

/// Largest relative error between analytic and finite-difference gradients
/// of the loss on `labels` for subgroup `i`.
pub fn gradient_check(
    model: &mut GnnModel,
    graph: &MultiplexGraph,
    i: usize,
    labels: &BTreeMap<FeatureSubset, f64>,
    eps: f64,
) -> Result<f64> {
    let labeled = labeled_positions(graph, labels)?;
    let idx: Vec<usize> = labeled.iter().map(|l| l.0).collect();
    let y: Vec<f64> = labeled.iter().map(|l| l.1).collect();
    let input = GraphInput::new(graph);
    model.check(&input)?;
    let mut bound = BoundGnn {
        model,
        input: &input,
        subgroup: i,
    };
    Ok(train::gradient_check(&mut bound, &idx, &y, eps, 1e-8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn graph(n: usize, groups: usize) -> MultiplexGraph {
        MultiplexGraph::from_masks(n, vec![FeatureSubset::full(n); groups], LevelBounds::full(n)).unwrap()
    }

    fn small(hidden: usize, epochs: usize) -> HyperParams {
        HyperParams {
            hidden,
            epochs,
            ..HyperParams::default()
        }
    }

    fn random_labels(g: &MultiplexGraph, count: usize, seed: u64) -> BTreeMap<FeatureSubset, f64> {
        let mut r = rng::seeded(seed);
        let mut subsets = g.shape().subsets().to_vec();
        subsets.shuffle(&mut r);
        subsets
            .into_iter()
            .take(count)
            .map(|s| (s, r.random_range(0.0..1.0)))
            .collect()
    }

    #[test]
    fn one_prediction_per_node() {
        let g = graph(4, 2);
        let m = GnnModel::new(4, 2, g.bounds(), &small(8, 1), 1);
        assert_eq!(m.forward(&g).unwrap().len(), 30);
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let g = graph(4, 3);
        let mut m = GnnModel::new(4, 3, g.bounds(), &small(8, 1), 1);
        m.params.fill(0.0);
        assert!(m.forward(&g).unwrap().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn isolated_node_uses_self_path_only() {
        // n=1, one subgroup: no neighbors and no other lattices
        let g = graph(1, 1);
        let hp = HyperParams {
            layers: 1,
            ..small(3, 1)
        };
        let m = GnnModel::new(1, 1, g.bounds(), &hp, 4);
        let y = m.forward(&g).unwrap()[0];
        let w_conc = m.p(m.w_conc(0, 0));
        let w_out = m.p(m.w_out(0));
        let expected: f64 = (0..3)
            .map(|r| w_conc[[r, 0]].max(0.0) * w_out[[0, r]])
            .sum();
        assert!((y - expected).abs() < 1e-15);
    }

    #[test]
    fn mismatched_graph_is_rejected() {
        let m = GnnModel::new(4, 2, LevelBounds::full(4), &small(4, 1), 0);
        assert!(matches!(m.forward(&graph(4, 3)), Err(Error::Shape(_))));
        assert!(matches!(m.forward(&graph(5, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (groups, layers) in [(1, 2), (2, 2), (3, 1)] {
            let g = graph(4, groups);
            let labels = random_labels(&g, 10, groups as u64);
            let hp = HyperParams {
                layers,
                ..small(8, 1)
            };
            let mut m = GnnModel::new(4, groups, g.bounds(), &hp, 3);
            let err = gradient_check(&mut m, &g, groups - 1, &labels, 1e-5).unwrap();
            assert!(err < 1e-4, "groups={groups}: {err}");
        }
    }

    #[test]
    fn broken_relu_backward_is_caught() {
        let g = graph(4, 2);
        let labels = random_labels(&g, 12, 5);
        let mut m = GnnModel::new(4, 2, g.bounds(), &small(8, 1), 3);
        m.break_relu_backward();
        assert!(gradient_check(&mut m, &g, 0, &labels, 1e-5).unwrap() > 1e-2);
    }

    #[test]
    fn zero_loss_has_zero_gradients() {
        let g = graph(3, 2);
        let mut m = GnnModel::new(3, 2, g.bounds(), &small(4, 1), 3);
        m.params.fill(0.0);
        let labels: BTreeMap<_, _> = g.shape().subsets().iter().map(|&s| (s, 0.0)).collect();
        assert_eq!(gradient_check(&mut m, &g, 0, &labels, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn constant_labels_are_fit() {
        let g = graph(4, 2);
        let labels: BTreeMap<_, _> = g.shape().subsets().iter().map(|&s| (s, 0.4)).collect();
        let (m, report) = train_subgroup(&g, 0, &labels, &small(16, 1000), 2).unwrap();
        assert!(*report.train_loss.last().unwrap() < 1e-4);
        let preds = m.predict_subgroup(&GraphInput::new(&g), 0).unwrap();
        assert!(preds.iter().all(|p| (p - 0.4).abs() < 0.2), "{preds:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let g = graph(4, 2);
        let labels = random_labels(&g, 10, 1);
        let (a, ra) = train_subgroup(&g, 1, &labels, &small(8, 30), 9).unwrap();
        let (b, rb) = train_subgroup(&g, 1, &labels, &small(8, 30), 9).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_labels() {
        let g = graph(4, 1);
        let labels = random_labels(&g, 4, 1);
        assert!(matches!(
            train_subgroup(&g, 0, &labels, &small(4, 5), 0),
            Err(Error::TooFewLabels { found: 4, .. })
        ));
    }

    #[test]
    fn selected_epoch_minimizes_validation_loss() {
        let g = graph(4, 2);
        let labels = random_labels(&g, 12, 3);
        let (_, r) = train_subgroup(&g, 0, &labels, &small(8, 60), 1).unwrap();
        let min = r.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss(), min);
    }

    #[test]
    fn shuffled_neighbor_lists_give_identical_predictions() {
        let g = graph(5, 2);
        let m = GnnModel::new(5, 2, g.bounds(), &small(8, 1), 7);
        let base = Adjacency::of_graph(&g);
        let mut r = rng::seeded(1);
        let mut rows = base.rows.clone();
        for row in &mut rows {
            row.shuffle(&mut r);
        }
        let a = m.predict_subgroup(&GraphInput::with_adjacency(&g, base), 1).unwrap();
        let b = m.predict_subgroup(&GraphInput::with_adjacency(&g, Adjacency::from_rows(rows)), 1).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn predicts_only_unlabeled_nodes() {
        let mut g = MultiplexGraph::from_masks(
            4,
            vec![FeatureSubset::from_bits(0b0111), FeatureSubset::full(4)],
            LevelBounds::full(4),
        )
        .unwrap();
        let mut labels = BTreeMap::new();
        for s in g.shape().subsets().to_vec() {
            if s.is_subset_of(FeatureSubset::from_bits(0b0111)) {
                g.set_label(crate::lattice::NodeId::new(0, s), 0.1).unwrap();
                labels.insert(s, 0.1);
            }
        }
        let untrained = GnnModel::new(4, 2, g.bounds(), &small(4, 1), 0);
        assert!(matches!(untrained.predict_missing(&g, 0), Err(Error::Untrained)));
        let (m, _) = train_subgroup(&g, 0, &labels, &small(4, 5), 0).unwrap();
        let preds = m.predict_missing(&g, 0).unwrap();
        assert_eq!(preds.len(), 8);
        assert!(preds.keys().all(|s| s.contains(3)));
        assert!(preds.values().all(|&v| v >= 0.0));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let g = graph(4, 2);
        let labels = random_labels(&g, 8, 2);
        let (m, _) = train_subgroup(&g, 0, &labels, &small(4, 3), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gnn.ckpt");
        m.save(&path).unwrap();
        let back = GnnModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
