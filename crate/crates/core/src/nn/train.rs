//! Parameter storage, Adam, the epoch loop and binary checkpoints shared by
//! the graph model and the MLP baseline.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            layers: 2,
            hidden: 128,
            epochs: 1000,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            validation_fraction: 0.2,
        }
    }
}

/// Fewest labels a model can be trained on.
pub const MIN_LABELS: usize = 5;

/// Flat list of parameter tensors. Biases are stored as `1 × d` rows and
/// are exempt from weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub tensors: Vec<Array2<f64>>,
    pub decay: Vec<bool>,
}

impl Params {
    pub fn new() -> Self {
        Params {
            tensors: Vec::new(),
            decay: Vec::new(),
        }
    }

    /// Glorot-uniform matrix of shape `rows × cols`.
    pub fn push_matrix(&mut self, rows: usize, cols: usize, rng: &mut rng::Rng) -> usize {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        self.tensors
            .push(Array2::from_shape_fn((rows, cols), |_| dist.sample(rng)));
        self.decay.push(true);
        self.tensors.len() - 1
    }

    pub fn push_bias(&mut self, cols: usize) -> usize {
        self.tensors.push(Array2::zeros((1, cols)));
        self.decay.push(false);
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.tensors.iter_mut().for_each(|t| t.fill(value));
    }

    /// Visits every scalar as `(tensor, flat index)`.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.tensors
            .iter()
            .enumerate()
            .flat_map(|(k, t)| (0..t.len()).map(move |j| (k, j)))
    }

    pub fn get(&self, (k, j): (usize, usize)) -> f64 {
        self.tensors[k].as_slice().expect("standard layout")[j]
    }

    pub fn set(&mut self, (k, j): (usize, usize), v: f64) {
        self.tensors[k].as_slice_mut().expect("standard layout")[j] = v;
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

/// Adam with decoupled weight decay on matrices.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut Params, grads: &[Array2<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for (k, g) in grads.iter().enumerate() {
            let wd = if params.decay[k] { self.weight_decay } else { 0.0 };
            ndarray::Zip::from(&mut params.tensors[k])
                .and(&mut self.m[k])
                .and(&mut self.v[k])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let step = (*m / c1) / ((*v / c2).sqrt() + eps);
                    *p -= lr * (step + wd * *p);
                });
        }
    }
}

/// A model whose parameters are fit to scalar targets at integer positions
/// (graph nodes, rows).
pub trait Regressor {
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;
    /// Predictions at `idx`.
    fn predict_at(&self, idx: &[usize]) -> Vec<f64>;
    /// Mean squared error over `idx`, its gradient, and the predictions at
    /// every position from the same forward pass.
    fn loss_grad(&self, idx: &[usize], targets: &[f64]) -> (f64, Vec<Array2<f64>>, Vec<f64>);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub selected_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.selected_epoch]
    }
}

pub fn mse(pred: &[f64], targets: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n
}

/// Splits labeled items into training and validation positions. Items are
/// ordered by `(stratum, random key)` and every `1/fraction`-th one is held
/// out, so each stratum contributes its share.
pub fn stratified_split(
    strata: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng::seeded(seed);
    let mut order: Vec<(usize, u64, usize)> = strata
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, rng.random::<u64>(), k))
        .collect();
    order.sort_unstable();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (r, &(_, _, k)) in order.iter().enumerate() {
        if ((r + 1) as f64 * fraction).floor() > (r as f64 * fraction).floor() {
            val.push(k);
        } else {
            train.push(k);
        }
    }
    if val.is_empty() && train.len() > 1 {
        val.push(train.pop().expect("non-empty"));
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Full-batch training with best-validation-epoch selection.
///
/// `labeled` holds `(position, target, stratum)`. On return the model holds
/// the parameters of the selected epoch.
pub fn fit<R: Regressor>(
    model: &mut R,
    labeled: &[(usize, f64, usize)],
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainReport> {
    if labeled.len() < MIN_LABELS {
        return Err(Error::TooFewLabels {
            found: labeled.len(),
            required: MIN_LABELS,
        });
    }
    let strata: Vec<usize> = labeled.iter().map(|l| l.2).collect();
    let (tr, va) = stratified_split(&strata, hp.validation_fraction, seed);
    let tr_idx: Vec<usize> = tr.iter().map(|&k| labeled[k].0).collect();
    let tr_y: Vec<f64> = tr.iter().map(|&k| labeled[k].1).collect();
    let va_idx: Vec<usize> = va.iter().map(|&k| labeled[k].0).collect();
    let va_y: Vec<f64> = va.iter().map(|&k| labeled[k].1).collect();

    let mut adam = Adam::new(model.params(), hp.learning_rate, hp.weight_decay);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(hp.epochs),
        val_loss: Vec::with_capacity(hp.epochs),
        selected_epoch: 0,
        n_train: tr_idx.len(),
        n_val: va_idx.len(),
    };
    let mut best = model.params().clone();
    for epoch in 0..hp.epochs.max(1) {
        let (loss, grads, preds) = model.loss_grad(&tr_idx, &tr_y);
        let val_pred: Vec<f64> = va_idx.iter().map(|&v| preds[v]).collect();
        let val = mse(&val_pred, &va_y);
        if !loss.is_finite() || !val.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        report.train_loss.push(loss);
        report.val_loss.push(val);
        if val < report.val_loss[report.selected_epoch] || epoch == 0 {
            report.selected_epoch = epoch;
            best.clone_from(model.params());
        }
        adam.update(model.params_mut(), &grads);
    }
    *model.params_mut() = best;
    Ok(report)
}

/// Largest relative error between analytic and central-difference
/// gradients. Pairs where both magnitudes fall below `floor` are skipped.
pub fn gradient_check<R: Regressor>(
    model: &mut R,
    idx: &[usize],
    targets: &[f64],
    eps: f64,
    floor: f64,
) -> f64 {
    let (_, grads, _) = model.loss_grad(idx, targets);
    let positions: Vec<_> = model.params().positions().collect();
    let mut worst = 0.0f64;
    for pos in positions {
        let orig = model.params().get(pos);
        model.params_mut().set(pos, orig + eps);
        let up = mse(&model.predict_at(idx), targets);
        model.params_mut().set(pos, orig - eps);
        let down = mse(&model.predict_at(idx), targets);
        model.params_mut().set(pos, orig);
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads[pos.0].as_slice().expect("standard layout")[pos.1];
        let scale = numeric.abs().max(analytic.abs());
        if scale < floor {
            continue;
        }
        worst = worst.max((numeric - analytic).abs() / scale);
    }
    worst
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader<H> {
    meta: H,
    shapes: Vec<(usize, usize)>,
    decay: Vec<bool>,
}

/// Writes `magic`, a length-prefixed JSON header, then every tensor as
/// little-endian f64 in declared order.
pub fn write_checkpoint<H: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    meta: &H,
    params: &Params,
) -> Result<()> {
    crate::io::ensure_parent(path)?;
    let header = CheckpointHeader {
        meta,
        shapes: params.tensors.iter().map(|t| t.dim()).collect(),
        decay: params.decay.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(magic)?;
    write(&(json.len() as u64).to_le_bytes())?;
    write(&json)?;
    for t in &params.tensors {
        for &x in t.iter() {
            write(&x.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Params)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bad = |reason: &str| Error::Artifact {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..8] != magic {
        return Err(bad("wrong magic"));
    }
    let len = u64::from_le_bytes(head[8..].try_into().expect("8 bytes")) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: CheckpointHeader<H> = serde_json::from_slice(&json)?;
    let mut tensors = Vec::with_capacity(header.shapes.len());
    let mut buf = [0u8; 8];
    for &(rows, cols) in &header.shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(|_| bad("truncated parameters"))?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))?);
    }
    Ok((
        header.meta,
        Params {
            tensors,
            decay: header.decay,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_deterministic() {
        let strata: Vec<usize> = (0..50).map(|k| if k < 10 { 1 } else { 2 }).collect();
        let (tr, va) = stratified_split(&strata, 0.2, 7);
        assert_eq!(va.len(), 10);
        assert_eq!(tr.len(), 40);
        assert_eq!(va.iter().filter(|&&k| k < 10).count(), 2);
        assert_eq!((tr, va), stratified_split(&strata, 0.2, 7));
    }

    #[test]
    fn split_keeps_one_validation_item() {
        let (tr, va) = stratified_split(&[1, 1, 1], 0.2, 0);
        assert_eq!((tr.len(), va.len()), (2, 1));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = Params::new();
        p.push_bias(2);
        let mut adam = Adam::new(&p, 0.1, 0.0);
        let g = vec![Array2::from_elem((1, 2), 1.0)];
        adam.update(&mut p, &g);
        // first bias-corrected step is exactly lr in magnitude
        assert!((p.tensors[0][[0, 0]] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = rng::seeded(1);
        let mut p = Params::new();
        p.push_matrix(3, 4, &mut rng);
        p.push_bias(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, b"TESTCKPT", &42u32, &p).unwrap();
        let (meta, back): (u32, Params) = read_checkpoint(&path, b"TESTCKPT").unwrap();
        assert_eq!(meta, 42);
        assert_eq!(back, p);
        assert!(matches!(
            read_checkpoint::<u32>(&path, b"OTHERMAG"),
            Err(Error::Artifact { .. })
        ));
    }
}
