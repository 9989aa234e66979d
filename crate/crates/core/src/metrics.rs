//! Ranking quality, distribution distance and upward-closure measures.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeShape, MultiplexGraph, NodeId};
use crate::sampler::SampleSet;
use crate::subset::FeatureSubset;

/// Default bin count for [`tv_distance`].
pub const TV_BINS: usize = 20;

fn check_k(k: usize, truth: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidK);
    }
    if truth < k {
        return Err(Error::Shape(format!("ground truth has {truth} entries, K = {k}")));
    }
    Ok(())
}

/// Binary-relevance nDCG@K: hits in the predicted prefix discounted by
/// `1/log2(rank+1)`, normalized by the ideal prefix.
pub fn ndcg_at_k(ranking: &[FeatureSubset], truth: &[FeatureSubset], k: usize) -> Result<f64> {
    check_k(k, truth.len())?;
    let truth: BTreeSet<_> = truth.iter().collect();
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, s)| truth.contains(s))
        .map(|(r, _)| discount(r))
        .sum();
    let ideal: f64 = (0..k).map(discount).sum();
    Ok(dcg / ideal)
}

/// `|prefix_K ∩ truth| / K`.
pub fn precision_at_k(ranking: &[FeatureSubset], truth: &[FeatureSubset], k: usize) -> Result<f64> {
    check_k(k, truth.len())?;
    let truth: BTreeSet<_> = truth.iter().collect();
    let hits = ranking.iter().take(k).filter(|s| truth.contains(s)).count();
    Ok(hits as f64 / k as f64)
}

/// Normalized histogram of `values` over `bins` equal-width bins on `[lo, hi]`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = hi - lo;
    for &x in values {
        let b = if width > 0.0 {
            (((x - lo) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        h[b] += 1.0;
    }
    let total = values.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= total);
    h
}

/// `Σ |s_e − p_e|` over two probability vectors.
pub fn tv_from_histograms(s: &[f64], p: &[f64]) -> f64 {
    s.iter().zip(p).map(|(a, b)| (a - b).abs()).sum()
}

/// ℓ1 distance between the binned distributions of two samples, with
/// `bins` equal-width bins spanning their combined range.
pub fn tv_distance(sample: &[f64], population: &[f64], bins: usize) -> Result<f64> {
    if sample.is_empty() || population.is_empty() {
        return Err(Error::EmptyInput("tv_distance"));
    }
    if bins < 2 {
        return Err(Error::Shape(format!("{bins} bins")));
    }
    let all = sample.iter().chain(population);
    let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(tv_from_histograms(
        &histogram(sample, lo, hi, bins),
        &histogram(population, lo, hi, bins),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureAccuracy {
    pub overall: f64,
    /// Keyed by the level of the larger subset.
    pub per_level: BTreeMap<usize, f64>,
    pub edges: usize,
}

/// Fraction of inter-level edges `S ⊂ T` with `score(T) ≥ score(S)`.
pub fn upward_closure_accuracy(
    scores: &BTreeMap<FeatureSubset, f64>,
    shape: &LatticeShape,
) -> Result<ClosureAccuracy> {
    let get = |s: FeatureSubset| scores.get(&s).copied().ok_or(Error::MissingScore(s.bits()));
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (v, &upper) in shape.subsets().iter().enumerate() {
        let hi = get(upper)?;
        for &w in shape.down().row(v) {
            let lo = get(shape.subsets()[w as usize])?;
            let e = per.entry(upper.level()).or_default();
            e.1 += 1;
            if hi >= lo {
                e.0 += 1;
            }
        }
    }
    let (ok, total) = per.values().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(ClosureAccuracy {
        overall: if total == 0 { 1.0 } else { ok as f64 / total as f64 },
        per_level: per
            .into_iter()
            .map(|(l, (ok, n))| (l, ok as f64 / n as f64))
            .collect(),
        edges: total,
    })
}

/// Nodes of subgroup `i` whose MI is not known exactly: those touching a
/// missing feature plus computable ones left out of the sample.
pub fn build_test_set(graph: &MultiplexGraph, samples: &SampleSet, i: usize) -> Vec<FeatureSubset> {
    let sampled: BTreeSet<_> = samples.sampled.iter().collect();
    graph
        .shape()
        .subsets()
        .iter()
        .copied()
        .filter(|s| !graph.labelable(NodeId::new(i, *s)) || !sampled.contains(s))
        .collect()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &o in &order[k..=end] {
            r[o] = avg;
        }
        k = end + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub subgroup: usize,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// Per-subgroup metric values plus their averages over subgroups and seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<MetricRow>,
    /// `method → metric → mean`.
    pub averages: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricReport {
    pub fn push(&mut self, seed: u64, subgroup: usize, method: &str, metric: &str, value: f64) {
        if !self.seeds.contains(&seed) {
            self.seeds.push(seed);
        }
        self.rows.push(MetricRow {
            seed,
            subgroup,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    /// Recomputes `averages` from `rows`.
    pub fn summarize(&mut self) {
        let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry((r.method.clone(), r.metric.clone())).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        self.averages.clear();
        for ((method, metric), (sum, n)) in acc {
            self.averages
                .entry(method)
                .or_default()
                .insert(metric, sum / n as f64);
        }
    }

    pub fn average(&self, method: &str, metric: &str) -> Option<f64> {
        self.averages.get(method).and_then(|m| m.get(metric)).copied()
    }

    pub fn merge(&mut self, other: MetricReport) {
        for s in other.seeds {
            if !self.seeds.contains(&s) {
                self.seeds.push(s);
            }
        }
        self.rows.extend(other.rows);
        self.summarize();
    }

    pub fn save(&self, json: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(json, self)?;
        let csv_path = csv_path.as_ref();
        crate::io::ensure_parent(csv_path)?;
        let mut w = csv::Writer::from_path(csv_path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subset::LevelBounds;

    fn s(b: u32) -> FeatureSubset {
        FeatureSubset::from_bits(b)
    }

    #[test]
    fn ndcg_worked_example() {
        let truth = [s(1), s(2), s(3)];
        let pred = [s(1), s(9), s(2)];
        let v = ndcg_at_k(&pred, &truth, 3).unwrap();
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2() + 0.5);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.7039).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&truth, &truth, 3).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[s(7), s(8), s(9)], &truth, 3).unwrap(), 0.0);
        assert!(matches!(ndcg_at_k(&pred, &truth, 0), Err(Error::InvalidK)));
    }

    #[test]
    fn precision_examples() {
        let truth = [s(1), s(2), s(3), s(4), s(5)];
        let pred = [s(1), s(2), s(3), s(8), s(9)];
        assert!((precision_at_k(&pred, &truth, 5).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(precision_at_k(&[s(9)], &truth, 1).unwrap(), 0.0);
        assert_eq!(precision_at_k(&[s(4)], &truth, 1).unwrap(), 1.0);
    }

    #[test]
    fn tv_examples() {
        assert!((tv_from_histograms(&[0.5, 0.5], &[0.25, 0.75]) - 0.5).abs() < 1e-12);
        assert!((tv_distance(&[0.0, 0.1], &[0.9, 1.0], 20).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(tv_distance(&[0.2, 0.4, 0.4], &[0.4, 0.2, 0.4], 20).unwrap(), 0.0);
        assert!(matches!(tv_distance(&[], &[1.0], 20), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn closure_accuracy_of_reversed_scores() {
        let shape = LatticeShape::new(3, LevelBounds::full(3)).unwrap();
        let up: BTreeMap<_, _> = shape.subsets().iter().map(|&x| (x, x.level() as f64)).collect();
        let down: BTreeMap<_, _> = up.iter().map(|(&k, &v)| (k, -v)).collect();
        let a = upward_closure_accuracy(&up, &shape).unwrap();
        assert_eq!(a.overall, 1.0);
        assert_eq!(a.edges, 9);
        assert_eq!(upward_closure_accuracy(&down, &shape).unwrap().overall, 0.0);
        let mut partial = up.clone();
        partial.remove(&s(7));
        assert!(matches!(
            upward_closure_accuracy(&partial, &shape),
            Err(Error::MissingScore(7))
        ));
    }

    #[test]
    fn test_set_composition() {
        let g = MultiplexGraph::from_masks(3, vec![s(0b011), s(0b111)], LevelBounds::full(3)).unwrap();
        let all = SampleSet {
            subgroup: 0,
            seed: 0,
            budget: 3,
            sampled: vec![s(1), s(2), s(3)],
            steps: 0,
        };
        let t = build_test_set(&g, &all, 0);
        assert_eq!(t, vec![s(4), s(5), s(6), s(7)]);
        let full = SampleSet {
            sampled: (1..8).map(s).collect(),
            ..all
        };
        assert!(build_test_set(&g, &full, 1).is_empty());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn tv_symmetric_and_triangular(
            a in proptest::collection::vec(0.0f64..1.0, 1..40),
            b in proptest::collection::vec(0.0f64..1.0, 1..40),
            c in proptest::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let hist = |v: &[f64]| histogram(v, 0.0, 1.0, TV_BINS);
            let (ha, hb, hc) = (hist(&a), hist(&b), hist(&c));
            let ab = tv_from_histograms(&ha, &hb);
            proptest::prop_assert!((ab - tv_from_histograms(&hb, &ha)).abs() < 1e-12);
            proptest::prop_assert!(ab <= tv_from_histograms(&ha, &hc) + tv_from_histograms(&hc, &hb) + 1e-12);
            proptest::prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        }

        #[test]
        fn ranking_metrics_ignore_monotone_transforms(scores in proptest::collection::vec(0.0f64..1.0, 12)) {
            let subsets: Vec<FeatureSubset> = (1..=12).map(s).collect();
            let rank = |f: &dyn Fn(f64) -> f64| {
                let mut v: Vec<(f64, FeatureSubset)> = scores.iter().map(|&x| f(x)).zip(subsets.iter().copied()).collect();
                v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                v.into_iter().map(|x| x.1).collect::<Vec<_>>()
            };
            let truth = &subsets[..5];
            let a = rank(&|x| x);
            let b = rank(&|x| (3.0 * x).exp());
            proptest::prop_assert_eq!(ndcg_at_k(&a, truth, 5).unwrap(), ndcg_at_k(&b, truth, 5).unwrap());
            proptest::prop_assert_eq!(precision_at_k(&a, truth, 5).unwrap(), precision_at_k(&b, truth, 5).unwrap());
            let p = precision_at_k(&a, truth, 5).unwrap();
            let n = ndcg_at_k(&a, truth, 5).unwrap();
            proptest::prop_assert_eq!(p == 1.0, (n - 1.0).abs() < 1e-12);
        }
    }
}
