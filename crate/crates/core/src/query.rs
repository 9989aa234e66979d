//! Top-K subsets of a given size per subgroup.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SubgroupData;
use crate::error::{Error, Result};
use crate::info::{mi_of_columns, mi_shared, EntropyStore};
use crate::lattice::{MultiplexGraph, NodeId};
use crate::subset::{subsets_within, FeatureSubset, LevelBounds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Predicted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKEntry {
    pub features: Vec<String>,
    pub bitmask: String,
    pub subset: FeatureSubset,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub subgroup: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub entries: Vec<TopKEntry>,
}

impl TopKResult {
    pub fn subsets(&self) -> Vec<FeatureSubset> {
        self.entries.iter().map(|e| e.subset).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Sorts by score descending, then mask ascending, and keeps `k` entries.
fn rank(
    mut scored: Vec<(FeatureSubset, f64, Provenance)>,
    subgroup: usize,
    m: usize,
    k: usize,
    names: &[String],
) -> TopKResult {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    let n = names.len();
    TopKResult {
        subgroup,
        m,
        k,
        entries: scored
            .into_iter()
            .map(|(s, score, provenance)| TopKEntry {
                features: s.features().map(|f| names[f].clone()).collect(),
                bitmask: s.to_bit_string(n),
                subset: s,
                score,
                provenance,
            })
            .collect(),
    }
}

/// Ranks the level-`m` subsets of subgroup `i`. Nodes with an exact label in
/// `graph` are scored by the store; all others need `predictions`.
pub fn topk(
    graph: &MultiplexGraph,
    store: &EntropyStore,
    predictions: Option<&BTreeMap<FeatureSubset, f64>>,
    i: usize,
    m: usize,
    k: usize,
    names: &[String],
) -> Result<TopKResult> {
    let b = graph.bounds();
    if !b.contains(m) {
        return Err(Error::LevelOutOfBounds {
            m,
            min: b.min,
            max: b.max,
        });
    }
    if k < 1 {
        return Err(Error::InvalidK);
    }
    let level = subsets_within(FeatureSubset::full(graph.n_features()), LevelBounds::new(m, m));
    let mut scored = Vec::with_capacity(level.len());
    for s in level {
        if graph.label(NodeId::new(i, s)).is_some() {
            scored.push((s, mi_shared(store, s)?, Provenance::Exact));
            continue;
        }
        let preds = predictions.ok_or(Error::MissingModel(i))?;
        let p = preds.get(&s).copied().ok_or(Error::MissingScore(s.bits()))?;
        scored.push((s, p, Provenance::Predicted));
    }
    Ok(rank(scored, i, m, k, names))
}

/// Exhaustive ranking from the pre-injection copy of the data.
pub fn ground_truth_topk(sg: &SubgroupData, m: usize, k: usize, names: &[String]) -> Result<TopKResult> {
    let shadow = sg.shadow.as_ref().ok_or(Error::NoShadow(sg.index))?;
    ground_truth_from_columns(shadow, &sg.target, sg.index, m, k, names)
}

/// Exhaustive exact ranking over the given columns.
pub fn ground_truth_from_columns(
    columns: &[Vec<u8>],
    target: &[u8],
    subgroup: usize,
    m: usize,
    k: usize,
    names: &[String],
) -> Result<TopKResult> {
    let n = columns.len();
    if m < 1 || m > n {
        return Err(Error::LevelOutOfBounds { m, min: 1, max: n });
    }
    if k < 1 {
        return Err(Error::InvalidK);
    }
    let scored = subsets_within(FeatureSubset::full(n), LevelBounds::new(m, m))
        .into_iter()
        .map(|s| {
            let cols: Vec<&[u8]> = s.features().map(|f| columns[f].as_slice()).collect();
            mi_of_columns(&cols, target).map(|mi| (s, mi, Provenance::Exact))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(scored, subgroup, m, k, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::mi_direct;
    use crate::rng;
    use rand::Rng as _;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|f| format!("x{f}")).collect()
    }

    fn subgroup(n: usize, rows: usize, seed: u64) -> SubgroupData {
        let mut r = rng::seeded(seed);
        let columns: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..rows).map(|_| r.random_range(0..3u8)).collect())
            .collect();
        let target = (0..rows)
            .map(|k| if r.random_bool(0.8) { columns[0][k] % 2 } else { r.random_range(0..2) })
            .collect();
        SubgroupData {
            index: 0,
            rows: (0..rows).collect(),
            columns,
            cardinalities: vec![3; n],
            target,
            target_cardinality: 2,
            present: FeatureSubset::full(n),
            missing: FeatureSubset::from_bits(0),
            shadow: None,
        }
    }

    fn labeled_graph(sg: &SubgroupData, store: &EntropyStore) -> MultiplexGraph {
        let n = sg.n_features();
        let mut g = MultiplexGraph::from_masks(n, vec![sg.present], LevelBounds::full(n)).unwrap();
        for s in store.subsets().collect::<Vec<_>>() {
            g.set_label(NodeId::new(0, s), mi_shared(store, s).unwrap()).unwrap();
        }
        g
    }

    #[test]
    fn full_labels_match_brute_force() {
        let sg = subgroup(6, 400, 3);
        let store = EntropyStore::build(&sg, LevelBounds::full(6)).unwrap();
        let g = labeled_graph(&sg, &store);
        let got = topk(&g, &store, None, 0, 2, 100, &names(6)).unwrap();
        assert_eq!(got.entries.len(), 15);
        let truth = ground_truth_from_columns(&sg.columns, &sg.target, 0, 2, 100, &names(6)).unwrap();
        assert_eq!(got.subsets(), truth.subsets());
        for e in &got.entries {
            assert!((e.score - mi_direct(&sg, e.subset).unwrap()).abs() < 1e-9);
            assert_eq!(e.provenance, Provenance::Exact);
        }
    }

    #[test]
    fn missing_model_is_reported() {
        let sg = subgroup(4, 100, 1).with_missing(FeatureSubset::from_bits(0b1000));
        let store = EntropyStore::build(&sg, LevelBounds::full(4)).unwrap();
        let g = labeled_graph(&sg, &store);
        assert!(matches!(
            topk(&g, &store, None, 0, 2, 3, &names(4)),
            Err(Error::MissingModel(0))
        ));
        let preds: BTreeMap<_, _> = (1u32..16)
            .map(FeatureSubset::from_bits)
            .filter(|s| s.contains(3))
            .map(|s| (s, 10.0))
            .collect();
        let r = topk(&g, &store, Some(&preds), 0, 2, 6, &names(4)).unwrap();
        assert_eq!(r.entries[0].provenance, Provenance::Predicted);
        assert_eq!(r.entries[0].features, vec!["x0", "x3"]);
        assert!(r.entries.iter().any(|e| e.provenance == Provenance::Exact));
    }

    #[test]
    fn bounds_and_k_errors() {
        let sg = subgroup(3, 50, 1);
        let store = EntropyStore::build(&sg, LevelBounds::full(3)).unwrap();
        let g = labeled_graph(&sg, &store);
        assert!(matches!(topk(&g, &store, None, 0, 4, 1, &names(3)), Err(Error::LevelOutOfBounds { .. })));
        assert!(matches!(topk(&g, &store, None, 0, 1, 0, &names(3)), Err(Error::InvalidK)));
        assert!(matches!(ground_truth_topk(&sg, 1, 1, &names(3)), Err(Error::NoShadow(0))));
    }

    #[test]
    fn top_level_and_ties() {
        let mut sg = subgroup(3, 60, 2);
        // two identical columns tie exactly; the lower mask comes first
        sg.columns[2] = sg.columns[1].clone();
        let sg = sg.with_missing(FeatureSubset::from_bits(0));
        let r = ground_truth_topk(&sg, 1, 3, &names(3)).unwrap();
        let pos1 = r.entries.iter().position(|e| e.subset.bits() == 0b010).unwrap();
        let pos2 = r.entries.iter().position(|e| e.subset.bits() == 0b100).unwrap();
        assert_eq!(pos2, pos1 + 1);
        let top = ground_truth_topk(&sg, 3, 5, &names(3)).unwrap();
        assert_eq!(top.subsets(), vec![FeatureSubset::full(3)]);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn prefixes_are_consistent(seed in 0u64..500, k in 1usize..10) {
            let sg = subgroup(5, 120, seed);
            let a = ground_truth_from_columns(&sg.columns, &sg.target, 0, 2, k, &names(5)).unwrap();
            let b = ground_truth_from_columns(&sg.columns, &sg.target, 0, 2, k + 1, &names(5)).unwrap();
            proptest::prop_assert_eq!(&b.entries[..a.entries.len()], &a.entries[..]);
        }
    }
}
