//! Empirical entropy and mutual information over discrete columns.
//!
//! All quantities are in bits. Two independent routes exist on purpose:
//! [`mi_direct`] evaluates the nested-sum definition from scratch for one
//! subset, while [`EntropyStore`] materializes joint entropies for the whole
//! lattice in one refinement pass and answers [`mi_shared`] with three
//! lookups, `I(S;Y) = H(S) + H(Y) - H(S,Y)`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SubgroupData, NULL};
use crate::error::{Error, Result};
use crate::subset::{FeatureSubset, LevelBounds};

/// Tolerance for MI comparisons on exact empirical values.
pub const MI_TOLERANCE: f64 = 1e-12;

fn entropy_from_counts(counts: impl IntoIterator<Item = u64>, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut acc = 0.0;
    for c in counts {
        if c > 0 {
            let c = c as f64;
            acc += c * c.log2();
        }
    }
    (n.log2() - acc / n).max(0.0)
}

/// Joint entropy of the given columns; rows with a NULL in any of them are skipped.
pub fn entropy_of_columns(columns: &[&[u8]]) -> Result<f64> {
    if columns.is_empty() {
        return Err(Error::EmptySubset);
    }
    let rows = columns[0].len();
    let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut total = 0u64;
    for r in 0..rows {
        let key: Vec<u8> = columns.iter().map(|c| c[r]).collect();
        if key.contains(&NULL) {
            continue;
        }
        *counts.entry(key).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoUsableRows);
    }
    // fixed summation order, so repeated runs agree to the bit
    let mut values: Vec<u64> = counts.into_values().collect();
    values.sort_unstable();
    Ok(entropy_from_counts(values, total))
}

/// Joint MI `I(features; target)` from the nested-sum definition over the
/// empirical joint distribution. Zero-probability cells contribute nothing.
pub fn mi_of_columns(features: &[&[u8]], target: &[u8]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut joint: BTreeMap<(Vec<u8>, u8), u64> = BTreeMap::new();
    let mut px: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    let mut py: BTreeMap<u8, u64> = BTreeMap::new();
    let mut total = 0u64;
    for r in 0..target.len() {
        let key: Vec<u8> = features.iter().map(|c| c[r]).collect();
        if key.contains(&NULL) || target[r] == NULL {
            continue;
        }
        *px.entry(key.clone()).or_default() += 1;
        *py.entry(target[r]).or_default() += 1;
        *joint.entry((key, target[r])).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoUsableRows);
    }
    let n = total as f64;
    let mut mi = 0.0;
    for ((x, y), &c) in &joint {
        let pxy = c as f64 / n;
        let p_x = px[x] as f64 / n;
        let p_y = py[y] as f64 / n;
        mi += pxy * (pxy / (p_x * p_y)).log2();
    }
    Ok(mi.max(0.0))
}

fn subset_columns<'a>(sg: &'a SubgroupData, subset: FeatureSubset) -> Vec<&'a [u8]> {
    subset.features().map(|f| sg.columns[f].as_slice()).collect()
}

/// Entropy of the columns in `subset`, optionally joined with the target.
pub fn empirical_entropy(
    sg: &SubgroupData,
    subset: FeatureSubset,
    with_target: bool,
) -> Result<f64> {
    if subset.intersects(sg.missing) {
        return Err(Error::MissingFeature {
            subset: subset.bits(),
        });
    }
    let mut cols = subset_columns(sg, subset);
    if with_target {
        cols.push(&sg.target);
    }
    entropy_of_columns(&cols)
}

/// MI of `subset` with the target, computed from scratch.
pub fn mi_direct(sg: &SubgroupData, subset: FeatureSubset) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if subset.intersects(sg.missing) {
        return Err(Error::MissingFeature {
            subset: subset.bits(),
        });
    }
    mi_of_columns(&subset_columns(sg, subset), &sg.target)
}

/// Memoized joint entropies `H(S)` and `H(S ∪ {Y})` for every computable
/// subset of one subgroup up to `bounds.max`.
///
/// Conditional entropies follow as differences, `H(f | S) = H(S ∪ {f}) - H(S)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyStore {
    subgroup: usize,
    n_features: usize,
    present: FeatureSubset,
    bounds: LevelBounds,
    h_y: f64,
    // dense by mask; NaN marks an absent entry
    h: Vec<f64>,
    h_with_y: Vec<f64>,
    // H(Y) over the rows complete on S, only where that differs from all rows
    h_y_restricted: BTreeMap<u32, f64>,
    visits: usize,
}

struct Scratch {
    remap: Vec<u32>,
    counts: Vec<u64>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            remap: Vec::new(),
            counts: Vec::new(),
            touched: Vec::new(),
        }
    }

    fn reserve(&mut self, len: usize) {
        if self.remap.len() < len {
            self.remap.resize(len, u32::MAX);
        }
        if self.counts.len() < len {
            self.counts.resize(len, 0);
        }
    }

    /// Refines a row partition by one column. Rows already excluded (or NULL
    /// in the new column) get `u32::MAX`. Returns the number of classes.
    fn refine(&mut self, ids: &[u32], classes: usize, col: &[u8], card: usize, out: &mut Vec<u32>) -> usize {
        self.reserve(classes * card);
        out.clear();
        let mut next = 0u32;
        for (&id, &v) in ids.iter().zip(col) {
            if id == u32::MAX || v == NULL {
                out.push(u32::MAX);
                continue;
            }
            let key = id as usize * card + v as usize;
            let slot = &mut self.remap[key];
            if *slot == u32::MAX {
                *slot = next;
                next += 1;
                self.touched.push(key as u32);
            }
            out.push(*slot);
        }
        for &k in &self.touched {
            self.remap[k as usize] = u32::MAX;
        }
        self.touched.clear();
        next as usize
    }

    /// Entropy of the partition `ids` (optionally crossed with `target`).
    fn entropy(&mut self, ids: &[u32], classes: usize, target: Option<(&[u8], usize)>) -> (f64, u64) {
        let card = target.map_or(1, |(_, c)| c);
        self.reserve(classes * card);
        let mut total = 0u64;
        for (r, &id) in ids.iter().enumerate() {
            if id == u32::MAX {
                continue;
            }
            let key = match target {
                Some((y, c)) => id as usize * c + y[r] as usize,
                None => id as usize,
            };
            if self.counts[key] == 0 {
                self.touched.push(key as u32);
            }
            self.counts[key] += 1;
            total += 1;
        }
        let h = entropy_from_counts(self.touched.iter().map(|&k| self.counts[k as usize]), total);
        for &k in &self.touched {
            self.counts[k as usize] = 0;
        }
        self.touched.clear();
        (h, total)
    }
}

impl EntropyStore {
    /// Builds the store for one subgroup.
    ///
    /// Subsets are visited depth-first, each child adding a feature above
    /// the parent's highest one, so every subset is reached exactly once and
    /// its row partition is a one-column refinement of its parent's.
    pub fn build(sg: &SubgroupData, bounds: LevelBounds) -> Result<Self> {
        let n = sg.n_features();
        if bounds.max < 1 {
            return Err(Error::InvalidLevelBounds {
                min: bounds.min,
                max: bounds.max,
                n,
            });
        }
        let bounds = LevelBounds::new(bounds.min.max(1), bounds.max.min(n.max(1)));
        if sg.present.is_empty() {
            return Err(Error::NoPresentFeatures);
        }
        if sg.n_rows() == 0 {
            return Err(Error::NoUsableRows);
        }
        let h_y = entropy_of_columns(&[&sg.target])?;
        let size = 1usize << n;
        let mut store = EntropyStore {
            subgroup: sg.index,
            n_features: n,
            present: sg.present,
            bounds,
            h_y,
            h: vec![f64::NAN; size],
            h_with_y: vec![f64::NAN; size],
            h_y_restricted: BTreeMap::new(),
            visits: 0,
        };

        let present: Vec<usize> = sg.present.features().collect();
        let depth = bounds.max.min(present.len());
        let mut layers: Vec<Vec<u32>> = vec![Vec::with_capacity(sg.n_rows()); depth + 1];
        layers[0] = vec![0; sg.n_rows()];
        let mut classes = vec![1usize; depth + 1];
        let mut scratch = Scratch::new();
        let rows = sg.n_rows() as u64;

        // explicit DFS: stack of (mask, depth, next candidate position)
        let mut stack: Vec<(FeatureSubset, usize, usize)> = vec![(FeatureSubset::from_bits(0), 0, 0)];
        while let Some((mask, d, start)) = stack.pop() {
            if start >= present.len() || d >= depth {
                continue;
            }
            // resume the parent at the next sibling first
            stack.push((mask, d, start + 1));
            let f = present[start];
            let child = mask.with(f);
            let (parent_layers, child_layers) = layers.split_at_mut(d + 1);
            classes[d + 1] = scratch.refine(
                &parent_layers[d],
                classes[d],
                &sg.columns[f],
                sg.cardinalities[f],
                &mut child_layers[0],
            );
            let ids = &layers[d + 1];
            let (h, used) = scratch.entropy(ids, classes[d + 1], None);
            let (hy, _) = scratch.entropy(ids, classes[d + 1], Some((&sg.target, sg.target_cardinality)));
            store.visits += 1;
            if bounds.contains(child.level()) {
                store.h[child.bits() as usize] = h;
                store.h_with_y[child.bits() as usize] = hy;
                if used < rows {
                    let (hy_only, _) = scratch.entropy(
                        &ids.iter().map(|&i| if i == u32::MAX { u32::MAX } else { 0 }).collect::<Vec<_>>(),
                        1,
                        Some((&sg.target, sg.target_cardinality)),
                    );
                    store.h_y_restricted.insert(child.bits(), hy_only);
                }
            }
            stack.push((child, d + 1, start + 1));
        }
        Ok(store)
    }

    pub fn subgroup(&self) -> usize {
        self.subgroup
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn present(&self) -> FeatureSubset {
        self.present
    }

    pub fn bounds(&self) -> LevelBounds {
        self.bounds
    }

    pub fn h_y(&self) -> f64 {
        self.h_y
    }

    /// Number of subsets whose entropies were computed during construction.
    pub fn visits(&self) -> usize {
        self.visits
    }

    pub fn contains(&self, subset: FeatureSubset) -> bool {
        (subset.bits() as usize) < self.h.len() && !self.h[subset.bits() as usize].is_nan()
    }

    /// `(H(S), H(S ∪ {Y}))`.
    pub fn entropies(&self, subset: FeatureSubset) -> Option<(f64, f64)> {
        self.contains(subset)
            .then(|| (self.h[subset.bits() as usize], self.h_with_y[subset.bits() as usize]))
    }

    /// Stored subsets in ascending mask order.
    pub fn subsets(&self) -> impl Iterator<Item = FeatureSubset> + '_ {
        self.h
            .iter()
            .enumerate()
            .filter(|(_, h)| !h.is_nan())
            .map(|(m, _)| FeatureSubset::from_bits(m as u32))
    }

    pub fn len(&self) -> usize {
        self.subsets().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn raw_mi(&self, subset: FeatureSubset) -> f64 {
        let m = subset.bits() as usize;
        let h_y = self
            .h_y_restricted
            .get(&subset.bits())
            .copied()
            .unwrap_or(self.h_y);
        self.h[m] + h_y - self.h_with_y[m]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &StoreFile::from(self))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: StoreFile = crate::io::read_json(path)?;
        Ok(file.into())
    }
}

/// MI of `subset` from the store: `H(S) + H(Y) - H(S ∪ {Y})`, clamped at 0.
pub fn mi_shared(store: &EntropyStore, subset: FeatureSubset) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !subset.is_subset_of(store.present) {
        return Err(Error::MissingFeature {
            subset: subset.bits(),
        });
    }
    if !store.contains(subset) {
        return Err(Error::NotInStore {
            subset: subset.bits(),
        });
    }
    let mi = store.raw_mi(subset);
    debug_assert!(mi >= -1e-9, "negative MI {mi} for {subset}");
    Ok(mi.max(0.0))
}

/// All stored pairs `S ⊂ T` one level apart whose MI decreases going up.
pub fn verify_upward_closure(store: &EntropyStore) -> Vec<(FeatureSubset, FeatureSubset)> {
    let mut violations = Vec::new();
    for upper in store.subsets() {
        if upper.level() < 2 {
            continue;
        }
        let mi_upper = store.raw_mi(upper).max(0.0);
        for f in upper.features() {
            let lower = upper.without(f);
            if store.contains(lower) && store.raw_mi(lower).max(0.0) > mi_upper + MI_TOLERANCE {
                violations.push((lower, upper));
            }
        }
    }
    violations
}

/// On-disk form of an [`EntropyStore`]. JSON floats round-trip exactly.
#[derive(Serialize, Deserialize)]
struct StoreFile {
    subgroup: usize,
    n_features: usize,
    present: FeatureSubset,
    bounds: LevelBounds,
    h_y: f64,
    visits: usize,
    /// `[mask, H(S), H(S ∪ {Y})]`
    entries: Vec<(u32, f64, f64)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    h_y_restricted: BTreeMap<u32, f64>,
}

impl From<&EntropyStore> for StoreFile {
    fn from(s: &EntropyStore) -> Self {
        StoreFile {
            subgroup: s.subgroup,
            n_features: s.n_features,
            present: s.present,
            bounds: s.bounds,
            h_y: s.h_y,
            visits: s.visits,
            entries: s
                .subsets()
                .map(|m| (m.bits(), s.h[m.bits() as usize], s.h_with_y[m.bits() as usize]))
                .collect(),
            h_y_restricted: s.h_y_restricted.clone(),
        }
    }
}

impl From<StoreFile> for EntropyStore {
    fn from(f: StoreFile) -> Self {
        let size = 1usize << f.n_features;
        let mut h = vec![f64::NAN; size];
        let mut h_with_y = vec![f64::NAN; size];
        for (m, a, b) in f.entries {
            h[m as usize] = a;
            h_with_y[m as usize] = b;
        }
        EntropyStore {
            subgroup: f.subgroup,
            n_features: f.n_features,
            present: f.present,
            bounds: f.bounds,
            h_y: f.h_y,
            h,
            h_with_y,
            h_y_restricted: f.h_y_restricted,
            visits: f.visits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::subset::subsets_within;
    use rand::Rng;

    pub(crate) fn random_subgroup(n: usize, rows: usize, card: usize, seed: u64) -> SubgroupData {
        let mut r = rng::seeded(seed);
        let columns: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..rows).map(|_| r.random_range(0..card) as u8).collect())
            .collect();
        // target loosely depends on the first two columns
        let target: Vec<u8> = (0..rows)
            .map(|i| {
                let noise = r.random_range(0..4u8);
                if noise == 0 {
                    r.random_range(0..2)
                } else {
                    (columns[0][i] ^ columns[1.min(n - 1)][i]) & 1
                }
            })
            .collect();
        SubgroupData {
            index: 0,
            rows: (0..rows).collect(),
            columns,
            cardinalities: vec![card; n],
            target,
            target_cardinality: 2,
            present: FeatureSubset::full(n),
            missing: FeatureSubset::from_bits(0),
            shadow: None,
        }
    }

    fn from_columns(columns: Vec<Vec<u8>>, target: Vec<u8>) -> SubgroupData {
        let n = columns.len();
        let rows = target.len();
        SubgroupData {
            index: 0,
            rows: (0..rows).collect(),
            cardinalities: vec![4; n],
            columns,
            target,
            target_cardinality: 4,
            present: FeatureSubset::full(n),
            missing: FeatureSubset::from_bits(0),
            shadow: None,
        }
    }

    #[test]
    fn constant_and_uniform_entropies() {
        assert_eq!(entropy_of_columns(&[&[2u8; 10]]).unwrap(), 0.0);
        let alt: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        assert!((entropy_of_columns(&[&alt]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_errors() {
        assert!(matches!(entropy_of_columns(&[]), Err(Error::EmptySubset)));
        assert!(matches!(entropy_of_columns(&[&[NULL, NULL]]), Err(Error::NoUsableRows)));
    }

    #[test]
    fn independent_columns_have_zero_mi() {
        // product distribution by construction: every (x, y) pair once
        let x: Vec<u8> = (0..16).map(|i| (i / 4) as u8).collect();
        let y: Vec<u8> = (0..16).map(|i| (i % 4) as u8).collect();
        assert!(mi_of_columns(&[&x], &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn copy_of_target_carries_its_entropy() {
        let y: Vec<u8> = vec![0, 1, 1, 2, 2, 2, 3, 0];
        let h = entropy_of_columns(&[&y]).unwrap();
        assert!((mi_of_columns(&[&y], &y).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_on_store() {
        let a: Vec<u8> = (0..64).map(|i| (i % 4) as u8).collect();
        let sg = from_columns(vec![a.clone(), a], (0..64).map(|i| (i % 3) as u8).collect());
        let store = EntropyStore::build(&sg, LevelBounds::full(2)).unwrap();
        let (h_a, _) = store.entropies(FeatureSubset::from_bits(1)).unwrap();
        let (h_ab, _) = store.entropies(FeatureSubset::from_bits(3)).unwrap();
        assert!((h_a - h_ab).abs() < 1e-12);

        let a: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let b: Vec<u8> = (0..64).map(|i| ((i / 2) % 2) as u8).collect();
        let sg = from_columns(vec![a, b], vec![0; 64]);
        let store = EntropyStore::build(&sg, LevelBounds::full(2)).unwrap();
        let (h_ab, _) = store.entropies(FeatureSubset::from_bits(3)).unwrap();
        assert!((h_ab - 2.0).abs() < 1e-12);
    }

    #[test]
    fn store_matches_scratch_entropies() {
        let sg = random_subgroup(8, 2000, 3, 11);
        let store = EntropyStore::build(&sg, LevelBounds::full(8)).unwrap();
        assert_eq!(store.visits(), 255);
        for s in subsets_within(sg.present, LevelBounds::full(8)) {
            let (h, hy) = store.entropies(s).unwrap();
            assert!((h - empirical_entropy(&sg, s, false).unwrap()).abs() < 1e-9);
            assert!((hy - empirical_entropy(&sg, s, true).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn level_cap_limits_visits() {
        let sg = random_subgroup(6, 100, 2, 1);
        let store = EntropyStore::build(&sg, LevelBounds::new(2, 3)).unwrap();
        // levels 1..=3 are visited, only 2..=3 stored
        assert_eq!(store.visits(), 6 + 15 + 20);
        assert_eq!(store.len(), 15 + 20);
        assert!(matches!(
            mi_shared(&store, FeatureSubset::from_bits(1)),
            Err(Error::NotInStore { .. })
        ));
    }

    #[test]
    fn shared_rejects_missing_features() {
        let mut sg = random_subgroup(4, 50, 2, 2);
        sg = sg.with_missing(FeatureSubset::from_bits(0b1000));
        let store = EntropyStore::build(&sg, LevelBounds::full(4)).unwrap();
        assert!(matches!(
            mi_shared(&store, FeatureSubset::from_bits(0b1001)),
            Err(Error::MissingFeature { subset: 0b1001 })
        ));
        assert!(matches!(
            mi_direct(&sg, FeatureSubset::from_bits(0b1000)),
            Err(Error::MissingFeature { .. })
        ));
    }

    #[test]
    fn sporadic_nulls_keep_routes_equal() {
        let mut sg = random_subgroup(4, 300, 3, 5);
        for r in (0..300).step_by(7) {
            sg.columns[1][r] = NULL;
        }
        let store = EntropyStore::build(&sg, LevelBounds::full(4)).unwrap();
        for s in subsets_within(sg.present, LevelBounds::full(4)) {
            let a = mi_shared(&store, s).unwrap();
            let b = mi_direct(&sg, s).unwrap();
            assert!((a - b).abs() < 1e-9, "{s}: {a} vs {b}");
        }
    }

    #[test]
    fn corrupted_entry_is_reported() {
        let sg = random_subgroup(5, 400, 2, 9);
        let mut store = EntropyStore::build(&sg, LevelBounds::full(5)).unwrap();
        assert!(verify_upward_closure(&store).is_empty());
        // inflate H({f0}) so that MI({f0}) exceeds MI of its supersets
        store.h[1] += 5.0;
        let v = verify_upward_closure(&store);
        assert!(!v.is_empty());
        assert!(v.iter().all(|(lo, _)| lo.bits() == 1));
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn single_feature_store_has_no_pairs() {
        let sg = random_subgroup(1, 50, 2, 3);
        let store = EntropyStore::build(&sg, LevelBounds::full(1)).unwrap();
        assert!(verify_upward_closure(&store).is_empty());
    }

    #[test]
    fn store_roundtrips_bit_exactly() {
        let sg = random_subgroup(6, 500, 3, 4);
        let store = EntropyStore::build(&sg, LevelBounds::full(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        store.save(&path).unwrap();
        let back = EntropyStore::load(&path).unwrap();
        for s in store.subsets() {
            let (a, b) = store.entropies(s).unwrap();
            let (c, d) = back.entropies(s).unwrap();
            assert_eq!(a.to_bits(), c.to_bits());
            assert_eq!(b.to_bits(), d.to_bits());
        }
        assert_eq!(store.h_y().to_bits(), back.h_y().to_bits());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn mi_is_bounded_and_routes_agree(seed in 0u64..1000, n in 1usize..7, card in 2usize..4) {
            let sg = random_subgroup(n, 200, card, seed);
            let store = EntropyStore::build(&sg, LevelBounds::full(n)).unwrap();
            for s in subsets_within(sg.present, LevelBounds::full(n)) {
                let shared = mi_shared(&store, s).unwrap();
                let direct = mi_direct(&sg, s).unwrap();
                proptest::prop_assert!((shared - direct).abs() < 1e-9);
                let (h, _) = store.entropies(s).unwrap();
                proptest::prop_assert!(shared >= 0.0);
                proptest::prop_assert!(shared <= h.min(store.h_y()) + 1e-12);
            }
            proptest::prop_assert!(verify_upward_closure(&store).is_empty());
        }
    }
}
