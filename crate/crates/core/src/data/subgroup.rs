use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, NULL};
use crate::error::{Error, Result};
use crate::rng;
use crate::subset::{FeatureSubset, MAX_FEATURES};

/// Conjunction of `feature = value` literals over the subgrouping features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub literals: Vec<(String, String)>,
}

impl std::fmt::Display for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .literals
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{}", parts.join(" AND "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub subgroup_features: Vec<String>,
    /// Minterms with at least one matching row, in lexicographic code order.
    pub predicates: Vec<Predicate>,
    /// Names of the selection features `F^S`, in bit order.
    pub selection_features: Vec<String>,
}

/// One horizontal fragment of the data with its missingness pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupData {
    pub index: usize,
    /// Row indices into the source dataset.
    pub rows: Vec<usize>,
    /// Selection-feature columns restricted to `rows`, after any injection.
    pub columns: Vec<Vec<u8>>,
    pub cardinalities: Vec<usize>,
    pub target: Vec<u8>,
    pub target_cardinality: usize,
    pub present: FeatureSubset,
    pub missing: FeatureSubset,
    /// Pre-injection values. Only evaluation oracles read these.
    pub shadow: Option<Vec<Vec<u8>>>,
}

impl SubgroupData {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    fn detect_missing(columns: &[Vec<u8>]) -> FeatureSubset {
        let mut missing = FeatureSubset::from_bits(0);
        for (f, col) in columns.iter().enumerate() {
            if col.iter().all(|&c| c == NULL) {
                missing = missing.with(f);
            }
        }
        missing
    }

    /// Blanks every feature in `missing` for all rows, keeping the original
    /// values in the shadow copy. Features not in `missing` are restored from
    /// the shadow.
    pub fn with_missing(&self, missing: FeatureSubset) -> SubgroupData {
        let shadow = self.shadow.clone().unwrap_or_else(|| self.columns.clone());
        let columns = shadow
            .iter()
            .enumerate()
            .map(|(f, col)| {
                if missing.contains(f) {
                    vec![NULL; col.len()]
                } else {
                    col.clone()
                }
            })
            .collect::<Vec<_>>();
        let missing = Self::detect_missing(&columns);
        let full = FeatureSubset::full(columns.len());
        SubgroupData {
            present: FeatureSubset::from_bits(full.bits() & !missing.bits()),
            missing,
            columns,
            shadow: Some(shadow),
            ..self.clone()
        }
    }

    /// Features that carry data before injection.
    fn originally_present(&self) -> FeatureSubset {
        match &self.shadow {
            None => self.present,
            Some(sh) => {
                let m = Self::detect_missing(sh);
                FeatureSubset::from_bits(FeatureSubset::full(sh.len()).bits() & !m.bits())
            }
        }
    }

    /// Selection columns of the shadow copy, or the live ones when no shadow exists.
    pub fn truth_columns(&self) -> &[Vec<u8>] {
        self.shadow.as_deref().unwrap_or(&self.columns)
    }
}

/// Splits `dataset` by the minterms over `subgroup_features`.
pub fn partition_subgroups(
    dataset: &Dataset,
    subgroup_features: &[&str],
) -> Result<(SubgroupSpec, Vec<SubgroupData>)> {
    if subgroup_features.is_empty() {
        return Err(Error::NoSubgroupFeatures);
    }
    let mut keys = Vec::with_capacity(subgroup_features.len());
    for &name in subgroup_features {
        if name == dataset.target.name {
            return Err(Error::SubgroupIsTarget(name.to_string()));
        }
        let col = &dataset.features[dataset.column_index(name)?];
        let cells = col.cells()?;
        if let Some(row) = cells.iter().position(|&c| c == NULL) {
            return Err(Error::NullSubgroupCell {
                column: name.to_string(),
                row,
            });
        }
        keys.push((name, col.domain()?, cells));
    }

    let selection: Vec<usize> = (0..dataset.features.len())
        .filter(|&i| !subgroup_features.contains(&dataset.features[i].name.as_str()))
        .collect();
    if selection.len() > MAX_FEATURES {
        return Err(Error::TooManyFeatures(selection.len()));
    }
    let sel_cols: Vec<&[u8]> = selection
        .iter()
        .map(|&i| dataset.features[i].cells())
        .collect::<Result<_>>()?;
    let cardinalities: Vec<usize> = selection
        .iter()
        .map(|&i| dataset.features[i].domain().map(<[String]>::len))
        .collect::<Result<_>>()?;
    let target = dataset.target.cells()?;
    let target_cardinality = dataset.target.domain()?.len();

    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for row in 0..dataset.n_rows() {
        let key: Vec<u8> = keys.iter().map(|(_, _, cells)| cells[row]).collect();
        groups.entry(key).or_default().push(row);
    }

    let mut predicates = Vec::with_capacity(groups.len());
    let mut subgroups = Vec::with_capacity(groups.len());
    for (index, (key, rows)) in groups.into_iter().enumerate() {
        predicates.push(Predicate {
            literals: keys
                .iter()
                .zip(&key)
                .map(|((name, domain, _), &c)| (name.to_string(), domain[c as usize].clone()))
                .collect(),
        });
        let columns: Vec<Vec<u8>> = sel_cols
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        let missing = SubgroupData::detect_missing(&columns);
        let full = FeatureSubset::full(columns.len());
        subgroups.push(SubgroupData {
            index,
            target: rows.iter().map(|&r| target[r]).collect(),
            rows,
            columns,
            cardinalities: cardinalities.clone(),
            target_cardinality,
            present: FeatureSubset::from_bits(full.bits() & !missing.bits()),
            missing,
            shadow: None,
        });
    }

    let spec = SubgroupSpec {
        subgroup_features: subgroup_features.iter().map(|s| s.to_string()).collect(),
        predicates,
        selection_features: selection
            .iter()
            .map(|&i| dataset.features[i].name.clone())
            .collect(),
    };
    Ok((spec, subgroups))
}

/// Blanks each (subgroup, feature) pair with probability `p`, then repairs
/// the masks so that every feature survives somewhere and every subgroup
/// misses at least one feature.
pub fn inject_systematic_missingness(
    subgroups: &[SubgroupData],
    p: f64,
    seed: u64,
) -> Result<Vec<SubgroupData>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let n = subgroups.first().map_or(0, SubgroupData::n_features);
    if n < 2 {
        return Err(Error::Unsatisfiable(format!("{n} selection features")));
    }
    if subgroups.len() < 2 {
        return Err(Error::Unsatisfiable(format!(
            "{} subgroup(s); a missing feature must be present elsewhere",
            subgroups.len()
        )));
    }

    let mut rng = rng::seeded(seed);
    let original: Vec<FeatureSubset> = subgroups.iter().map(|s| s.originally_present()).collect();
    let mut present = original.clone();
    for mask in present.iter_mut() {
        for f in 0..n {
            let draw: f64 = rng.random();
            if draw < p {
                *mask = mask.without(f);
            }
        }
    }

    // re-add globally absent features
    for f in 0..n {
        if present.iter().any(|m| m.contains(f)) {
            continue;
        }
        let holders: Vec<usize> = (0..subgroups.len())
            .filter(|&i| original[i].contains(f))
            .collect();
        if holders.is_empty() {
            return Err(Error::ObservedNowhere(format!("f{f}")));
        }
        let pick = holders[rng.random_range(0..holders.len())];
        present[pick] = present[pick].with(f);
    }

    // every subgroup needs at least one missing feature
    let full = FeatureSubset::full(n);
    for i in 0..subgroups.len() {
        if present[i] != full {
            continue;
        }
        let candidates: Vec<usize> = (0..n)
            .filter(|&f| (0..subgroups.len()).any(|j| j != i && present[j].contains(f)))
            .collect();
        if !candidates.is_empty() {
            let f = candidates[rng.random_range(0..candidates.len())];
            present[i] = present[i].without(f);
            continue;
        }
        // nothing is observed elsewhere: hand a feature over to another
        // subgroup that can take it without becoming complete
        let handovers: Vec<(usize, usize)> = (0..subgroups.len())
            .filter(|&j| j != i)
            .flat_map(|j| (0..n).map(move |f| (j, f)))
            .filter(|&(j, f)| {
                original[j].contains(f) && !present[j].contains(f) && present[j].with(f) != full
            })
            .collect();
        if handovers.is_empty() {
            return Err(Error::Unsatisfiable(format!(
                "subgroup {i} cannot drop a feature"
            )));
        }
        let (j, f) = handovers[rng.random_range(0..handovers.len())];
        present[j] = present[j].with(f);
        present[i] = present[i].without(f);
    }

    Ok(subgroups
        .iter()
        .zip(&present)
        .map(|(sg, mask)| sg.with_missing(FeatureSubset::from_bits(full.bits() & !mask.bits())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Column;

    fn toy(n_groups: u8, n_features: usize, rows_per_group: usize) -> Dataset {
        let rows = n_groups as usize * rows_per_group;
        let group = Column::coded(
            "g",
            (0..n_groups).map(|g| format!("g{g}")).collect(),
            (0..rows).map(|r| (r / rows_per_group) as u8).collect(),
        );
        let mut features = vec![group];
        for f in 0..n_features {
            features.push(Column::coded(
                format!("x{f}"),
                vec!["0".into(), "1".into(), "2".into()],
                (0..rows).map(|r| ((r * (f + 1)) % 3) as u8).collect(),
            ));
        }
        let target = Column::coded(
            "y",
            vec!["0".into(), "1".into()],
            (0..rows).map(|r| (r % 2) as u8).collect(),
        );
        Dataset::new(features, target).unwrap()
    }

    fn check_constraints(sgs: &[SubgroupData]) {
        let n = sgs[0].n_features();
        for sg in sgs {
            assert!(!sg.missing.is_empty(), "subgroup {} has no missing feature", sg.index);
            assert_eq!(sg.present.bits() | sg.missing.bits(), FeatureSubset::full(n).bits());
            assert_eq!(sg.present.bits() & sg.missing.bits(), 0);
            for f in sg.missing.features() {
                assert!(sg.columns[f].iter().all(|&c| c == NULL));
            }
        }
        for f in 0..n {
            assert!(sgs.iter().any(|s| s.present.contains(f)), "f{f} absent everywhere");
        }
    }

    #[test]
    fn single_valued_subgroup_feature_gives_one_group() {
        let ds = toy(1, 3, 5);
        let (spec, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
        assert_eq!(spec.predicates.len(), 1);
        assert_eq!(sgs[0].rows, (0..5).collect::<Vec<_>>());
        assert_eq!(spec.selection_features, vec!["x0", "x1", "x2"]);
    }

    #[test]
    fn partition_errors() {
        let ds = toy(2, 3, 5);
        assert!(matches!(partition_subgroups(&ds, &["y"]), Err(Error::SubgroupIsTarget(_))));
        assert!(matches!(partition_subgroups(&ds, &[]), Err(Error::NoSubgroupFeatures)));
        let mut with_null = ds.clone();
        if let crate::data::ColumnData::Coded { cells, .. } = &mut with_null.features[0].data {
            cells[3] = NULL;
        }
        assert!(matches!(
            partition_subgroups(&with_null, &["g"]),
            Err(Error::NullSubgroupCell { row: 3, .. })
        ));
    }

    #[test]
    fn zero_probability_forces_one_missing_per_subgroup() {
        let ds = toy(4, 5, 6);
        let (_, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
        let out = inject_systematic_missingness(&sgs, 0.0, 3).unwrap();
        check_constraints(&out);
        for sg in &out {
            assert_eq!(sg.missing.level(), 1);
            assert_eq!(sg.shadow.as_ref().unwrap(), &sgs[sg.index].columns);
        }
    }

    #[test]
    fn injection_is_deterministic() {
        let ds = toy(4, 10, 6);
        let (_, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
        let a = inject_systematic_missingness(&sgs, 0.2, 42).unwrap();
        let b = inject_systematic_missingness(&sgs, 0.2, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repair_holds_over_many_seeds() {
        // exhaustive over the masks produced by a range of seeds
        let ds = toy(2, 3, 4);
        let (_, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
        for seed in 0..500 {
            let out = inject_systematic_missingness(&sgs, 0.5, seed).unwrap();
            check_constraints(&out);
        }
    }

    #[test]
    fn injection_errors() {
        let ds = toy(2, 1, 4);
        let (_, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
        assert!(matches!(
            inject_systematic_missingness(&sgs, 1.0, 0),
            Err(Error::InvalidProbability(_))
        ));
        assert!(matches!(
            inject_systematic_missingness(&sgs, 0.1, 0),
            Err(Error::Unsatisfiable(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn partition_is_lossless(groups in 1u8..5, rows in 1usize..8) {
            let ds = toy(groups, 2, rows);
            let (_, sgs) = partition_subgroups(&ds, &["g"]).unwrap();
            let mut all: Vec<usize> = sgs.iter().flat_map(|s| s.rows.clone()).collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..ds.n_rows()).collect::<Vec<_>>());
        }
    }
}
