//! Feature lattice graphs per subgroup and the multiplex graph joining them.
//!
//! Every subgroup sees the same lattice shape, so the adjacency is built once
//! and shared. Node `(i, S)` has global id `i * V + local(S)` where `V` is the
//! number of subsets within the level bounds. Inter-lattice edges connect the
//! same local index across subgroups and are never materialized.

use std::path::Path;

use serde::Serialize;

use crate::data::SubgroupData;
use crate::error::{Error, Result};
use crate::subset::{binomial, FeatureSubset, LevelBounds, MAX_FEATURES};

const ABSENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId {
    pub subgroup: usize,
    pub subset: FeatureSubset,
}

impl NodeId {
    pub fn new(subgroup: usize, subset: FeatureSubset) -> Self {
        NodeId { subgroup, subset }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeFamily {
    /// Subsets one level below that are contained in the node.
    InterLevelDown,
    /// Subsets one level above that contain the node.
    InterLevelUp,
    /// Both directions of the subsumption edges.
    InterLevel,
    /// Same level, sharing all but one feature.
    IntraLevel,
    /// The same subset in every other subgroup.
    InterLattice,
}

/// Compressed adjacency over local node indices, rows sorted ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    pub fn row(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn n_entries(&self) -> usize {
        self.targets.len()
    }
}

/// The lattice of one subgroup restricted to a level range.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeShape {
    n: usize,
    bounds: LevelBounds,
    subsets: Vec<FeatureSubset>,
    index_of: Vec<u32>,
    down: Csr,
    up: Csr,
    intra: Csr,
}

impl LatticeShape {
    pub fn new(n: usize, bounds: LevelBounds) -> Result<Self> {
        if n == 0 || n > MAX_FEATURES {
            return Err(Error::TooManyFeatures(n));
        }
        let bounds = bounds.validate(n)?;
        let subsets: Vec<FeatureSubset> = (1u32..1 << n)
            .map(FeatureSubset::from_bits)
            .filter(|s| bounds.contains(s.level()))
            .collect();
        let mut index_of = vec![ABSENT; 1 << n];
        for (k, s) in subsets.iter().enumerate() {
            index_of[s.bits() as usize] = k as u32;
        }
        let mut down = Vec::with_capacity(subsets.len());
        let mut up = Vec::with_capacity(subsets.len());
        let mut intra = Vec::with_capacity(subsets.len());
        for &s in &subsets {
            let mut d = Vec::new();
            let mut u = Vec::new();
            let mut w = Vec::new();
            for f in 0..n {
                if s.contains(f) {
                    let lower = s.without(f);
                    if index_of[lower.bits() as usize] != ABSENT {
                        d.push(index_of[lower.bits() as usize]);
                    }
                    if s.level() >= 2 {
                        for g in (0..n).filter(|&g| !s.contains(g)) {
                            w.push(index_of[lower.with(g).bits() as usize]);
                        }
                    }
                } else {
                    let upper = s.with(f);
                    if index_of[upper.bits() as usize] != ABSENT {
                        u.push(index_of[upper.bits() as usize]);
                    }
                }
            }
            down.push(d);
            up.push(u);
            intra.push(w);
        }
        Ok(LatticeShape {
            n,
            bounds,
            subsets,
            index_of,
            down: Csr::from_rows(down),
            up: Csr::from_rows(up),
            intra: Csr::from_rows(intra),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> LevelBounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Subsets in ascending mask order; position is the local index.
    pub fn subsets(&self) -> &[FeatureSubset] {
        &self.subsets
    }

    pub fn index(&self, subset: FeatureSubset) -> Option<usize> {
        self.index_of
            .get(subset.bits() as usize)
            .filter(|&&k| k != ABSENT)
            .map(|&k| k as usize)
    }

    pub fn down(&self) -> &Csr {
        &self.down
    }

    pub fn up(&self) -> &Csr {
        &self.up
    }

    pub fn intra(&self) -> &Csr {
        &self.intra
    }

    pub fn inter_level_edges(&self) -> u64 {
        self.down.n_entries() as u64
    }

    pub fn intra_level_edges(&self) -> u64 {
        self.intra.n_entries() as u64 / 2
    }
}

/// Closed-form `(nodes, inter-level edges, intra-level edges)` of one lattice.
pub fn structural_counts(n: usize, bounds: LevelBounds) -> (u64, u64, u64) {
    let hi = bounds.max.min(n);
    let nodes = (bounds.min..=hi).map(|l| binomial(n, l)).sum();
    let inter = (bounds.min + 1..=hi).map(|l| binomial(n, l) * l as u64).sum();
    let intra = (bounds.min.max(2)..=hi)
        .map(|l| binomial(n, l) * (l * (n - l)) as u64 / 2)
        .sum();
    (nodes, inter, intra)
}

/// Lattices of all subgroups joined by inter-lattice edges, with exact-MI
/// label slots per node.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplexGraph {
    shape: LatticeShape,
    present: Vec<FeatureSubset>,
    labels: Vec<Vec<Option<f64>>>,
}

pub fn build_multiplex(
    n: usize,
    subgroups: &[SubgroupData],
    bounds: LevelBounds,
) -> Result<MultiplexGraph> {
    if subgroups.is_empty() {
        return Err(Error::EmptyInput("subgroups"));
    }
    if let Some(sg) = subgroups.iter().find(|s| s.n_features() != n) {
        return Err(Error::Shape(format!(
            "subgroup {} has {} features, expected {n}",
            sg.index,
            sg.n_features()
        )));
    }
    MultiplexGraph::from_masks(n, subgroups.iter().map(|s| s.present).collect(), bounds)
}

impl MultiplexGraph {
    /// Builds the graph from the observed-feature mask of each subgroup.
    pub fn from_masks(n: usize, present: Vec<FeatureSubset>, bounds: LevelBounds) -> Result<Self> {
        if present.is_empty() {
            return Err(Error::EmptyInput("subgroups"));
        }
        let shape = LatticeShape::new(n, bounds)?;
        let labels = vec![vec![None; shape.len()]; present.len()];
        Ok(MultiplexGraph {
            shape,
            present,
            labels,
        })
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn n_features(&self) -> usize {
        self.shape.n
    }

    pub fn n_subgroups(&self) -> usize {
        self.present.len()
    }

    pub fn bounds(&self) -> LevelBounds {
        self.shape.bounds
    }

    pub fn n_nodes(&self) -> usize {
        self.shape.len() * self.n_subgroups()
    }

    pub fn present(&self, subgroup: usize) -> FeatureSubset {
        self.present[subgroup]
    }

    pub fn global_id(&self, node: NodeId) -> Result<usize> {
        let local = self.local(node)?;
        Ok(node.subgroup * self.shape.len() + local)
    }

    fn local(&self, node: NodeId) -> Result<usize> {
        if node.subgroup >= self.n_subgroups() {
            return Err(unknown(node));
        }
        self.shape.index(node.subset).ok_or_else(|| unknown(node))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.local(node).is_ok()
    }

    /// True when every feature of the node is observed in its subgroup.
    pub fn labelable(&self, node: NodeId) -> bool {
        self.contains(node) && node.subset.is_subset_of(self.present[node.subgroup])
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n_subgroups()).flat_map(move |i| {
            self.shape.subsets.iter().map(move |&s| NodeId::new(i, s))
        })
    }

    pub fn neighbors(&self, node: NodeId, family: EdgeFamily) -> Result<Vec<NodeId>> {
        let v = self.local(node)?;
        let i = node.subgroup;
        let at = |k: &u32| NodeId::new(i, self.shape.subsets[*k as usize]);
        Ok(match family {
            EdgeFamily::InterLevelDown => self.shape.down.row(v).iter().map(at).collect(),
            EdgeFamily::InterLevelUp => self.shape.up.row(v).iter().map(at).collect(),
            EdgeFamily::InterLevel => {
                let mut all: Vec<u32> = self.shape.down.row(v).to_vec();
                all.extend_from_slice(self.shape.up.row(v));
                all.sort_unstable();
                all.iter().map(at).collect()
            }
            EdgeFamily::IntraLevel => self.shape.intra.row(v).iter().map(at).collect(),
            EdgeFamily::InterLattice => (0..self.n_subgroups())
                .filter(|&j| j != i)
                .map(|j| NodeId::new(j, node.subset))
                .collect(),
        })
    }

    /// Inter-lattice edges per unordered subgroup pair.
    pub fn inter_lattice_edges_per_pair(&self) -> u64 {
        self.shape.len() as u64
    }

    pub fn set_label(&mut self, node: NodeId, mi: f64) -> Result<()> {
        let v = self.local(node)?;
        if !self.labelable(node) {
            return Err(Error::MissingFeature {
                subset: node.subset.bits(),
            });
        }
        self.labels[node.subgroup][v] = Some(mi);
        Ok(())
    }

    pub fn label(&self, node: NodeId) -> Option<f64> {
        self.local(node).ok().and_then(|v| self.labels[node.subgroup][v])
    }

    /// Labels of one subgroup by local index.
    pub fn labels(&self, subgroup: usize) -> &[Option<f64>] {
        &self.labels[subgroup]
    }

    pub fn clear_labels(&mut self) {
        for l in &mut self.labels {
            l.iter_mut().for_each(|x| *x = None);
        }
    }

    pub fn export(&self) -> GraphExport {
        let n = self.n_features();
        let v = self.shape.len();
        let nodes = self
            .nodes()
            .enumerate()
            .map(|(id, node)| ExportNode {
                id,
                subgroup: node.subgroup,
                bits: node.subset.to_bit_string(n),
                level: node.subset.level(),
                labelable: self.labelable(node),
                label: self.label(node),
            })
            .collect();
        let mut inter_level = Vec::new();
        let mut intra_level = Vec::new();
        for i in 0..self.n_subgroups() {
            let base = i * v;
            for a in 0..v {
                for &b in self.shape.down.row(a) {
                    inter_level.push([base + b as usize, base + a]);
                }
                for &b in self.shape.intra.row(a) {
                    if (b as usize) > a {
                        intra_level.push([base + a, base + b as usize]);
                    }
                }
            }
        }
        let mut inter_lattice = Vec::new();
        for i in 0..self.n_subgroups() {
            for j in i + 1..self.n_subgroups() {
                for a in 0..v {
                    inter_lattice.push([i * v + a, j * v + a]);
                }
            }
        }
        GraphExport {
            n_features: n,
            n_subgroups: self.n_subgroups(),
            level_min: self.bounds().min,
            level_max: self.bounds().max,
            nodes,
            inter_level,
            intra_level,
            inter_lattice,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &self.export())
    }
}

fn unknown(node: NodeId) -> Error {
    Error::UnknownNode {
        subgroup: node.subgroup,
        subset: node.subset.bits(),
    }
}

#[derive(Debug, Serialize)]
pub struct ExportNode {
    pub id: usize,
    pub subgroup: usize,
    pub bits: String,
    pub level: usize,
    pub labelable: bool,
    pub label: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct GraphExport {
    pub n_features: usize,
    pub n_subgroups: usize,
    pub level_min: usize,
    pub level_max: usize,
    pub nodes: Vec<ExportNode>,
    pub inter_level: Vec<[usize; 2]>,
    pub intra_level: Vec<[usize; 2]>,
    pub inter_lattice: Vec<[usize; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> FeatureSubset {
        FeatureSubset::from_bits(u32::from_str_radix(s, 2).unwrap())
    }

    fn graph(n: usize, groups: usize) -> MultiplexGraph {
        MultiplexGraph::from_masks(n, vec![FeatureSubset::full(n); groups], LevelBounds::full(n)).unwrap()
    }

    fn names(nodes: &[NodeId], n: usize) -> Vec<String> {
        nodes.iter().map(|x| x.subset.to_bit_string(n)).collect()
    }

    #[test]
    fn four_feature_counts() {
        let g = graph(4, 1);
        assert_eq!(g.n_nodes(), 15);
        assert_eq!(g.shape().inter_level_edges(), 28);
        assert_eq!(g.shape().intra_level_edges(), 18);
        assert_eq!(structural_counts(4, LevelBounds::full(4)), (15, 28, 18));
        assert_eq!(structural_counts(1, LevelBounds::full(1)), (1, 0, 0));
    }

    #[test]
    fn ten_feature_counts() {
        // 45*2*8/2 + 120*3*7/2 + 210*4*6/2 + 252*5*5/2 + 210*6*4/2 + 120*7*3/2 + 45*8*2/2 + 10*9/2
        let intra = 360 + 1260 + 2520 + 3150 + 2520 + 1260 + 360 + 45;
        assert_eq!(structural_counts(10, LevelBounds::full(10)), (1023, 5110, intra));
        let g = graph(10, 1);
        assert_eq!(g.shape().intra_level_edges(), intra);
    }

    #[test]
    fn lattice_neighborhoods() {
        let g = graph(4, 1);
        let down = g.neighbors(NodeId::new(0, bits("0111")), EdgeFamily::InterLevelDown).unwrap();
        assert_eq!(names(&down, 4), vec!["0011", "0101", "0110"]);
        let intra = g.neighbors(NodeId::new(0, bits("0011")), EdgeFamily::IntraLevel).unwrap();
        assert_eq!(names(&intra, 4), vec!["0101", "0110", "1001", "1010"]);
        assert!(g.neighbors(NodeId::new(0, bits("0100")), EdgeFamily::IntraLevel).unwrap().is_empty());
        assert!(g.neighbors(NodeId::new(0, bits("1111")), EdgeFamily::InterLevelUp).unwrap().is_empty());
        assert!(matches!(
            g.neighbors(NodeId::new(1, bits("0001")), EdgeFamily::IntraLevel),
            Err(Error::UnknownNode { .. })
        ));
    }

    #[test]
    fn three_subgroups() {
        let g = graph(4, 3);
        assert_eq!(g.n_nodes(), 45);
        let e = g.export();
        assert_eq!(e.inter_lattice.len(), 3 * 15);
        let across = g.neighbors(NodeId::new(1, bits("0101")), EdgeFamily::InterLattice).unwrap();
        assert_eq!(across, vec![NodeId::new(0, bits("0101")), NodeId::new(2, bits("0101"))]);
    }

    #[test]
    fn missing_features_make_nodes_unlabelable() {
        let mut g = MultiplexGraph::from_masks(3, vec![bits("011"), bits("111")], LevelBounds::full(3)).unwrap();
        assert!(g.labelable(NodeId::new(0, bits("011"))));
        assert!(!g.labelable(NodeId::new(0, bits("101"))));
        assert!(g.labelable(NodeId::new(1, bits("101"))));
        assert!(g.set_label(NodeId::new(0, bits("100")), 0.1).is_err());
        g.set_label(NodeId::new(0, bits("001")), 0.25).unwrap();
        assert_eq!(g.label(NodeId::new(0, bits("001"))), Some(0.25));
    }

    #[test]
    fn bounded_levels_drop_edges_to_excluded_levels() {
        let b = LevelBounds::new(2, 3);
        let shape = LatticeShape::new(5, b).unwrap();
        let (nodes, inter, intra) = structural_counts(5, b);
        assert_eq!(shape.len() as u64, nodes);
        assert_eq!(shape.inter_level_edges(), inter);
        assert_eq!(shape.intra_level_edges(), intra);
        let lvl2 = shape.index(bits("00011")).unwrap();
        assert!(shape.down().row(lvl2).is_empty());
        assert!(matches!(
            LatticeShape::new(4, LevelBounds::new(3, 2)),
            Err(Error::InvalidLevelBounds { .. })
        ));
    }

    #[test]
    fn counts_match_closed_form_up_to_twelve() {
        for n in 1..=12 {
            let s = LatticeShape::new(n, LevelBounds::full(n)).unwrap();
            let (nodes, inter, intra) = structural_counts(n, LevelBounds::full(n));
            assert_eq!(s.len() as u64, nodes, "n={n}");
            assert_eq!(nodes, (1u64 << n) - 1);
            assert_eq!(s.inter_level_edges(), inter, "n={n}");
            assert_eq!(2 * inter, n as u64 * ((1u64 << n) - 2));
            assert_eq!(s.intra_level_edges(), intra, "n={n}");
        }
    }

    #[test]
    fn edge_predicates_hold_exhaustively() {
        for n in 1..=8 {
            let g = graph(n, 2);
            for node in g.nodes() {
                for m in g.neighbors(node, EdgeFamily::InterLevel).unwrap() {
                    assert_eq!(m.subgroup, node.subgroup);
                    assert_eq!(m.subset.level().abs_diff(node.subset.level()), 1);
                    assert!(m.subset.is_subset_of(node.subset) || node.subset.is_subset_of(m.subset));
                }
                for m in g.neighbors(node, EdgeFamily::IntraLevel).unwrap() {
                    let l = node.subset.level();
                    assert_eq!(m.subset.level(), l);
                    let common = FeatureSubset::from_bits(m.subset.bits() & node.subset.bits());
                    assert_eq!(common.level(), l - 1);
                    assert!(l >= 2);
                }
                for m in g.neighbors(node, EdgeFamily::InterLattice).unwrap() {
                    assert_eq!(m.subset, node.subset);
                    assert_ne!(m.subgroup, node.subgroup);
                }
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(graph(6, 3), graph(6, 3));
    }
}
