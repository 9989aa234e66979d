//! Nearest-neighbor imputation of systematically missing features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SubgroupData, NULL};
use crate::error::{Error, Result};
use crate::subset::FeatureSubset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

/// Rows flattened for distance computation.
enum Rows {
    /// Four bits per feature, with a parallel mask of observed nibbles.
    Packed { values: Vec<u64>, observed: Vec<u64> },
    Plain { cells: Vec<Vec<u8>> },
}

impl Rows {
    fn build(columns: &[&[Vec<u8>]], cards: &[usize]) -> Rows {
        let n = cards.len();
        let rows: Vec<(usize, usize)> = columns
            .iter()
            .enumerate()
            .flat_map(|(g, cols)| (0..cols.first().map_or(0, Vec::len)).map(move |r| (g, r)))
            .collect();
        if n <= 16 && cards.iter().all(|&c| c < 16) {
            let mut values = Vec::with_capacity(rows.len());
            let mut observed = Vec::with_capacity(rows.len());
            for &(g, r) in &rows {
                let mut v = 0u64;
                let mut o = 0u64;
                for f in 0..n {
                    let c = columns[g][f][r];
                    if c != NULL {
                        v |= (c as u64) << (4 * f);
                        o |= 0xF << (4 * f);
                    }
                }
                values.push(v);
                observed.push(o);
            }
            Rows::Packed { values, observed }
        } else {
            Rows::Plain {
                cells: rows
                    .iter()
                    .map(|&(g, r)| (0..n).map(|f| columns[g][f][r]).collect())
                    .collect(),
            }
        }
    }

    /// Mismatches over features observed in both rows.
    fn distance(&self, a: usize, b: usize) -> u32 {
        match self {
            Rows::Packed { values, observed } => {
                let mut x = (values[a] ^ values[b]) & observed[a] & observed[b];
                x = (x | x >> 1 | x >> 2 | x >> 3) & 0x1111_1111_1111_1111;
                x.count_ones()
            }
            Rows::Plain { cells } => cells[a]
                .iter()
                .zip(&cells[b])
                .filter(|(&x, &y)| x != NULL && y != NULL && x != y)
                .count() as u32,
        }
    }
}

/// Fills every systematically missing feature of `sg` with the mode of its
/// `k` nearest donors. Donors are rows of other subgroups where the feature
/// is observed, scanned in subgroup then row order; that order breaks
/// distance ties, and the smallest code breaks mode ties.
pub fn knn_impute(sg: &SubgroupData, all: &[SubgroupData], config: KnnConfig) -> Result<SubgroupData> {
    if config.k < 1 {
        return Err(Error::InvalidK);
    }
    let missing: Vec<usize> = sg.missing.features().collect();
    if missing.is_empty() {
        return Ok(sg.clone());
    }
    let donors_from: Vec<&SubgroupData> = all.iter().filter(|o| o.index != sg.index).collect();
    for &f in &missing {
        if !donors_from.iter().any(|o| o.columns[f].iter().any(|&c| c != NULL)) {
            return Err(Error::ObservedNowhere(format!("f{f}")));
        }
    }
    let mut groups: Vec<&[Vec<u8>]> = vec![&sg.columns];
    groups.extend(donors_from.iter().map(|o| o.columns.as_slice()));
    let rows = Rows::build(&groups, &sg.cardinalities);
    let own = sg.n_rows();

    // donor positions per missing feature, in scan order
    let mut donors: Vec<Vec<(usize, u8)>> = Vec::with_capacity(missing.len());
    for &f in &missing {
        let mut list = Vec::new();
        let mut base = own;
        for o in &donors_from {
            for (r, &c) in o.columns[f].iter().enumerate() {
                if c != NULL {
                    list.push((base + r, c));
                }
            }
            base += o.n_rows();
        }
        donors.push(list);
    }

    let n = sg.n_features();
    let k = config.k;
    let imputed: Vec<Vec<u8>> = (0..own)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n + 1], Vec::<u32>::new()),
            |(hist, dist), r| {
                missing
                    .iter()
                    .zip(&donors)
                    .map(|(&f, list)| {
                        dist.clear();
                        hist.iter_mut().for_each(|h| *h = 0);
                        for &(d, _) in list {
                            let x = rows.distance(r, d);
                            dist.push(x);
                            hist[x as usize] += 1;
                        }
                        let take = k.min(list.len());
                        // smallest radius holding at least `take` donors
                        let mut below = 0usize;
                        let mut radius = 0usize;
                        while below + (hist[radius] as usize) < take {
                            below += hist[radius] as usize;
                            radius += 1;
                        }
                        let mut on_edge = take - below;
                        let mut votes = vec![0u32; sg.cardinalities[f].max(1)];
                        for (&(_, c), &x) in list.iter().zip(dist.iter()) {
                            let x = x as usize;
                            if x < radius || (x == radius && on_edge > 0) {
                                if x == radius {
                                    on_edge -= 1;
                                }
                                if votes.len() <= c as usize {
                                    votes.resize(c as usize + 1, 0);
                                }
                                votes[c as usize] += 1;
                            }
                        }
                        let best = votes.iter().copied().max().unwrap_or(0);
                        votes.iter().position(|&v| v == best).unwrap_or(0) as u8
                    })
                    .collect()
            },
        )
        .collect();

    let mut out = sg.clone();
    for (m, &f) in missing.iter().enumerate() {
        out.columns[f] = imputed.iter().map(|row| row[m]).collect();
    }
    out.missing = FeatureSubset::from_bits(0);
    out.present = FeatureSubset::full(n);
    Ok(out)
}
