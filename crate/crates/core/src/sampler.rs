//! Choosing which computable subsets receive exact MI labels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{mi_shared, EntropyStore};
use crate::rng;
use crate::subset::{count_within, subsets_within, FeatureSubset, LevelBounds};

/// Hard cap on walk steps before giving up.
pub const MAX_STEPS: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub subgroup: usize,
    pub seed: u64,
    pub budget: usize,
    /// Sampled subsets in the order they were first reached.
    pub sampled: Vec<FeatureSubset>,
    /// Walk steps taken, zero for non-walk samplers.
    #[serde(default)]
    pub steps: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.sampled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled.is_empty()
    }

    pub fn contains(&self, s: FeatureSubset) -> bool {
        self.sampled.contains(&s)
    }
}

pub fn save_samples(path: impl AsRef<Path>, samples: &[SampleSet]) -> Result<()> {
    crate::io::write_json(path, &samples)
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<SampleSet>> {
    crate::io::read_json(path)
}

/// Number of non-empty subsets of `present` within `bounds`.
pub fn valid_count(present: FeatureSubset, bounds: LevelBounds) -> u64 {
    count_within(present.level(), bounds)
}

/// `⌈rate · valid⌉`, at least one.
pub fn budget_from_rate(rate: f64, present: FeatureSubset, bounds: LevelBounds) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidProbability(rate));
    }
    let valid = valid_count(present, bounds) as f64;
    Ok(((rate * valid).ceil() as usize).max(1))
}

fn check_budget(present: FeatureSubset, budget: usize, bounds: LevelBounds) -> Result<u64> {
    if present.is_empty() {
        return Err(Error::NoPresentFeatures);
    }
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    let available = valid_count(present, bounds);
    if budget as u64 > available {
        return Err(Error::BudgetExceeded { budget, available: available as usize });
    }
    Ok(available)
}

/// Lazy random walk on the hypercube over `present`.
///
/// Each step keeps the current subset with probability 1/2, otherwise flips
/// one uniformly chosen observed feature. Moves onto the empty set or outside
/// `bounds` count as stays. The walk ends once `budget` distinct subsets have
/// been visited.
pub fn randwalk_sample(
    present: FeatureSubset,
    budget: usize,
    bounds: LevelBounds,
    seed: u64,
) -> Result<SampleSet> {
    check_budget(present, budget, bounds)?;
    let feats: Vec<usize> = present.features().collect();
    if bounds.min >= bounds.max.min(feats.len()) && budget > 1 {
        // every valid state is isolated under single flips
        return Err(Error::FrozenWalk(budget));
    }
    let valid = |s: FeatureSubset| !s.is_empty() && bounds.contains(s.level());
    let mut rng = rng::seeded(seed);

    let mut state = loop {
        let mut s = FeatureSubset::from_bits(0);
        for &f in &feats {
            if rng.random_bool(0.5) {
                s = s.with(f);
            }
        }
        if valid(s) {
            break s;
        }
    };
    let mut seen = BTreeSet::from([state]);
    let mut sampled = vec![state];
    let mut steps = 0u64;
    while sampled.len() < budget {
        if steps >= MAX_STEPS {
            return Err(Error::StepLimit(steps));
        }
        steps += 1;
        if rng.random_bool(0.5) {
            continue;
        }
        let f = feats[rng.random_range(0..feats.len())];
        let next = if state.contains(f) { state.without(f) } else { state.with(f) };
        if !valid(next) {
            continue;
        }
        state = next;
        if seen.insert(state) {
            sampled.push(state);
        }
    }
    Ok(SampleSet {
        subgroup: 0,
        seed,
        budget,
        sampled,
        steps,
    })
}

/// Uniform sample without replacement from the valid subsets of `present`.
pub fn arbitrary_sample(
    present: FeatureSubset,
    budget: usize,
    bounds: LevelBounds,
    seed: u64,
) -> Result<SampleSet> {
    check_budget(present, budget, bounds)?;
    let population = subsets_within(present, bounds);
    let mut rng = rng::seeded(seed);
    let sampled = index::sample(&mut rng, population.len(), budget)
        .into_iter()
        .map(|k| population[k])
        .collect();
    Ok(SampleSet {
        subgroup: 0,
        seed,
        budget,
        sampled,
        steps: 0,
    })
}

/// A deliberately skewed sampler: subsets are drawn with weight
/// proportional to `level^bias`, so high levels dominate for `bias > 0`.
pub fn level_biased_sample(
    present: FeatureSubset,
    budget: usize,
    bounds: LevelBounds,
    bias: f64,
    seed: u64,
) -> Result<SampleSet> {
    check_budget(present, budget, bounds)?;
    let population = subsets_within(present, bounds);
    let weights: Vec<f64> = population
        .iter()
        .map(|s| (s.level() as f64).powf(bias))
        .collect();
    let mut rng = rng::seeded(seed);
    let picked = index::sample_weighted(&mut rng, population.len(), |k| weights[k], budget)
        .map_err(|e| Error::Config(format!("weighted sampling: {e}")))?;
    Ok(SampleSet {
        subgroup: 0,
        seed,
        budget,
        sampled: picked.into_iter().map(|k| population[k]).collect(),
        steps: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Randwalk,
    Arbitrary,
}

/// One sample per subgroup, each with its own generator derived from
/// `(seed, subgroup)`.
pub fn sample_all(
    kind: SamplerKind,
    present: &[FeatureSubset],
    budgets: &[usize],
    bounds: LevelBounds,
    seed: u64,
) -> Result<Vec<SampleSet>> {
    use rayon::prelude::*;
    present
        .par_iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (&p, &b))| {
            let s = rng::derive_seed(seed, i as u64);
            let mut set = match kind {
                SamplerKind::Randwalk => randwalk_sample(p, b, bounds, s)?,
                SamplerKind::Arbitrary => arbitrary_sample(p, b, bounds, s)?,
            };
            set.subgroup = i;
            Ok(set)
        })
        .collect()
}

/// Exact MI for every sampled subset, read from the subgroup's store.
pub fn label_samples(store: &EntropyStore, samples: &SampleSet) -> Result<BTreeMap<FeatureSubset, f64>> {
    samples
        .sampled
        .iter()
        .map(|&s| mi_shared(store, s).map(|mi| (s, mi)))
        .collect()
}

/// Upper-tail p-value of Pearson's χ² statistic for observed counts against
/// a uniform expectation.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let k = counts.len();
    if k < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn full(n: usize) -> FeatureSubset {
        FeatureSubset::full(n)
    }

    #[test]
    fn single_valid_state() {
        let s = randwalk_sample(FeatureSubset::from_bits(1), 1, LevelBounds::full(4), 0).unwrap();
        assert_eq!(s.sampled, vec![FeatureSubset::from_bits(1)]);
    }

    #[test]
    fn exhausts_small_lattice() {
        for seed in 0..20 {
            let s = randwalk_sample(full(3), 7, LevelBounds::full(3), seed).unwrap();
            let mut got: Vec<u32> = s.sampled.iter().map(|x| x.bits()).collect();
            got.sort_unstable();
            assert_eq!(got, (1..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn respects_present_and_bounds() {
        let present = FeatureSubset::from_bits(0b1011_0110);
        let b = LevelBounds::new(2, 3);
        let s = randwalk_sample(present, 12, b, 5).unwrap();
        assert_eq!(s.len(), 12);
        for x in &s.sampled {
            assert!(x.is_subset_of(present));
            assert!(b.contains(x.level()));
        }
        let distinct: BTreeSet<_> = s.sampled.iter().collect();
        assert_eq!(distinct.len(), 12);
    }

    #[test]
    fn budget_errors() {
        let b = LevelBounds::full(3);
        assert!(matches!(
            randwalk_sample(full(3), 8, b, 0),
            Err(Error::BudgetExceeded { budget: 8, available: 7 })
        ));
        assert!(matches!(
            randwalk_sample(FeatureSubset::from_bits(0), 1, b, 0),
            Err(Error::NoPresentFeatures)
        ));
        assert!(matches!(arbitrary_sample(full(3), 0, b, 0), Err(Error::ZeroBudget)));
        assert!(matches!(
            randwalk_sample(full(4), 3, LevelBounds::new(2, 2), 0),
            Err(Error::FrozenWalk(3))
        ));
    }

    #[test]
    fn rate_to_budget() {
        let b = LevelBounds::full(4);
        assert_eq!(budget_from_rate(0.1, full(4), b).unwrap(), 2);
        assert_eq!(budget_from_rate(1.0, full(4), b).unwrap(), 15);
        assert!(budget_from_rate(0.0, full(4), b).is_err());
    }

    #[test]
    fn arbitrary_is_deterministic_and_complete() {
        let b = LevelBounds::full(5);
        let a = arbitrary_sample(full(5), 10, b, 9).unwrap();
        assert_eq!(a, arbitrary_sample(full(5), 10, b, 9).unwrap());
        let all = arbitrary_sample(full(5), 31, b, 1).unwrap();
        let got: BTreeSet<_> = all.sampled.iter().map(|x| x.bits()).collect();
        assert_eq!(got.len(), 31);
    }

    #[test]
    fn valid_space_is_connected_under_flips() {
        // BFS over the transition kernel, stays excluded
        for n in 1..=8 {
            for (lo, hi) in [(1, n), (2.min(n), n), (1, (n / 2).max(1))] {
                let b = LevelBounds::new(lo, hi);
                if lo >= hi && count_within(n, b) > 1 {
                    continue;
                }
                let valid: BTreeSet<FeatureSubset> = subsets_within(full(n), b).into_iter().collect();
                let start = *valid.iter().next().unwrap();
                let mut seen = BTreeSet::from([start]);
                let mut queue = VecDeque::from([start]);
                while let Some(s) = queue.pop_front() {
                    for f in 0..n {
                        let t = if s.contains(f) { s.without(f) } else { s.with(f) };
                        if valid.contains(&t) && seen.insert(t) {
                            queue.push_back(t);
                        }
                    }
                }
                assert_eq!(seen, valid, "n={n} bounds={lo}..={hi}");
            }
        }
    }

    #[test]
    fn arbitrary_inclusion_is_uniform() {
        let b = LevelBounds::full(8);
        let mut counts = vec![0u64; 256];
        for seed in 0..400 {
            for s in arbitrary_sample(full(8), 100, b, seed).unwrap().sampled {
                counts[s.bits() as usize] += 1;
            }
        }
        assert!(chi_square_uniform_p(&counts[1..]) > 0.001);
    }

    #[test]
    fn biased_sampler_prefers_high_levels() {
        let b = LevelBounds::full(8);
        let s = level_biased_sample(full(8), 50, b, 4.0, 3).unwrap();
        let mean = s.sampled.iter().map(|x| x.level()).sum::<usize>() as f64 / 50.0;
        assert!(mean > 5.0, "{mean}");
    }

    #[test]
    fn chi_square_extremes() {
        assert!(chi_square_uniform_p(&[100, 100, 100, 100]) > 0.99);
        assert!(chi_square_uniform_p(&[400, 0, 0, 0]) < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn walk_returns_budget_distinct_valid(seed in 0u64..10_000, mask in 1u32..256, frac in 0.01f64..1.0) {
            let present = FeatureSubset::from_bits(mask);
            let b = LevelBounds::full(8);
            let budget = budget_from_rate(frac, present, b).unwrap();
            let s = randwalk_sample(present, budget, b, seed).unwrap();
            let distinct: BTreeSet<_> = s.sampled.iter().collect();
            proptest::prop_assert_eq!(distinct.len(), budget);
            proptest::prop_assert!(s.sampled.iter().all(|x| !x.is_empty() && x.is_subset_of(present)));
        }
    }
}
