//! Bitmask identity of a feature subset and the level arithmetic built on it.
//!
//! Bit `j` of the mask stands for selection feature `f_j`. Printed with the
//! highest feature first, so `{f0, f2}` over four features reads `0101`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest selection feature set supported. Dense per-subset tables are
/// indexed by mask, so memory grows as `2^n`.
pub const MAX_FEATURES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSubset(u32);

impl FeatureSubset {
    /// Encodes a non-empty set of feature indices, each `< n`.
    pub fn encode(features: &[usize], n: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut bits = 0u32;
        for &f in features {
            if f >= n || f >= MAX_FEATURES {
                return Err(Error::IndexOutOfRange { index: f, n });
            }
            bits |= 1 << f;
        }
        Ok(FeatureSubset(bits))
    }

    pub fn decode(self) -> Vec<usize> {
        self.features().collect()
    }

    /// Wraps a raw mask. Callers guarantee it is non-empty.
    pub const fn from_bits(bits: u32) -> Self {
        FeatureSubset(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn level(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn contains(self, feature: usize) -> bool {
        self.0 >> feature & 1 == 1
    }

    pub const fn is_subset_of(self, other: FeatureSubset) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn intersects(self, other: FeatureSubset) -> bool {
        self.0 & other.0 != 0
    }

    pub const fn with(self, feature: usize) -> Self {
        FeatureSubset(self.0 | 1 << feature)
    }

    pub const fn without(self, feature: usize) -> Self {
        FeatureSubset(self.0 & !(1 << feature))
    }

    pub fn features(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let f = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(f)
        })
    }

    /// Binary string of width `n`, highest feature first.
    pub fn to_bit_string(self, n: usize) -> String {
        (0..n)
            .rev()
            .map(|f| if self.contains(f) { '1' } else { '0' })
            .collect()
    }

    pub fn full(n: usize) -> Self {
        if n >= 32 {
            FeatureSubset(u32::MAX)
        } else {
            FeatureSubset((1u32 << n) - 1)
        }
    }

    /// 0/1 vector of width `n`.
    pub fn indicator(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|f| if self.contains(f) { 1.0 } else { 0.0 })
            .collect()
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, feat) in self.features().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "f{feat}")?;
        }
        write!(f, "}}")
    }
}

/// Inclusive range of lattice levels kept for sampling and prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBounds {
    pub min: usize,
    pub max: usize,
}

impl LevelBounds {
    pub fn new(min: usize, max: usize) -> Self {
        LevelBounds { min, max }
    }

    pub fn full(n: usize) -> Self {
        LevelBounds { min: 1, max: n }
    }

    pub fn validate(self, n: usize) -> Result<Self> {
        if self.min < 1 || self.min > self.max || self.max > n {
            return Err(Error::InvalidLevelBounds {
                min: self.min,
                max: self.max,
                n,
            });
        }
        Ok(self)
    }

    pub fn contains(self, level: usize) -> bool {
        (self.min..=self.max).contains(&level)
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Non-empty submasks of `mask` whose level lies in `bounds`, ascending.
pub fn subsets_within(mask: FeatureSubset, bounds: LevelBounds) -> Vec<FeatureSubset> {
    let mut out = Vec::new();
    let m = mask.bits();
    let mut s = m;
    while s != 0 {
        let sub = FeatureSubset(s);
        if bounds.contains(sub.level()) {
            out.push(sub);
        }
        s = (s - 1) & m;
    }
    out.reverse();
    out
}

/// Number of non-empty subsets of a `k`-feature set with level in `bounds`.
pub fn count_within(k: usize, bounds: LevelBounds) -> u64 {
    (bounds.min..=bounds.max.min(k))
        .map(|l| binomial(k, l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_lattice_vectors() {
        let s = FeatureSubset::encode(&[0, 2], 4).unwrap();
        assert_eq!(s.to_bit_string(4), "0101");
        assert_eq!(FeatureSubset::encode(&[0], 4).unwrap().to_bit_string(4), "0001");
        assert_eq!(
            FeatureSubset::encode(&[0, 1, 2, 3], 4).unwrap().to_bit_string(4),
            "1111"
        );
        assert_eq!(s.decode(), vec![0, 2]);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(matches!(FeatureSubset::encode(&[], 4), Err(Error::EmptySubset)));
        assert!(matches!(
            FeatureSubset::encode(&[4], 4),
            Err(Error::IndexOutOfRange { index: 4, n: 4 })
        ));
    }

    #[test]
    fn submask_enumeration_is_sorted_and_bounded() {
        let all = subsets_within(FeatureSubset::full(4), LevelBounds::full(4));
        assert_eq!(all.len(), 15);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        let mid = subsets_within(FeatureSubset::from_bits(0b1011), LevelBounds::new(2, 2));
        assert_eq!(
            mid.iter().map(|s| s.bits()).collect::<Vec<_>>(),
            vec![0b0011, 0b1001, 0b1010]
        );
        assert_eq!(count_within(3, LevelBounds::new(2, 2)), 3);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    proptest::proptest! {
        #[test]
        fn encode_decode_roundtrip(bits in 1u32..(1 << 12)) {
            let s = FeatureSubset::from_bits(bits);
            let back = FeatureSubset::encode(&s.decode(), 12).unwrap();
            proptest::prop_assert_eq!(back, s);
            proptest::prop_assert_eq!(s.level(), s.decode().len());
        }
    }
}
