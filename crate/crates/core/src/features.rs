//! Index sets over the feature ground set `[n]` and the masked encoding
//! the models consume.

use std::fmt;

use crate::error::{GenexError, Result};

/// A sorted, duplicate-free set of feature indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSet(Vec<usize>);

impl FeatureSet {
    pub fn empty() -> Self {
        FeatureSet(Vec::new())
    }

    /// The full ground set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        FeatureSet((0..n).collect())
    }

    pub fn from_bits(bits: u64) -> Self {
        FeatureSet((0..64).filter(|&i| bits >> i & 1 == 1).collect())
    }

    /// Bitmask encoding; only valid for ground sets of at most 64 features.
    pub fn bits(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &i| {
            debug_assert!(i < 64);
            acc | (1u64 << i)
        })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn insert(&mut self, index: usize) -> bool {
        match self.0.binary_search(&index) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, index);
                true
            }
        }
    }

    pub fn with(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.insert(index);
        out
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &FeatureSet) -> Self {
        self.iter().chain(other.iter()).collect()
    }

    pub fn intersection(&self, other: &FeatureSet) -> Self {
        self.iter().filter(|&i| other.contains(i)).collect()
    }

    pub fn difference(&self, other: &FeatureSet) -> Self {
        self.iter().filter(|&i| !other.contains(i)).collect()
    }

    pub fn is_subset(&self, other: &FeatureSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &FeatureSet) -> bool {
        self.iter().all(|i| !other.contains(i))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(index) if index >= n => Err(GenexError::IndexOutOfRange { index, n }),
            _ => Ok(()),
        }
    }

    /// Comma-separated encoding, `-` for the empty set.
    pub fn to_compact(&self) -> String {
        if self.is_empty() {
            return "-".to_string();
        }
        self.0
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_compact(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "-" || s.is_empty() {
            return Ok(FeatureSet::empty());
        }
        s.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| GenexError::format("feature set", format!("bad index {tok:?}")))
            })
            .collect()
    }
}

impl FromIterator<usize> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        FeatureSet(v)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_compact())
    }
}

/// Every subset of `{0, .., n-1}` with at most `max_size` elements, in
/// order of increasing size and lexicographic within a size.
pub fn subsets_up_to(n: usize, max_size: usize) -> Vec<FeatureSet> {
    fn combos(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<FeatureSet>) {
        if cur.len() == k {
            out.push(FeatureSet(cur.clone()));
            return;
        }
        for i in start..n {
            cur.push(i);
            combos(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 0..=max_size.min(n) {
        combos(n, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// `x[S]` encoded for the networks: values with unobserved coordinates
/// zeroed, plus the 0/1 presence mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedInput {
    pub values: Vec<f64>,
    pub mask: Vec<f64>,
}

impl MaskedInput {
    pub fn unobserved(n: usize) -> Self {
        MaskedInput {
            values: vec![0.0; n],
            mask: vec![0.0; n],
        }
    }

    /// Reveals `features[S]`.
    pub fn from_subset(features: &[f64], subset: &FeatureSet) -> Self {
        let mut m = MaskedInput::unobserved(features.len());
        m.reveal(subset, features);
        m
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Sets coordinates in `subset` from `source` (indexed by feature).
    pub fn reveal(&mut self, subset: &FeatureSet, source: &[f64]) {
        for j in subset.iter() {
            self.values[j] = source[j];
            self.mask[j] = 1.0;
        }
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
        self.mask[index] = 1.0;
    }

    pub fn support(&self) -> FeatureSet {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    /// The concatenated `[values, mask]` network input of length `2n`.
    pub fn encode_into(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.values);
        out.extend_from_slice(&self.mask);
    }

    pub fn encoded(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.n());
        self.encode_into(&mut v);
        v
    }
}
