//! Random-hyperplane bucketing of zero-padded observed vectors, with the
//! k-means alternative used for comparison and two balance diagnostics.
//!
//! A bucket is the sign pattern of `W^T x` for an `n x M` Gaussian matrix
//! `W`. Two vectors at angle `θ` agree on a single hyperplane with
//! probability `1 - θ/π`, so similar observations tend to share buckets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, SparseFeatures};
use crate::error::{GenexError, Result};
use crate::seed::{rng_from, tag};

const BANK_MAGIC: &str = "genex-hyperplanes v1";

/// `n x M` matrix of i.i.d. standard normal hyperplane normals.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneBank {
    n: usize,
    m: usize,
    seed: u64,
    /// Row-major: `w[j * m + k]` is coordinate `j` of normal `k`.
    w: Vec<f64>,
}

pub fn make_bank(n: usize, m: usize, seed: u64) -> Result<HyperplaneBank> {
    if n == 0 || m == 0 {
        return Err(GenexError::invalid("hyperplane bank needs n >= 1 and M >= 1"));
    }
    let mut rng = rng_from(seed, &[tag::BANK]);
    let w = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    Ok(HyperplaneBank { n, m, seed, w })
}

impl HyperplaneBank {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hyperplanes(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight(&self, feature: usize, hyperplane: usize) -> f64 {
        self.w[feature * self.m + hyperplane]
    }

    /// Column `k` of `W`.
    pub fn normal(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.weight(j, k)).collect()
    }

    fn projections(&self, x: &SparseFeatures) -> Result<Vec<f64>> {
        if x.n != self.n {
            return Err(GenexError::DimensionMismatch {
                expected: self.n,
                actual: x.n,
            });
        }
        x.indices.check_bounds(self.n)?;
        let mut proj = vec![0.0; self.m];
        for (j, v) in x.indices.iter().zip(&x.values) {
            let row = &self.w[j * self.m..(j + 1) * self.m];
            proj.iter_mut().zip(row).for_each(|(p, w)| *p += w * v);
        }
        Ok(proj)
    }

    /// Serializes `n`, `M`, the seed and the matrix itself.
    pub fn to_text(&self) -> String {
        let mut s = format!("{BANK_MAGIC}\nn {}\nm {}\nseed {}\nw\n", self.n, self.m, self.seed);
        for j in 0..self.n {
            let row: Vec<String> = (0..self.m).map(|k| format!("{:?}", self.weight(j, k))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses a serialized bank. The matrix is regenerated from the seed and
    /// the stored copy must match it exactly.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| GenexError::format("hyperplane bank", m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(BANK_MAGIC) {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let (key, value) = line.split_once(' ').ok_or_else(|| bad(line))?;
            if key != name {
                return Err(bad(&format!("expected {name}, found {key}")));
            }
            value.trim().parse().map_err(|_| bad(line))
        };
        let n = field("n")? as usize;
        let m = field("m")? as usize;
        let seed = field("seed")?;
        let bank = make_bank(n, m, seed)?;
        if lines.next() != Some("w") {
            return Err(bad("missing matrix"));
        }
        let stored: Vec<f64> = lines
            .flat_map(|l| l.split_whitespace())
            .map(|t| t.parse::<f64>().map_err(|_| bad(t)))
            .collect::<Result<_>>()?;
        if stored.len() != n * m || stored.iter().zip(&bank.w).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(bad("stored matrix does not match the seed"));
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| GenexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenexError::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Sign pattern of a bucket, encoded big-endian: bit `M-1-m` is set iff
/// hyperplane `m` gave `+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BucketId(pub u64);

impl BucketId {
    pub fn from_signs(signs: &[i8]) -> Self {
        BucketId(signs.iter().fold(0u64, |acc, &s| (acc << 1) | u64::from(s > 0)))
    }

    pub fn signs(&self, m: usize) -> Vec<i8> {
        (0..m)
            .map(|k| if self.0 >> (m - 1 - k) & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn hamming(&self, other: BucketId) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for BucketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `sgn(W^T pad(x_obs))` with `sgn(0) = +1`.
pub fn hash_observed(bank: &HyperplaneBank, x: &SparseFeatures) -> Result<BucketId> {
    let proj = bank.projections(x)?;
    let signs: Vec<i8> = proj.iter().map(|&p| if p >= 0.0 { 1 } else { -1 }).collect();
    Ok(BucketId::from_signs(&signs))
}

/// Groups dataset positions by bucket. Empty buckets are absent.
pub fn partition(bank: &HyperplaneBank, d: &Dataset) -> Result<BTreeMap<BucketId, Vec<usize>>> {
    if d.n != bank.n {
        return Err(GenexError::DimensionMismatch {
            expected: bank.n,
            actual: d.n,
        });
    }
    let mut out: BTreeMap<BucketId, Vec<usize>> = BTreeMap::new();
    for (pos, inst) in d.instances.iter().enumerate() {
        out.entry(hash_observed(bank, &inst.observed_view())?)
            .or_default()
            .push(pos);
    }
    Ok(out)
}

/// The hashed bucket when it was trained, otherwise the trained bucket at
/// minimum Hamming distance (ties to the smallest id).
pub fn find_bucket(
    bank: &HyperplaneBank,
    x: &SparseFeatures,
    trained: &BTreeSet<BucketId>,
) -> Result<BucketId> {
    let hashed = hash_observed(bank, x)?;
    if trained.contains(&hashed) {
        return Ok(hashed);
    }
    trained
        .iter()
        .min_by_key(|b| (b.hamming(hashed), b.0))
        .copied()
        .ok_or_else(|| GenexError::invalid("no trained buckets"))
}

/// Fraction of the bank's hyperplanes on which `a` and `b` fall on the same
/// side.
pub fn sign_agreement(bank: &HyperplaneBank, a: &[f64], b: &[f64]) -> Result<f64> {
    let pa = bank.projections(&SparseFeatures::dense(a))?;
    let pb = bank.projections(&SparseFeatures::dense(b))?;
    let agree = pa.iter().zip(&pb).filter(|(x, y)| (**x >= 0.0) == (**y >= 0.0)).count();
    Ok(agree as f64 / bank.m as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
}

impl KMeans {
    pub fn fit(points: &[Vec<f64>], k: usize, seed: u64, iters: usize) -> Result<Self> {
        if k == 0 || k > points.len() {
            return Err(GenexError::invalid(format!(
                "k-means needs 1 <= k <= {} points, got k = {k}",
                points.len()
            )));
        }
        let mut rng = rng_from(seed, &[tag::KMEANS]);
        let mut chosen = vec![rng.random_range(0..points.len())];
        let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
        while chosen.len() < k {
            let total: f64 = d2.iter().sum();
            let next = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut pick = None;
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 {
                        pick = Some(i);
                        if r < w {
                            break;
                        }
                        r -= w;
                    }
                }
                pick.expect("positive total implies a positive weight")
            } else {
                // all remaining points coincide with chosen centers
                let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            };
            chosen.push(next);
            for (w, p) in d2.iter_mut().zip(points) {
                *w = w.min(sq_dist(p, &points[next]));
            }
        }
        let mut model = KMeans {
            centroids: chosen.iter().map(|&i| points[i].clone()).collect(),
        };
        let mut assign: Vec<usize> = points.iter().map(|p| model.assign(p)).collect();
        for _ in 0..iters {
            let dim = points[0].len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &c) in points.iter().zip(&assign) {
                counts[c] += 1;
                sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
            }
            for c in 0..k {
                // empty clusters keep their previous centroid
                if counts[c] > 0 {
                    model.centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            let next: Vec<usize> = points.iter().map(|p| model.assign(p)).collect();
            if next == assign {
                break;
            }
            assign = next;
        }
        Ok(model)
    }

    /// Nearest centroid, ties to the lowest index.
    pub fn assign(&self, p: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

/// k-means on zero-padded observed vectors. Empty clusters are absent.
pub fn kmeans_partition(
    d: &Dataset,
    k: usize,
    seed: u64,
    iters: usize,
) -> Result<(BTreeMap<usize, Vec<usize>>, KMeans)> {
    let points: Vec<Vec<f64>> = d.instances.iter().map(|i| i.padded_observed()).collect();
    let model = KMeans::fit(&points, k, seed, iters)?;
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, p) in points.iter().enumerate() {
        out.entry(model.assign(p)).or_default().push(pos);
    }
    Ok((out, model))
}

/// Smallest over largest bucket size, over non-empty buckets.
pub fn bucket_skew(sizes: impl IntoIterator<Item = usize>) -> Result<f64> {
    let sizes: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    match (sizes.iter().min(), sizes.iter().max()) {
        (Some(&lo), Some(&hi)) => Ok(lo as f64 / hi as f64),
        _ => Err(GenexError::invalid("bucket skew needs a non-empty bucket")),
    }
}

pub fn bucket_skew_of<K>(buckets: &BTreeMap<K, Vec<usize>>) -> Result<f64> {
    bucket_skew(buckets.values().map(Vec::len))
}

/// Mean cosine between each vector and the mean vector. Zero when the mean
/// vanishes; zero vectors contribute zero.
pub fn conicity(vectors: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = vectors.first() else {
        return Err(GenexError::invalid("conicity of an empty collection"));
    };
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(GenexError::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= vectors.len() as f64);
    let mean_norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if mean_norm < 1e-12 {
        return Ok(0.0);
    }
    let total: f64 = vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                0.0
            } else {
                v.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>() / (norm * mean_norm)
            }
        })
        .sum();
    Ok(total / vectors.len() as f64)
}

/// Routes an observation to a trained bucket under either partitioning.
#[derive(Clone, Debug)]
pub enum Router {
    Hyperplanes {
        bank: HyperplaneBank,
        trained: BTreeSet<BucketId>,
    },
    KMeans {
        model: KMeans,
        trained: BTreeSet<BucketId>,
    },
}

impl Router {
    pub fn route(&self, x: &SparseFeatures) -> Result<BucketId> {
        match self {
            Router::Hyperplanes { bank, trained } => find_bucket(bank, x, trained),
            Router::KMeans { model, trained } => {
                let padded = x.padded();
                // nearest centroid among clusters that were trained
                let mut best: Option<(BucketId, f64)> = None;
                for b in trained {
                    let d = sq_dist(&padded, &model.centroids[b.0 as usize]);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((*b, d));
                    }
                }
                best.map(|b| b.0)
                    .ok_or_else(|| GenexError::invalid("no trained buckets"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic;
    use crate::dataset::Instance;
    use crate::features::FeatureSet;
    use proptest::prelude::*;

    fn bank_from(n: usize, m: usize, w: Vec<f64>) -> HyperplaneBank {
        HyperplaneBank { n, m, seed: 0, w }
    }

    #[test]
    fn bank_is_reproducible() {
        let a = make_bank(5, 3, 11).unwrap();
        assert_eq!(a, make_bank(5, 3, 11).unwrap());
        assert_ne!(a.w, make_bank(5, 3, 12).unwrap().w);
        assert!(make_bank(0, 3, 1).is_err());
        assert!(make_bank(3, 0, 1).is_err());
    }

    #[test]
    fn bank_draws_are_centered() {
        // the sample mean of 10^4 standard normals has sd 0.01
        let n = 10_000;
        let bank = make_bank(n, 1, 3).unwrap();
        let mean = bank.normal(0).iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        let var = bank.normal(0).iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn bank_text_round_trip() {
        let bank = make_bank(4, 3, 99).unwrap();
        let text = bank.to_text();
        assert_eq!(HyperplaneBank::from_text(&text).unwrap(), bank);
        let tampered = text.replacen("seed 99", "seed 98", 1);
        assert!(HyperplaneBank::from_text(&tampered).is_err());
    }

    #[test]
    fn hash_examples() {
        let bank = bank_from(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = SparseFeatures::dense(&[3.0, -2.0]);
        let id = hash_observed(&bank, &x).unwrap();
        assert_eq!(id.signs(2), vec![1, -1]);
        assert_eq!(id, BucketId(2));

        let zero = SparseFeatures::dense(&[0.0, 0.0]);
        assert_eq!(hash_observed(&bank, &zero).unwrap().signs(2), vec![1, 1]);

        let big = make_bank(6, 4, 5).unwrap();
        let v = SparseFeatures::new(6, &[(0, 0.3), (4, -1.2)]).unwrap();
        let v5 = SparseFeatures::new(6, &[(0, 1.5), (4, -6.0)]).unwrap();
        assert_eq!(hash_observed(&big, &v).unwrap(), hash_observed(&big, &v5).unwrap());

        let oob = SparseFeatures {
            n: 6,
            indices: FeatureSet::from_iter([7]),
            values: vec![1.0],
        };
        assert!(matches!(
            hash_observed(&big, &oob),
            Err(GenexError::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn bucket_id_encoding_round_trips() {
        for code in 0..16u64 {
            let id = BucketId(code);
            assert_eq!(BucketId::from_signs(&id.signs(4)), id);
        }
    }

    fn dataset_of(points: Vec<Vec<f64>>) -> Dataset {
        let n = points[0].len();
        let instances = points
            .into_iter()
            .enumerate()
            .map(|(id, features)| Instance {
                id,
                features,
                label: 0,
                observed: FeatureSet::full(n),
            })
            .collect();
        Dataset::new(instances, n, 1).unwrap()
    }

    #[test]
    fn partition_examples() {
        let bank = make_bank(3, 3, 8).unwrap();
        let same = dataset_of(vec![vec![0.5, -1.0, 2.0]; 7]);
        let parts = partition(&bank, &same).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts.values().next().unwrap().len(), 7);

        let v = vec![0.7, -0.2, 1.3];
        let minus: Vec<f64> = v.iter().map(|x| -x).collect();
        let pair = dataset_of(vec![v, minus]);
        let parts = partition(&bank, &pair).unwrap();
        assert_eq!(parts.len(), 2);
        let ids: Vec<BucketId> = parts.keys().copied().collect();
        assert_eq!(ids[0].hamming(ids[1]), 3);
    }

    #[test]
    fn isotropic_data_fills_buckets_evenly() {
        let d = synthetic::isotropic(8, 10_000, 21).unwrap();
        let bank = make_bank(8, 3, 4).unwrap();
        let parts = partition(&bank, &d).unwrap();
        assert_eq!(parts.len(), 8);
        let sizes: Vec<usize> = parts.values().map(Vec::len).collect();
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        assert!(hi as f64 / lo as f64 <= 2.0, "sizes {sizes:?}");
    }

    #[test]
    fn find_bucket_fallback() {
        let bank = bank_from(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = SparseFeatures::dense(&[3.0, -2.0]); // id 2 = (+,-)
        let trained: BTreeSet<BucketId> = [BucketId(2), BucketId(1)].into();
        assert_eq!(find_bucket(&bank, &x, &trained).unwrap(), BucketId(2));
        // (+,+) = 3 is untrained; id 2 is at distance 1, id 0 at distance 2
        let y = SparseFeatures::dense(&[1.0, 1.0]);
        let trained: BTreeSet<BucketId> = [BucketId(2), BucketId(0)].into();
        assert_eq!(find_bucket(&bank, &y, &trained).unwrap(), BucketId(2));
        // ties break to the smaller id
        let trained: BTreeSet<BucketId> = [BucketId(2), BucketId(1)].into();
        assert_eq!(find_bucket(&bank, &y, &trained).unwrap(), BucketId(1));
        assert!(find_bucket(&bank, &y, &BTreeSet::new()).is_err());
    }

    #[test]
    fn find_bucket_matches_training_assignment() {
        let d = synthetic::isotropic(5, 200, 2).unwrap();
        let bank = make_bank(5, 3, 7).unwrap();
        let parts = partition(&bank, &d).unwrap();
        let trained: BTreeSet<BucketId> = parts.keys().copied().collect();
        for (b, members) in &parts {
            for &p in members {
                let got = find_bucket(&bank, &d.instances[p].observed_view(), &trained).unwrap();
                assert_eq!(got, *b);
            }
        }
    }

    #[test]
    fn kmeans_examples() {
        let d = synthetic::gaussian_blobs(&[vec![-10.0, 0.0], vec![10.0, 0.0]], 50, 1.0, 3).unwrap();
        let (one, _) = kmeans_partition(&d, 1, 1, 50).unwrap();
        assert_eq!(one.len(), 1);

        let (two, _) = kmeans_partition(&d, 2, 1, 50).unwrap();
        assert_eq!(two.len(), 2);
        for members in two.values() {
            let label = d.instances[members[0]].label;
            assert_eq!(members.len(), 50);
            assert!(members.iter().all(|&p| d.instances[p].label == label));
        }

        let small = synthetic::isotropic(3, 12, 5).unwrap();
        let (single, _) = kmeans_partition(&small, 12, 2, 50).unwrap();
        assert_eq!(single.len(), 12);
        assert!(single.values().all(|m| m.len() == 1));
        assert!(kmeans_partition(&small, 13, 2, 50).is_err());
    }

    #[test]
    fn skew_examples() {
        assert_eq!(bucket_skew([4, 4, 4]).unwrap(), 1.0);
        assert_eq!(bucket_skew([1, 5]).unwrap(), 0.2);
        assert_eq!(bucket_skew([9]).unwrap(), 1.0);
        assert!(bucket_skew([0, 0]).is_err());
    }

    #[test]
    fn conicity_examples() {
        assert!((conicity(&vec![vec![1.0, 2.0]; 4]).unwrap() - 1.0).abs() < 1e-12);
        let c = conicity(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(conicity(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap(), 0.0);
        // zero vector contributes nothing but still counts
        let c = conicity(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collision_rate_follows_angle() {
        let bank = make_bank(2, 20_000, 17).unwrap();
        for theta in [0.3f64, 1.0, 2.0, 3.0] {
            let a = [1.0, 0.0];
            let b = [theta.cos(), theta.sin()];
            let rate = sign_agreement(&bank, &a, &b).unwrap();
            let want = 1.0 - theta / std::f64::consts::PI;
            assert!((rate - want).abs() < 0.02, "theta {theta}: {rate} vs {want}");
        }
    }

    proptest! {
        #[test]
        fn hash_is_scale_invariant(
            xs in proptest::collection::vec(-5.0f64..5.0, 6),
            c in 0.01f64..100.0,
            seed in 0u64..50,
        ) {
            let bank = make_bank(6, 5, seed).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let a = hash_observed(&bank, &SparseFeatures::dense(&xs)).unwrap();
            let b = hash_observed(&bank, &SparseFeatures::dense(&scaled)).unwrap();
            // exact zeros stay zeros and projections keep their sign
            let pa = bank.projections(&SparseFeatures::dense(&xs)).unwrap();
            prop_assume!(pa.iter().all(|p| p.abs() > 1e-9));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn partition_is_a_disjoint_cover(seed in 0u64..200, m in 1usize..6) {
            let d = crate::dataset::apply_observation_policy(
                &synthetic::isotropic(6, 60, seed).unwrap(), 0.5, seed).unwrap();
            let bank = make_bank(6, m, seed).unwrap();
            let parts = partition(&bank, &d).unwrap();
            let mut all: Vec<usize> = parts.values().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..60).collect::<Vec<_>>());
            prop_assert!(parts.values().all(|m| !m.is_empty()));
        }

        #[test]
        fn find_bucket_is_total(seed in 0u64..100, code in 0u64..16, trained_bits in 1u64..(1 << 16)) {
            let bank = make_bank(4, 4, seed).unwrap();
            let trained: BTreeSet<BucketId> = (0..16).filter(|b| trained_bits >> b & 1 == 1).map(BucketId).collect();
            let signs = BucketId(code).signs(4);
            // a point whose hash is exactly `code`: sum of signed normals
            let x: Vec<f64> = (0..4).map(|j| signs.iter().enumerate()
                .map(|(k, &s)| s as f64 * bank.weight(j, k)).sum()).collect();
            let got = find_bucket(&bank, &SparseFeatures::dense(&x), &trained).unwrap();
            prop_assert!(trained.contains(&got));
        }
    }
}
