//! Seeded synthetic datasets used by the tests, the acceptance suite and the
//! `genex synth` subcommand. All generators return fully observed instances;
//! apply an observation policy afterwards.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Instance};
use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::seed::rng_from;

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn build(rows: Vec<(Vec<f64>, usize)>, n: usize, num_classes: usize) -> Result<Dataset> {
    let instances = rows
        .into_iter()
        .enumerate()
        .map(|(id, (features, label))| Instance {
            id,
            features,
            label,
            observed: FeatureSet::full(n),
        })
        .collect();
    Dataset::new(instances, n, num_classes)
}

/// Classification data whose label depends only on a few hidden features.
#[derive(Clone, Debug)]
pub struct InformativeSpec {
    pub n: usize,
    pub num_classes: usize,
    pub num_informative: usize,
    pub size: usize,
    /// Plant one extra feature that is a near-copy of an informative one.
    pub redundant_copy: bool,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct InformativeData {
    pub dataset: Dataset,
    pub informative: FeatureSet,
    /// `(copy, source)` when a redundant feature was planted.
    pub redundant: Option<(usize, usize)>,
}

/// Features are i.i.d. standard normal; the label is the argmax of random
/// linear class scores over the informative features.
pub fn informative_classification(spec: &InformativeSpec) -> Result<InformativeData> {
    let needed = spec.num_informative + usize::from(spec.redundant_copy);
    if spec.num_informative == 0 || needed > spec.n || spec.num_classes < 2 {
        return Err(GenexError::invalid("inconsistent informative-feature spec"));
    }
    let mut rng = rng_from(spec.seed, &[0x1AF0]);
    let picked = sample(&mut rng, spec.n, needed).into_vec();
    let informative: FeatureSet = picked[..spec.num_informative].iter().copied().collect();
    let redundant = spec
        .redundant_copy
        .then(|| (picked[spec.num_informative], picked[0]));
    let weights: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| (0..spec.num_informative).map(|_| normal(&mut rng)).collect())
        .collect();

    let rows = (0..spec.size)
        .map(|_| {
            let mut x: Vec<f64> = (0..spec.n).map(|_| normal(&mut rng)).collect();
            if let Some((copy, source)) = redundant {
                x[copy] = x[source] + 0.05 * normal(&mut rng);
            }
            let label = weights
                .iter()
                .map(|w| informative.iter().zip(w).map(|(j, wj)| wj * x[j]).sum::<f64>())
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0);
            (x, label)
        })
        .collect();
    Ok(InformativeData {
        dataset: build(rows, spec.n, spec.num_classes)?,
        informative,
        redundant,
    })
}

/// Two classes separated by a margin along a random direction.
pub fn separable_two_class(n: usize, size: usize, margin: f64, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from(seed, &[0x5E9]);
    let mut w: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
    let rows = (0..size)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let proj: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let label = usize::from(proj >= 0.0);
            let shift = if label == 1 { margin } else { -margin };
            x.iter_mut().zip(&w).for_each(|(xi, wi)| *xi += shift * wi);
            (x, label)
        })
        .collect();
    build(rows, n, 2)
}

/// Isotropic Gaussian blobs around the given centers; label = blob index.
pub fn gaussian_blobs(centers: &[Vec<f64>], per_blob: usize, std: f64, seed: u64) -> Result<Dataset> {
    let n = centers.first().map_or(0, Vec::len);
    let mut rng = rng_from(seed, &[0xB10B]);
    let mut rows = Vec::with_capacity(centers.len() * per_blob);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            rows.push((center.iter().map(|m| m + std * normal(&mut rng)).collect(), c));
        }
    }
    build(rows, n, centers.len().max(1))
}

/// Standard normal vectors, single class.
pub fn isotropic(n: usize, size: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from(seed, &[0x150]);
    let rows = (0..size)
        .map(|_| ((0..n).map(|_| normal(&mut rng)).collect(), 0))
        .collect();
    build(rows, n, 1)
}

/// Two elongated Gaussian clusters at `±separation` along the first axis,
/// each stretched by `elongation` along its own random direction. Columns
/// are z-scored; label = cluster.
pub fn elongated_clusters(
    n: usize,
    size: usize,
    elongation: f64,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = rng_from(seed, &[0xE70]);
    let mut rows = Vec::with_capacity(size);
    for c in 0..2 {
        let mut dir: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let count = if c == 0 { size / 2 } else { size - size / 2 };
        for _ in 0..count {
            let along = (elongation - 1.0) * normal(&mut rng);
            let mut x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            x.iter_mut().zip(&dir).for_each(|(xi, di)| *xi += along * di);
            x[0] += if c == 0 { separation } else { -separation };
            rows.push((x, c));
        }
    }
    let mut d = build(rows, n, 2)?;
    let st = super::Standardizer::fit(&d)?;
    d = st.apply(&d)?;
    d.standardization = None;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn informative_labels_ignore_other_features() {
        let spec = InformativeSpec {
            n: 12,
            num_classes: 3,
            num_informative: 3,
            size: 200,
            redundant_copy: true,
            seed: 5,
        };
        let data = informative_classification(&spec).unwrap();
        assert_eq!(data.informative.len(), 3);
        let (copy, source) = data.redundant.unwrap();
        assert!(!data.informative.contains(copy));
        assert!(data.informative.contains(source));
        for inst in &data.dataset.instances {
            assert!((inst.features[copy] - inst.features[source]).abs() < 0.5);
        }
        // every class is produced
        let mut seen = [false; 3];
        data.dataset.instances.iter().for_each(|i| seen[i.label] = true);
        assert!(seen.iter().all(|&s| s));
        let again = informative_classification(&spec).unwrap();
        assert_eq!(again.dataset, data.dataset);
    }

    #[test]
    fn separable_data_respects_margin() {
        let d = separable_two_class(4, 100, 1.0, 3).unwrap();
        assert_eq!(d.num_classes, 2);
        assert!(d.instances.iter().any(|i| i.label == 0));
        assert!(d.instances.iter().any(|i| i.label == 1));
    }
}
