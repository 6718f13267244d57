#![allow(dead_code)]

use genex::dataset::synthetic::{informative_classification, InformativeSpec};
use genex::dataset::{apply_observation_policy, Dataset};
use genex::features::FeatureSet;
use genex::models::{pretrain, ArchSpec, BucketModels, CopyGenerator, Generator, TrainConfig};
use genex::nn::OptimizerKind;
use genex::setfn::{GfConfig, GfContext};
use genex::uncertainty::{DeltaMode, DeltaTable, UncertaintyEstimator};

/// Small bucket with labels driven by `informative` of its `n` features and
/// `observed` features per instance.
pub fn bucket(n: usize, size: usize, informative: usize, observed: usize, seed: u64) -> Dataset {
    let d = informative_classification(&InformativeSpec {
        n,
        num_classes: 2,
        num_informative: informative,
        size,
        redundant_copy: false,
        seed,
    })
    .unwrap()
    .dataset;
    apply_observation_policy(&d, observed as f64 / n as f64, seed).unwrap()
}

pub fn train_cfg() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam { lr: 3e-3 },
        ..TrainConfig::default()
    }
}

pub fn pretrained(d: &Dataset, epochs: usize, seed: u64) -> BucketModels {
    pretrain(&ArchSpec::default(), d, epochs, &train_cfg(), seed).unwrap()
}

pub fn with_copy(models: &BucketModels, n: usize, exact: FeatureSet, noise: f64) -> BucketModels {
    BucketModels {
        classifier: models.classifier.clone(),
        generator: Generator::Copy(CopyGenerator { n, exact, noise }),
    }
}

pub fn table(models: &BucketModels, d: &Dataset, mode: DeltaMode, seed: u64) -> DeltaTable {
    UncertaintyEstimator::new(models.clone(), 8, mode).table(d, seed).unwrap()
}

pub fn gf(d: &Dataset, models: &BucketModels, mode: DeltaMode, k: usize, seed: u64) -> GfContext {
    let cfg = GfConfig {
        mc_samples: k,
        commit_epochs: 2,
        train: train_cfg(),
    };
    GfContext::new(d.clone(), models.clone(), table(models, d, mode, seed), cfg, seed).unwrap()
}

/// Unobserved-everywhere pool of a bucket.
pub fn pool(d: &Dataset) -> FeatureSet {
    FeatureSet::full(d.n).difference(&d.common_observed())
}
