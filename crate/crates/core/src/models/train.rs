use rand::seq::SliceRandom;
use rand::Rng;

use super::{BucketModels, Classifier, ClassifierGrad, Generator, VaeGenerator, VaeGrad};
use crate::dataset::Dataset;
use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::models::generator::default_beta;
use crate::nn::{Optimizer, OptimizerKind};
use crate::seed::{rng_from, tag};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchSpec {
    pub hidden: usize,
    pub latent: usize,
    /// KL weight; `None` uses the dimension-scaled default.
    pub beta: Option<f64>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            hidden: 32,
            latent: 16,
            beta: None,
        }
    }
}

/// Which coordinates the generator learns to reconstruct during pretraining.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconTarget {
    /// Every feature of the training instance.
    Full,
    /// Only the instance's observed features.
    Observed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Monte Carlo samples for the generated-feature term.
    pub mc_samples: usize,
    pub recon: ReconTarget,
    /// During pretraining, reveal a random extra subset of each instance's
    /// features so that the models learn to use any feature, not only the
    /// ones the instance happens to observe.
    pub reveal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            optimizer: OptimizerKind::Sgd { lr: 1e-2 },
            mc_samples: 8,
            recon: ReconTarget::Full,
            reveal: true,
        }
    }
}

pub fn init_models(n: usize, classes: usize, arch: &ArchSpec, seed: u64) -> BucketModels {
    let classifier = Classifier::new(n, arch.hidden, classes, &mut rng_from(seed, &[tag::INIT_CLASSIFIER]));
    let beta = arch.beta.unwrap_or_else(|| default_beta(n));
    let generator = VaeGenerator::new(n, arch.hidden, arch.latent, beta, &mut rng_from(seed, &[tag::INIT_GENERATOR]));
    BucketModels {
        classifier,
        generator: Generator::Vae(generator),
    }
}

fn check_data(data: &Dataset, models: &BucketModels) -> Result<()> {
    if data.is_empty() {
        return Err(GenexError::EmptyBucket);
    }
    if data.n != models.classifier.n {
        return Err(GenexError::DimensionMismatch {
            expected: models.classifier.n,
            actual: data.n,
        });
    }
    Ok(())
}

fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng_from(seed, &[tag::SHUFFLE, epoch as u64]));
    order
}

/// Fits the classifier by cross-entropy and the generator as a β-VAE, both
/// on `x[O]`, or on `x[O ∪ R]` for a fresh random `R` per instance and
/// epoch when `cfg.reveal` is set. The reveal rate of `R` is itself uniform.
pub fn pretrain(arch: &ArchSpec, data: &Dataset, epochs: usize, cfg: &TrainConfig, seed: u64) -> Result<BucketModels> {
    let mut models = init_models(data.n, data.num_classes, arch, seed);
    check_data(data, &models)?;
    let Generator::Vae(gen) = &mut models.generator else {
        unreachable!("init_models builds a VAE")
    };
    let clf = &mut models.classifier;
    let mut copt = Optimizer::new(cfg.optimizer);
    let mut gopt = Optimizer::new(cfg.optimizer);
    let mut cgrad = ClassifierGrad::zeros_like(clf);
    let mut ggrad = VaeGrad::zeros_like(gen);
    let mut noise = rng_from(seed, &[tag::NOISE]);
    let mut reveal = rng_from(seed, &[tag::REVEAL]);
    let full = FeatureSet::full(data.n);
    for epoch in 0..epochs {
        for batch in epoch_order(data.len(), seed, epoch).chunks(cfg.batch_size.max(1)) {
            cgrad.clear();
            ggrad.clear();
            let w = 1.0 / batch.len() as f64;
            for &p in batch {
                let inst = &data.instances[p];
                let cond = if cfg.reveal {
                    let rate: f64 = reveal.random();
                    let extra: FeatureSet = (0..data.n).filter(|_| reveal.random_bool(rate)).collect();
                    inst.input_with(&extra).encoded()
                } else {
                    inst.observed_input().encoded()
                };
                clf.loss_and_grad(&cond, inst.label, w, &mut cgrad, None);
                let target = match cfg.recon {
                    ReconTarget::Full => &full,
                    ReconTarget::Observed => &inst.observed,
                };
                let eps = gen.draw_noise(&mut noise);
                gen.elbo_loss_and_grad(&cond, &inst.features, target, &eps, w, Some(&mut ggrad));
            }
            copt.step(clf.params_mut(), cgrad.slices());
            gopt.step(gen.params_mut(), ggrad.slices());
        }
    }
    Ok(models)
}

/// Minimizes the uncertainty-weighted surrogate
/// `Δ_i·ℓ(h(x[O∪U]), y) + (1−Δ_i)·mean_k ℓ(h(x[O] ∪ x̃_k[U]), y)` for
/// `epochs` passes, updating classifier and generator jointly. `deltas` is
/// indexed like `data.instances`. Features of `U` already observed by an
/// instance keep their observed value.
pub fn train_f(
    models: &mut BucketModels,
    data: &Dataset,
    u: &FeatureSet,
    deltas: &[f64],
    epochs: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<()> {
    check_data(data, models)?;
    u.check_bounds(data.n)?;
    if deltas.len() != data.len() {
        return Err(GenexError::ShapeMismatch(format!(
            "{} uncertainty weights for {} instances",
            deltas.len(),
            data.len()
        )));
    }
    let n = data.n;
    let BucketModels { classifier: clf, generator } = models;
    let mut copt = Optimizer::new(cfg.optimizer);
    let mut gopt = Optimizer::new(cfg.optimizer);
    let mut cgrad = ClassifierGrad::zeros_like(clf);
    let mut vgrad = match generator {
        Generator::Vae(g) => Some(VaeGrad::zeros_like(g)),
        Generator::Copy(_) => None,
    };
    let mut noise = rng_from(seed, &[tag::NOISE]);
    let k = cfg.mc_samples.max(1);
    let mut dx = vec![0.0; 2 * n];
    let mut dout = vec![0.0; n];
    for epoch in 0..epochs {
        for batch in epoch_order(data.len(), seed, epoch).chunks(cfg.batch_size.max(1)) {
            cgrad.clear();
            if let Some(g) = vgrad.as_mut() {
                g.clear();
            }
            let w = 1.0 / batch.len() as f64;
            for &p in batch {
                let inst = &data.instances[p];
                let delta = deltas[p];
                if delta != 0.0 {
                    let x = inst.input_with(u).encoded();
                    clf.loss_and_grad(&x, inst.label, w * delta, &mut cgrad, None);
                }
                if delta == 1.0 {
                    continue;
                }
                let gen_w = w * (1.0 - delta);
                let cond = inst.observed_input();
                let target = u.difference(&inst.observed);
                if target.is_empty() {
                    clf.loss_and_grad(&cond.encoded(), inst.label, gen_w, &mut cgrad, None);
                    continue;
                }
                let cond_enc = cond.encoded();
                for _ in 0..k {
                    let eps = generator.draw_noise(&mut noise);
                    let mut input = cond.clone();
                    match generator {
                        Generator::Vae(g) => {
                            let trace = g.forward(&cond_enc, &eps);
                            target.iter().for_each(|j| input.set(j, trace.out[j]));
                            clf.loss_and_grad(&input.encoded(), inst.label, gen_w / k as f64, &mut cgrad, Some(&mut dx));
                            dout.iter_mut().for_each(|d| *d = 0.0);
                            target.iter().for_each(|j| dout[j] = dx[j]);
                            if let Some(vg) = vgrad.as_mut() {
                                g.backward(&cond_enc, &trace, &dout, 0.0, vg);
                            }
                        }
                        Generator::Copy(_) => {
                            let full = generator.generate(&cond, Some(&inst.features), &eps)?;
                            target.iter().for_each(|j| input.set(j, full[j]));
                            clf.loss_and_grad(&input.encoded(), inst.label, gen_w / k as f64, &mut cgrad, None);
                        }
                    }
                }
            }
            copt.step(clf.params_mut(), cgrad.slices());
            if let (Generator::Vae(g), Some(vg)) = (&mut *generator, vgrad.as_ref()) {
                gopt.step(g.params_mut(), vg.slices());
            }
        }
    }
    Ok(())
}

/// Fraction of instances whose argmax prediction on `x[O ∪ extra]` is
/// correct.
pub fn accuracy(clf: &Classifier, data: &Dataset, extra: &FeatureSet) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .instances
        .iter()
        .filter(|inst| {
            let p = clf.probs_encoded(&inst.input_with(extra).encoded());
            argmax(&p) == inst.label
        })
        .count();
    hits as f64 / data.len() as f64
}

/// Index of the largest entry, first one on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
