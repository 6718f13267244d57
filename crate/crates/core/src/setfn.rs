//! The two set functions the greedy minimizes: the surrogate training
//! objective over oracle sets `U` (evaluated at warm-started parameters)
//! and the uncertainty-weighted generated-feature loss over `V ⊆ U*`.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::models::{train_f, BucketModels, Classifier, TrainConfig};
use crate::seed::{derive_seed, rng_from, tag};
use crate::uncertainty::{pre_with, DeltaTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GfConfig {
    /// Monte Carlo samples for the generated-feature term.
    pub mc_samples: usize,
    /// Training epochs run after each accepted feature.
    pub commit_epochs: usize,
    pub train: TrainConfig,
}

impl Default for GfConfig {
    fn default() -> Self {
        GfConfig {
            mc_samples: 8,
            commit_epochs: 2,
            train: TrainConfig::default(),
        }
    }
}

/// Cached per-instance quantities for the current parameters.
#[derive(Clone, Debug)]
struct Row {
    base: Vec<f64>,
    generated: Vec<Vec<f64>>,
}

fn build_rows(models: &BucketModels, data: &Dataset, samples: usize, seed: u64) -> Result<Vec<Row>> {
    data.instances
        .par_iter()
        .enumerate()
        .map(|(p, inst)| {
            let cond = inst.observed_input();
            let base = models.classifier.hidden_pre(&cond.encoded());
            let mut rng = rng_from(seed, &[p as u64]);
            let generated = (0..samples)
                .map(|_| {
                    let eps = models.generator.draw_noise(&mut rng);
                    models.generator.generate(&cond, Some(&inst.features), &eps)
                })
                .collect::<Result<_>>()?;
            Ok(Row { base, generated })
        })
        .collect()
}

/// Surrogate objective `Σ_i F(h, p; U | O_i)` at the context's current
/// parameters. Only [`GfContext::commit`] changes those parameters.
#[derive(Clone, Debug)]
pub struct GfContext {
    data: Dataset,
    models: BucketModels,
    deltas: DeltaTable,
    cfg: GfConfig,
    seed: u64,
    u: FeatureSet,
    commits: u64,
    rows: Vec<Row>,
}

/// One instance's terms of the surrogate loss.
#[derive(Clone, Debug, PartialEq)]
pub struct FTerms {
    pub delta: f64,
    pub oracle_loss: f64,
    /// One loss per Monte Carlo sample; empty when nothing is generated.
    pub generated_losses: Vec<f64>,
}

impl FTerms {
    pub fn generated_mean(&self) -> f64 {
        if self.generated_losses.is_empty() {
            self.oracle_loss
        } else {
            self.generated_losses.iter().sum::<f64>() / self.generated_losses.len() as f64
        }
    }

    pub fn value(&self) -> f64 {
        if self.delta == 1.0 {
            return self.oracle_loss;
        }
        self.delta * self.oracle_loss + (1.0 - self.delta) * self.generated_mean()
    }
}

/// Per-instance state for a fixed `U`, reused across a candidate sweep.
struct SweepState {
    oracle: Vec<f64>,
    generated: Vec<Vec<f64>>,
    delta: crate::uncertainty::DeltaState,
    value: f64,
}

impl GfContext {
    pub fn new(data: Dataset, models: BucketModels, deltas: DeltaTable, cfg: GfConfig, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(GenexError::EmptyBucket);
        }
        if deltas.len() != data.len() {
            return Err(GenexError::ShapeMismatch(format!(
                "uncertainty table covers {} instances, bucket has {}",
                deltas.len(),
                data.len()
            )));
        }
        let rows = build_rows(&models, &data, cfg.mc_samples.max(1), derive_seed(seed, &[tag::GF_MC, 0]))?;
        Ok(GfContext {
            data,
            models,
            deltas,
            cfg,
            seed,
            u: FeatureSet::empty(),
            commits: 0,
            rows,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn models(&self) -> &BucketModels {
        &self.models
    }

    pub fn into_models(self) -> BucketModels {
        self.models
    }

    pub fn deltas(&self) -> &DeltaTable {
        &self.deltas
    }

    /// Features committed so far.
    pub fn selected(&self) -> &FeatureSet {
        &self.u
    }

    fn clf(&self) -> &Classifier {
        &self.models.classifier
    }

    fn label(&self, i: usize) -> usize {
        self.data.instances[i].label
    }

    pub fn terms(&self, i: usize, u: &FeatureSet) -> FTerms {
        let inst = &self.data.instances[i];
        let row = &self.rows[i];
        let target = u.difference(&inst.observed);
        let clf = self.clf();
        let oracle_loss = clf.loss_from_pre(&pre_with(clf, &row.base, &target, &inst.features), inst.label);
        let delta = self.deltas.delta(i, u);
        let generated_losses = if target.is_empty() || delta == 1.0 {
            Vec::new()
        } else {
            row.generated
                .iter()
                .map(|g| clf.loss_from_pre(&pre_with(clf, &row.base, &target, g), inst.label))
                .collect()
        };
        FTerms {
            delta,
            oracle_loss,
            generated_losses,
        }
    }

    pub fn value(&self, u: &FeatureSet) -> Result<f64> {
        u.check_bounds(self.data.n)?;
        Ok((0..self.data.len()).map(|i| self.terms(i, u).value()).sum())
    }

    pub fn marginal(&self, e: usize, u: &FeatureSet) -> Result<f64> {
        if u.contains(e) {
            return Err(GenexError::invalid(format!("feature {e} is already in {u}")));
        }
        if e >= self.data.n {
            return Err(GenexError::IndexOutOfRange { index: e, n: self.data.n });
        }
        Ok(self.value(&u.with(e))? - self.value(u)?)
    }

    fn sweep_state(&self, i: usize, u: &FeatureSet) -> SweepState {
        let inst = &self.data.instances[i];
        let row = &self.rows[i];
        let target = u.difference(&inst.observed);
        let clf = self.clf();
        let oracle = pre_with(clf, &row.base, &target, &inst.features);
        let generated = row.generated.iter().map(|g| pre_with(clf, &row.base, &target, g)).collect();
        SweepState {
            oracle,
            generated,
            delta: self.deltas.state(i, u),
            value: self.terms(i, u).value(),
        }
    }

    /// Marginal gains `G(e | U)` for every candidate, computed by updating
    /// cached first-layer activations instead of re-running each subset.
    pub fn sweep(&self, u: &FeatureSet, candidates: &[usize]) -> Result<Vec<f64>> {
        u.check_bounds(self.data.n)?;
        for &e in candidates {
            if u.contains(e) {
                return Err(GenexError::invalid(format!("feature {e} is already in {u}")));
            }
            if e >= self.data.n {
                return Err(GenexError::IndexOutOfRange { index: e, n: self.data.n });
            }
        }
        let states: Vec<SweepState> = (0..self.data.len())
            .into_par_iter()
            .map(|i| self.sweep_state(i, u))
            .collect();
        let clf = self.clf();
        Ok(candidates
            .par_iter()
            .map(|&e| {
                let mut scratch = Vec::with_capacity(clf.hidden);
                let mut total = 0.0;
                for (i, st) in states.iter().enumerate() {
                    let inst = &self.data.instances[i];
                    if inst.observed.contains(e) {
                        continue;
                    }
                    let y = self.label(i);
                    scratch.clear();
                    scratch.extend_from_slice(&st.oracle);
                    clf.reveal_in_pre(&mut scratch, e, inst.features[e]);
                    let oracle_loss = clf.loss_from_pre(&scratch, y);
                    let delta = self.deltas.value_with(i, &st.delta, e, &mut scratch);
                    let value = if delta == 1.0 {
                        oracle_loss
                    } else {
                        let mut gen = 0.0;
                        for (pre, g) in st.generated.iter().zip(&self.rows[i].generated) {
                            scratch.clear();
                            scratch.extend_from_slice(pre);
                            clf.reveal_in_pre(&mut scratch, e, g[e]);
                            gen += clf.loss_from_pre(&scratch, y);
                        }
                        gen /= st.generated.len() as f64;
                        delta * oracle_loss + (1.0 - delta) * gen
                    };
                    total += value - st.value;
                }
                total
            })
            .collect())
    }

    /// Accepts `e`: adds it to the selected set and trains for the
    /// configured number of epochs on the enlarged set.
    pub fn commit(&mut self, e: usize) -> Result<()> {
        if e >= self.data.n {
            return Err(GenexError::IndexOutOfRange { index: e, n: self.data.n });
        }
        self.u.insert(e);
        self.commits += 1;
        if self.cfg.commit_epochs == 0 {
            return Ok(());
        }
        let deltas: Vec<f64> = (0..self.data.len()).map(|i| self.deltas.delta(i, &self.u)).collect();
        let train_seed = derive_seed(self.seed, &[tag::SHUFFLE, self.commits]);
        train_f(
            &mut self.models,
            &self.data,
            &self.u,
            &deltas,
            self.cfg.commit_epochs,
            &self.cfg.train,
            train_seed,
        )?;
        self.rows = build_rows(
            &self.models,
            &self.data,
            self.cfg.mc_samples.max(1),
            derive_seed(self.seed, &[tag::GF_MC, self.commits]),
        )?;
        Ok(())
    }

    /// Mean and standard error over the cached samples of
    /// `ℓ(h(x[O ∪ A] ∪ x̃[V]), y)` for instance `i`, with `A` read from the
    /// oracle and `V` generated conditioned on `x[O]`.
    pub fn mixed_loss(&self, i: usize, oracle: &FeatureSet, generated: &FeatureSet) -> (f64, f64) {
        let inst = &self.data.instances[i];
        let row = &self.rows[i];
        let clf = self.clf();
        let a = oracle.difference(&inst.observed);
        let v = generated.difference(&inst.observed).difference(&a);
        let pre = pre_with(clf, &row.base, &a, &inst.features);
        if v.is_empty() {
            return (clf.loss_from_pre(&pre, inst.label), 0.0);
        }
        let losses: Vec<f64> = row
            .generated
            .iter()
            .map(|g| clf.loss_from_pre(&pre_with(clf, &pre, &v, g), inst.label))
            .collect();
        mean_and_se(&losses)
    }
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// How the generator is conditioned when scoring a candidate `V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlConditioning {
    /// On the observed features only.
    Observed,
    /// On the observed features plus the oracle-queried `U* \ V`, as at
    /// inference time.
    ObservedPlusQueried,
}

impl GlConditioning {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(GlConditioning::Observed),
            "observed+queried" => Ok(GlConditioning::ObservedPlusQueried),
            other => Err(GenexError::invalid(format!("unknown conditioning {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GlConditioning::Observed => "observed",
            GlConditioning::ObservedPlusQueried => "observed+queried",
        }
    }
}

/// Uncertainty-weighted loss of substituting generated values for `V ⊆ U*`,
/// at frozen trained parameters.
#[derive(Clone, Debug)]
pub struct GlContext {
    data: Dataset,
    models: BucketModels,
    u_star: FeatureSet,
    deltas: DeltaTable,
    conditioning: GlConditioning,
    noise: Vec<Vec<Vec<f64>>>,
    generated: Vec<Vec<Vec<f64>>>,
}

impl GlContext {
    pub fn new(
        data: Dataset,
        models: BucketModels,
        u_star: FeatureSet,
        deltas: DeltaTable,
        samples: usize,
        conditioning: GlConditioning,
        seed: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(GenexError::EmptyBucket);
        }
        u_star.check_bounds(data.n)?;
        if deltas.len() != data.len() {
            return Err(GenexError::ShapeMismatch("uncertainty table does not match the bucket".into()));
        }
        let samples = samples.max(1);
        let mut noise = Vec::with_capacity(data.len());
        let mut generated = Vec::with_capacity(data.len());
        for (p, inst) in data.instances.iter().enumerate() {
            let mut rng = rng_from(seed, &[tag::GL_MC, p as u64]);
            let eps: Vec<Vec<f64>> = (0..samples).map(|_| models.generator.draw_noise(&mut rng)).collect();
            if conditioning == GlConditioning::Observed {
                let cond = inst.observed_input();
                generated.push(
                    eps.iter()
                        .map(|e| models.generator.generate(&cond, Some(&inst.features), e))
                        .collect::<Result<_>>()?,
                );
            }
            noise.push(eps);
        }
        Ok(GlContext {
            data,
            models,
            u_star,
            deltas,
            conditioning,
            noise,
            generated,
        })
    }

    pub fn u_star(&self) -> &FeatureSet {
        &self.u_star
    }

    /// Value and Monte Carlo standard error. The error treats each sample
    /// index as one joint draw over the bucket.
    pub fn value_with_se(&self, v: &FeatureSet) -> Result<(f64, f64)> {
        if !v.is_subset(&self.u_star) {
            return Err(GenexError::invalid(format!("{v} is not a subset of {}", self.u_star)));
        }
        let clf = &self.models.classifier;
        let k = self.noise.first().map_or(1, Vec::len);
        let per_instance: Vec<Vec<f64>> = (0..self.data.len())
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let inst = &self.data.instances[i];
                let weight = 1.0 - self.deltas.delta(i, v);
                let queried = self.u_star.difference(v).difference(&inst.observed);
                let gen = v.difference(&inst.observed);
                let mut cond = inst.observed_input();
                cond.reveal(&queried, &inst.features);
                let base = clf.hidden_pre(&cond.encoded());
                if weight == 0.0 {
                    return Ok(vec![0.0; k]);
                }
                if gen.is_empty() {
                    return Ok(vec![weight * clf.loss_from_pre(&base, inst.label); k]);
                }
                (0..k)
                    .map(|s| {
                        let sample = match self.conditioning {
                            GlConditioning::Observed => self.generated[i][s].clone(),
                            GlConditioning::ObservedPlusQueried => {
                                self.models.generator.generate(&cond, Some(&inst.features), &self.noise[i][s])?
                            }
                        };
                        Ok(weight * clf.loss_from_pre(&pre_with(clf, &base, &gen, &sample), inst.label))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let totals: Vec<f64> = (0..k).map(|s| per_instance.iter().map(|r| r[s]).sum()).collect();
        Ok(mean_and_se(&totals))
    }

    pub fn value(&self, v: &FeatureSet) -> Result<f64> {
        Ok(self.value_with_se(v)?.0)
    }

    pub fn marginal(&self, e: usize, v: &FeatureSet) -> Result<f64> {
        if v.contains(e) {
            return Err(GenexError::invalid(format!("feature {e} is already in {v}")));
        }
        Ok(self.value(&v.with(e))? - self.value(v)?)
    }
}

