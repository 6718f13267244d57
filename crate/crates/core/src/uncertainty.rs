//! Rescaled uncertainty of the pretrained classifier under generated
//! features, used to weight the oracle and generated loss terms.

use rand::Rng;

use crate::dataset::{Dataset, Instance};
use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::models::{BucketModels, Classifier};
use crate::seed::{rng_from, tag};

/// Value used by the constant mode unless configured otherwise.
pub const DEFAULT_CONSTANT_DELTA: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaMode {
    MonteCarlo,
    Constant(f64),
}

impl DeltaMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(DeltaMode::MonteCarlo),
            "constant" => Ok(DeltaMode::Constant(DEFAULT_CONSTANT_DELTA)),
            other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
                Some(Ok(v)) if (0.0..=1.0).contains(&v) => Ok(DeltaMode::Constant(v)),
                _ => Err(GenexError::invalid(format!("unknown delta mode {other:?}"))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            DeltaMode::MonteCarlo => "mc".into(),
            DeltaMode::Constant(v) if *v == DEFAULT_CONSTANT_DELTA => "constant".into(),
            DeltaMode::Constant(v) => format!("constant:{v:?}"),
        }
    }
}

/// Frozen pretrained classifier and generator.
#[derive(Clone, Debug)]
pub struct UncertaintyEstimator {
    pub models: BucketModels,
    pub samples: usize,
    pub mode: DeltaMode,
}

/// Maps a raw expected shortfall `E[1 − max_y h(x)[y]]` onto `[0, 1]`.
pub fn rescale(raw: f64, classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(GenexError::invalid("uncertainty rescaling needs at least two classes"));
    }
    Ok((raw / (1.0 - 1.0 / classes as f64)).clamp(0.0, 1.0))
}

/// First-layer pre-activations of `clf` on `x[O]` with the features in
/// `extra` filled from `values`.
pub(crate) fn pre_with(clf: &Classifier, base: &[f64], extra: &FeatureSet, values: &[f64]) -> Vec<f64> {
    let mut pre = base.to_vec();
    extra.iter().for_each(|j| clf.reveal_in_pre(&mut pre, j, values[j]));
    pre
}

impl UncertaintyEstimator {
    pub fn new(models: BucketModels, samples: usize, mode: DeltaMode) -> Self {
        UncertaintyEstimator {
            models,
            samples: samples.max(1),
            mode,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.models.classifier.classes
    }

    /// Monte Carlo estimate of the rescaled uncertainty `Δ_i(S)`. Features
    /// of `S` that the instance already observes are ignored.
    pub fn delta(&self, inst: &Instance, s: &FeatureSet, rng: &mut impl Rng) -> Result<f64> {
        if self.num_classes() < 2 {
            return Err(GenexError::invalid("uncertainty rescaling needs at least two classes"));
        }
        if let DeltaMode::Constant(v) = self.mode {
            return Ok(v);
        }
        s.check_bounds(inst.n())?;
        let clf = &self.models.classifier;
        let cond = inst.observed_input();
        let base = clf.hidden_pre(&cond.encoded());
        let target = s.difference(&inst.observed);
        if target.is_empty() {
            return rescale(1.0 - clf.confidence_from_pre(&base), self.num_classes());
        }
        let mut total = 0.0;
        for _ in 0..self.samples {
            let eps = self.models.generator.draw_noise(rng);
            let gen = self.models.generator.generate(&cond, Some(&inst.features), &eps)?;
            total += 1.0 - clf.confidence_from_pre(&pre_with(clf, &base, &target, &gen));
        }
        rescale(total / self.samples as f64, self.num_classes())
    }

    /// Per-instance random stream used by [`DeltaTable`].
    pub fn instance_rng(seed: u64, position: usize) -> rand_chacha::ChaCha8Rng {
        rng_from(seed, &[tag::DELTA, position as u64])
    }

    /// Draws and stores the generated samples for every instance of `data`
    /// so that many subsets can be scored with shared noise.
    pub fn table(&self, data: &Dataset, seed: u64) -> Result<DeltaTable> {
        if self.num_classes() < 2 {
            return Err(GenexError::invalid("uncertainty rescaling needs at least two classes"));
        }
        let clf = &self.models.classifier;
        let mut rows = Vec::with_capacity(data.len());
        for (p, inst) in data.instances.iter().enumerate() {
            let cond = inst.observed_input();
            let base = clf.hidden_pre(&cond.encoded());
            let mut samples = Vec::new();
            if self.mode == DeltaMode::MonteCarlo {
                let mut rng = Self::instance_rng(seed, p);
                for _ in 0..self.samples {
                    let eps = self.models.generator.draw_noise(&mut rng);
                    samples.push(self.models.generator.generate(&cond, Some(&inst.features), &eps)?);
                }
            }
            rows.push(DeltaRow {
                observed: inst.observed.clone(),
                base,
                samples,
            });
        }
        Ok(DeltaTable {
            clf: clf.clone(),
            mode: self.mode,
            classes: self.num_classes(),
            rows,
        })
    }
}

#[derive(Clone, Debug)]
struct DeltaRow {
    observed: FeatureSet,
    base: Vec<f64>,
    samples: Vec<Vec<f64>>,
}

/// Pre-drawn generated samples for a fixed set of instances. Evaluating
/// `Δ_i(S)` from the table gives the same value as
/// [`UncertaintyEstimator::delta`] with the per-instance stream.
#[derive(Clone, Debug)]
pub struct DeltaTable {
    clf: Classifier,
    mode: DeltaMode,
    classes: usize,
    rows: Vec<DeltaRow>,
}

/// Per-sample pre-activations of one instance for a fixed subset.
#[derive(Clone, Debug)]
pub struct DeltaState {
    pres: Vec<Vec<f64>>,
    base: Option<f64>,
}

impl DeltaTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mode(&self) -> DeltaMode {
        self.mode
    }

    pub fn state(&self, i: usize, s: &FeatureSet) -> DeltaState {
        let row = &self.rows[i];
        if let DeltaMode::Constant(_) = self.mode {
            return DeltaState { pres: Vec::new(), base: None };
        }
        let target = s.difference(&row.observed);
        if target.is_empty() {
            let raw = 1.0 - self.clf.confidence_from_pre(&row.base);
            return DeltaState {
                pres: Vec::new(),
                base: Some(raw),
            };
        }
        DeltaState {
            pres: row
                .samples
                .iter()
                .map(|g| pre_with(&self.clf, &row.base, &target, g))
                .collect(),
            base: None,
        }
    }

    fn finish(&self, raw: f64) -> f64 {
        rescale(raw, self.classes).expect("class count checked at construction")
    }

    /// `Δ_i(S)` for the subset the state was built from.
    pub fn value(&self, state: &DeltaState) -> f64 {
        if let DeltaMode::Constant(v) = self.mode {
            return v;
        }
        match state.base {
            Some(raw) => self.finish(raw),
            None => {
                let raw = state
                    .pres
                    .iter()
                    .map(|p| 1.0 - self.clf.confidence_from_pre(p))
                    .sum::<f64>()
                    / state.pres.len() as f64;
                self.finish(raw)
            }
        }
    }

    /// `Δ_i(S ∪ {e})` from the state of `S`, where `e` is neither in `S`
    /// nor observed by instance `i`.
    pub fn value_with(&self, i: usize, state: &DeltaState, e: usize, scratch: &mut Vec<f64>) -> f64 {
        if let DeltaMode::Constant(v) = self.mode {
            return v;
        }
        let row = &self.rows[i];
        let mut raw = 0.0;
        for (k, g) in row.samples.iter().enumerate() {
            scratch.clear();
            scratch.extend_from_slice(if state.base.is_some() { &row.base } else { &state.pres[k] });
            self.clf.reveal_in_pre(scratch, e, g[e]);
            raw += 1.0 - self.clf.confidence_from_pre(scratch);
        }
        self.finish(raw / row.samples.len() as f64)
    }

    pub fn delta(&self, i: usize, s: &FeatureSet) -> f64 {
        self.value(&self.state(i, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_models, ArchSpec, CopyGenerator, Generator};

    fn instance() -> Instance {
        Instance {
            id: 0,
            features: vec![0.5, -1.0, 2.0, 0.1],
            label: 1,
            observed: FeatureSet::from_iter([0]),
        }
    }

    fn estimator(mode: DeltaMode) -> UncertaintyEstimator {
        UncertaintyEstimator::new(init_models(4, 3, &ArchSpec::default(), 3), 16, mode)
    }

    #[test]
    fn uniform_classifier_is_fully_uncertain() {
        let mut est = estimator(DeltaMode::MonteCarlo);
        est.models.classifier = Classifier::zeros(4, 32, 3);
        let d = est.delta(&instance(), &FeatureSet::from_iter([1, 2]), &mut rng_from(1, &[])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confident_classifier_has_no_uncertainty() {
        let mut est = estimator(DeltaMode::MonteCarlo);
        let mut clf = Classifier::zeros(4, 32, 3);
        clf.l2.b = vec![0.0, 800.0, 0.0];
        est.models.classifier = clf;
        let d = est.delta(&instance(), &FeatureSet::from_iter([1]), &mut rng_from(1, &[])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let est = UncertaintyEstimator::new(init_models(4, 1, &ArchSpec::default(), 3), 4, DeltaMode::MonteCarlo);
        assert!(est.delta(&instance(), &FeatureSet::empty(), &mut rng_from(1, &[])).is_err());
    }

    #[test]
    fn deterministic_generator_ignores_sample_count() {
        let mut est = estimator(DeltaMode::MonteCarlo);
        est.models.generator = Generator::Copy(CopyGenerator {
            n: 4,
            exact: FeatureSet::full(4),
            noise: 0.0,
        });
        let s = FeatureSet::from_iter([2, 3]);
        let one = UncertaintyEstimator { samples: 1, ..est.clone() };
        let a = one.delta(&instance(), &s, &mut rng_from(1, &[])).unwrap();
        let b = est.delta(&instance(), &s, &mut rng_from(2, &[])).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct_estimate() {
        let est = estimator(DeltaMode::MonteCarlo);
        let d = Dataset::new(vec![instance(), Instance { id: 1, ..instance() }], 4, 3).unwrap();
        let table = est.table(&d, 77).unwrap();
        for s in [FeatureSet::empty(), FeatureSet::from_iter([0]), FeatureSet::from_iter([1, 3])] {
            for p in 0..2 {
                let direct = est
                    .delta(&d.instances[p], &s, &mut UncertaintyEstimator::instance_rng(77, p))
                    .unwrap();
                assert_eq!(table.delta(p, &s), direct);
            }
        }
        let base = FeatureSet::from_iter([1]);
        let st = table.state(0, &base);
        let mut scratch = Vec::new();
        let inc = table.value_with(0, &st, 2, &mut scratch);
        assert!((inc - table.delta(0, &base.with(2))).abs() < 1e-12);
    }

    #[test]
    fn constant_mode_and_parsing() {
        let est = estimator(DeltaMode::Constant(0.8));
        assert_eq!(est.delta(&instance(), &FeatureSet::from_iter([1]), &mut rng_from(1, &[])).unwrap(), 0.8);
        assert_eq!(DeltaMode::parse("constant").unwrap(), DeltaMode::Constant(0.8));
        assert_eq!(DeltaMode::parse("constant:0.5").unwrap(), DeltaMode::Constant(0.5));
        assert_eq!(DeltaMode::parse("mc").unwrap(), DeltaMode::MonteCarlo);
        assert!(DeltaMode::parse("constant:2").is_err());
        for m in [DeltaMode::MonteCarlo, DeltaMode::Constant(0.8), DeltaMode::Constant(0.25)] {
            assert_eq!(DeltaMode::parse(&m.name()).unwrap(), m);
        }
    }
}
