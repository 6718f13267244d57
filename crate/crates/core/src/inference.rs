//! Test-time acquisition: route to a bucket, query `U \ V` from the oracle,
//! generate `V`, and fall back to querying `V` when the classifier is not
//! confident enough.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::dataset::{Dataset, SparseFeatures};
use crate::error::{GenexError, Result};
use crate::features::{FeatureSet, MaskedInput};
use crate::greedy::{AcquisitionPlan, BucketPlan};
use crate::models::{argmax, BucketModels, Generator};
use crate::partition::{BucketId, HyperplaneBank, KMeans, Router};
use crate::seed::{rng_from, tag};

/// Source of ground-truth feature values.
pub trait Oracle: Sync {
    /// Values of `features` (ascending) for the given instance.
    fn query(&self, instance_id: usize, features: &FeatureSet) -> Result<Vec<f64>>;
}

/// Oracle backed by full feature rows, counting every value it hands out.
#[derive(Debug, Default)]
pub struct MatrixOracle {
    rows: BTreeMap<usize, Vec<f64>>,
    served: AtomicUsize,
}

impl MatrixOracle {
    pub fn from_dataset(d: &Dataset) -> Self {
        MatrixOracle {
            rows: d.instances.iter().map(|i| (i.id, i.features.clone())).collect(),
            served: AtomicUsize::new(0),
        }
    }

    pub fn served(&self) -> usize {
        self.served.load(Ordering::Relaxed)
    }
}

impl Oracle for MatrixOracle {
    fn query(&self, instance_id: usize, features: &FeatureSet) -> Result<Vec<f64>> {
        let row = self.rows.get(&instance_id).ok_or_else(|| GenexError::Oracle {
            instance: instance_id,
            message: "unknown instance".into(),
        })?;
        if let Some(j) = features.max_index().filter(|&j| j >= row.len()) {
            return Err(GenexError::Oracle {
                instance: instance_id,
                message: format!("feature {j} out of range"),
            });
        }
        self.served.fetch_add(features.len(), Ordering::Relaxed);
        Ok(features.iter().map(|j| row[j]).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedBucket {
    pub models: BucketModels,
    pub plan: BucketPlan,
}

#[derive(Clone, Debug)]
pub struct InferenceEngine {
    pub router: Router,
    pub buckets: BTreeMap<BucketId, TrainedBucket>,
    pub tau: f64,
    /// Generator draws averaged per prediction.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOutcome {
    pub instance_id: usize,
    pub bucket: BucketId,
    pub label: Option<usize>,
    pub predicted: usize,
    pub confidence: f64,
    pub used_generator: bool,
    pub oracle_queries: usize,
    pub u_size: usize,
    pub v_size: usize,
}

impl InferenceOutcome {
    /// Share of the bucket's acquisition set that was generated instead of
    /// queried for this instance.
    pub fn saved_fraction(&self) -> f64 {
        if self.used_generator && self.u_size > 0 {
            self.v_size as f64 / self.u_size as f64
        } else {
            0.0
        }
    }
}

fn mean_probs(models: &BucketModels, inputs: &[MaskedInput]) -> Vec<f64> {
    let mut acc = vec![0.0; models.classifier.classes];
    for m in inputs {
        let p = models.classifier.probs_encoded(&m.encoded());
        acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
    }
    acc.iter_mut().for_each(|a| *a /= inputs.len() as f64);
    acc
}

fn confidence(p: &[f64]) -> f64 {
    p.iter().copied().fold(0.0, f64::max)
}

impl InferenceEngine {
    pub fn trained(&self) -> BTreeSet<BucketId> {
        self.buckets.keys().copied().collect()
    }

    fn bucket(&self, x: &SparseFeatures) -> Result<(BucketId, &TrainedBucket)> {
        if self.buckets.is_empty() {
            return Err(GenexError::invalid("inference engine has no trained buckets"));
        }
        let b = self.router.route(x)?;
        let tb = self
            .buckets
            .get(&b)
            .ok_or_else(|| GenexError::invalid(format!("router chose untrained bucket {b}")))?;
        Ok((b, tb))
    }

    /// Prediction on `x[O ∪ U \ V] ∪ x̃[V]`, with the oracle queries it
    /// needed. Returns `None` for the distribution when nothing is generated.
    fn generated_path(
        &self,
        id: usize,
        x: &SparseFeatures,
        tb: &TrainedBucket,
        oracle: &dyn Oracle,
        rng: &mut impl Rng,
    ) -> Result<(MaskedInput, usize, Option<Vec<f64>>)> {
        let mut input = x.to_masked();
        let queried = tb.plan.u.difference(&tb.plan.v).difference(&x.indices);
        let values = oracle.query(id, &queried)?;
        queried.iter().zip(&values).for_each(|(j, v)| input.set(j, *v));
        let target = tb.plan.v.difference(&x.indices);
        if target.is_empty() {
            return Ok((input, queried.len(), None));
        }
        if let Generator::Copy(_) = tb.models.generator {
            return Err(GenexError::invalid("copy generators cannot run at inference"));
        }
        let samples = tb
            .models
            .generator
            .sample_features(&input, None, &target, self.samples.max(1), rng)?;
        let inputs: Vec<MaskedInput> = samples
            .iter()
            .map(|s| {
                let mut m = input.clone();
                target.iter().zip(s).for_each(|(j, v)| m.set(j, *v));
                m
            })
            .collect();
        let probs = mean_probs(&tb.models, &inputs);
        Ok((input, queried.len(), Some(probs)))
    }

    pub fn infer(
        &self,
        id: usize,
        x: &SparseFeatures,
        label: Option<usize>,
        oracle: &dyn Oracle,
        rng: &mut impl Rng,
    ) -> Result<InferenceOutcome> {
        let (bucket, tb) = self.bucket(x)?;
        let (mut input, mut queries, generated) = self.generated_path(id, x, tb, oracle, rng)?;
        let (probs, used_generator) = match generated {
            Some(p) if confidence(&p) >= self.tau => (p, true),
            Some(_) => {
                let rest = tb.plan.v.difference(&x.indices);
                let values = oracle.query(id, &rest)?;
                rest.iter().zip(&values).for_each(|(j, v)| input.set(j, *v));
                queries += rest.len();
                (tb.models.classifier.probs_encoded(&input.encoded()), false)
            }
            None => (tb.models.classifier.probs_encoded(&input.encoded()), false),
        };
        Ok(InferenceOutcome {
            instance_id: id,
            bucket,
            label,
            predicted: argmax(&probs),
            confidence: confidence(&probs),
            used_generator,
            oracle_queries: queries,
            u_size: tb.plan.u.len(),
            v_size: tb.plan.v.len(),
        })
    }

    /// Confidence on the generated path for each instance.
    pub fn generated_confidences(&self, d: &Dataset, oracle: &dyn Oracle, seed: u64) -> Result<Vec<f64>> {
        d.instances
            .iter()
            .map(|inst| {
                let x = inst.observed_view();
                let (_, tb) = self.bucket(&x)?;
                let mut rng = rng_from(seed, &[tag::CALIBRATE, inst.id as u64]);
                let (input, _, p) = self.generated_path(inst.id, &x, tb, oracle, &mut rng)?;
                let p = p.unwrap_or_else(|| tb.models.classifier.probs_encoded(&input.encoded()));
                Ok(confidence(&p))
            })
            .collect()
    }

    /// Runs every instance of `d` with per-instance random streams.
    pub fn infer_all(&self, d: &Dataset, oracle: &dyn Oracle, seed: u64) -> Result<Vec<InferenceOutcome>> {
        use rayon::prelude::*;
        d.instances
            .par_iter()
            .map(|inst| {
                let mut rng = rng_from(seed, &[tag::INFER, inst.id as u64]);
                self.infer(inst.id, &inst.observed_view(), Some(inst.label), oracle, &mut rng)
            })
            .collect()
    }

    pub fn plan(&self, q_max: usize, lambda: usize) -> AcquisitionPlan {
        let mut plan = AcquisitionPlan::new(q_max, lambda);
        for (b, tb) in &self.buckets {
            plan.buckets.insert(*b, tb.plan.clone());
        }
        plan
    }
}

/// Threshold that lets the `quantile` most confident fraction of the given
/// confidences clear the gate `confidence >= τ`.
pub fn threshold_for(confidences: &[f64], quantile: f64) -> Result<f64> {
    if confidences.is_empty() {
        return Err(GenexError::invalid("cannot calibrate on an empty validation set"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(GenexError::invalid(format!("quantile {quantile} outside [0, 1]")));
    }
    let mut c = confidences.to_vec();
    c.sort_by(|a, b| b.total_cmp(a));
    let m = (quantile * c.len() as f64).round() as usize;
    Ok(if m == 0 {
        c[0] + 1e-9
    } else if m >= c.len() {
        c[c.len() - 1] - 1e-9
    } else if c[m - 1] > c[m] {
        0.5 * (c[m - 1] + c[m])
    } else {
        c[m - 1]
    })
}

pub fn calibrate_tau(
    engine: &InferenceEngine,
    validation: &Dataset,
    quantile: f64,
    oracle: &dyn Oracle,
    seed: u64,
) -> Result<f64> {
    if validation.is_empty() {
        return Err(GenexError::invalid("cannot calibrate on an empty validation set"));
    }
    threshold_for(&engine.generated_confidences(validation, oracle, seed)?, quantile)
}

pub const OUTCOME_COLUMNS: [&str; 9] = [
    "instance_id",
    "bucket",
    "y",
    "y_hat",
    "confidence",
    "used_generator",
    "oracle_queries_made",
    "u_size",
    "v_size",
];

pub fn outcome_fields(o: &InferenceOutcome) -> Vec<String> {
    vec![
        o.instance_id.to_string(),
        o.bucket.0.to_string(),
        o.label.map_or_else(String::new, |y| y.to_string()),
        o.predicted.to_string(),
        format!("{:?}", o.confidence),
        u8::from(o.used_generator).to_string(),
        o.oracle_queries.to_string(),
        o.u_size.to_string(),
        o.v_size.to_string(),
    ]
}

pub fn parse_outcome(fields: &[&str]) -> Result<InferenceOutcome> {
    let bad = |m: String| GenexError::format("outcomes", m);
    if fields.len() != OUTCOME_COLUMNS.len() {
        return Err(bad(format!("expected {} fields, found {}", OUTCOME_COLUMNS.len(), fields.len())));
    }
    let int = |i: usize| -> Result<usize> {
        fields[i]
            .parse()
            .map_err(|_| bad(format!("{}: bad value {:?}", OUTCOME_COLUMNS[i], fields[i])))
    };
    Ok(InferenceOutcome {
        instance_id: int(0)?,
        bucket: BucketId(int(1)? as u64),
        label: if fields[2].is_empty() { None } else { Some(int(2)?) },
        predicted: int(3)?,
        confidence: fields[4].parse().map_err(|_| bad(format!("bad confidence {:?}", fields[4])))?,
        used_generator: match fields[5] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("bad flag {other:?}"))),
        },
        oracle_queries: int(6)?,
        u_size: int(7)?,
        v_size: int(8)?,
    })
}

/// Aggregates computed from a list of outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeSummary {
    pub accuracy: f64,
    pub mean_queries: f64,
    pub saved_fraction: f64,
    pub generator_rate: f64,
}

pub fn summarize(outcomes: &[InferenceOutcome]) -> OutcomeSummary {
    let n = outcomes.len().max(1) as f64;
    let correct = outcomes.iter().filter(|o| o.label == Some(o.predicted)).count();
    OutcomeSummary {
        accuracy: correct as f64 / n,
        mean_queries: outcomes.iter().map(|o| o.oracle_queries as f64).sum::<f64>() / n,
        saved_fraction: outcomes.iter().map(InferenceOutcome::saved_fraction).sum::<f64>() / n,
        generator_rate: outcomes.iter().filter(|o| o.used_generator).count() as f64 / n,
    }
}

const ENGINE_HEADER: &str = "genex-engine v1";

impl InferenceEngine {
    /// Writes the engine as a directory of text files.
    pub fn save(&self, dir: &Path, q_max: usize, lambda: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GenexError::io(dir, e))?;
        let kind = match &self.router {
            Router::Hyperplanes { bank, .. } => {
                bank.save(&dir.join("hyperplanes.txt"))?;
                "hyperplanes"
            }
            Router::KMeans { model, .. } => {
                let text: String = model
                    .centroids
                    .iter()
                    .map(|c| c.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ") + "\n")
                    .collect();
                let path = dir.join("centroids.txt");
                std::fs::write(&path, text).map_err(|e| GenexError::io(&path, e))?;
                "kmeans"
            }
        };
        let head = format!("{ENGINE_HEADER}\nrouter {kind}\ntau {:?}\nsamples {}\n", self.tau, self.samples);
        let path = dir.join("engine.txt");
        std::fs::write(&path, head).map_err(|e| GenexError::io(&path, e))?;
        self.plan(q_max, lambda).save(&dir.join("plan.txt"))?;
        for (b, tb) in &self.buckets {
            tb.models.save(&dir.join(format!("bucket-{}.ckpt", b.0)))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, AcquisitionPlan)> {
        let bad = |m: String| GenexError::format("engine", m);
        let path = dir.join("engine.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| GenexError::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(ENGINE_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(format!("missing {name}")))
        };
        let kind = field("router")?;
        let tau: f64 = field("tau")?.parse().map_err(|_| bad("bad tau".into()))?;
        let samples: usize = field("samples")?.parse().map_err(|_| bad("bad samples".into()))?;
        let plan = AcquisitionPlan::load(&dir.join("plan.txt"))?;
        let mut buckets = BTreeMap::new();
        for (b, p) in &plan.buckets {
            let models = BucketModels::load(&dir.join(format!("bucket-{}.ckpt", b.0)))?;
            buckets.insert(*b, TrainedBucket { models, plan: p.clone() });
        }
        let trained: BTreeSet<BucketId> = buckets.keys().copied().collect();
        let router = match kind.as_str() {
            "hyperplanes" => Router::Hyperplanes {
                bank: HyperplaneBank::load(&dir.join("hyperplanes.txt"))?,
                trained,
            },
            "kmeans" => {
                let path = dir.join("centroids.txt");
                let text = std::fs::read_to_string(&path).map_err(|e| GenexError::io(&path, e))?;
                let centroids = text
                    .lines()
                    .map(|l| {
                        l.split_whitespace()
                            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad centroid value {t:?}"))))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?;
                Router::KMeans {
                    model: KMeans { centroids },
                    trained,
                }
            }
            other => return Err(bad(format!("unknown router {other:?}"))),
        };
        Ok((
            InferenceEngine {
                router,
                buckets,
                tau,
                samples,
            },
            plan,
        ))
    }
}

/// Writes outcomes as CSV with an optional set of leading columns.
pub fn write_outcomes(
    out: &mut impl Write,
    lead_names: &[&str],
    rows: &[(Vec<String>, InferenceOutcome)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = lead_names.iter().copied().chain(OUTCOME_COLUMNS).collect();
    w.write_record(&header)?;
    for (lead, o) in rows {
        w.write_record(lead.iter().cloned().chain(outcome_fields(o)))?;
    }
    w.flush().map_err(|e| GenexError::io("<outcomes>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_lets_the_requested_share_through() {
        let c: Vec<f64> = (0..50).map(|i| 0.3 + i as f64 * 0.01).collect();
        let tau = threshold_for(&c, 0.1).unwrap();
        assert_eq!(c.iter().filter(|&&x| x >= tau).count(), 5);
        let all = threshold_for(&c, 1.0).unwrap();
        assert_eq!(c.iter().filter(|&&x| x >= all).count(), 50);
        let none = threshold_for(&c, 0.0).unwrap();
        assert_eq!(c.iter().filter(|&&x| x >= none).count(), 0);
        assert!(threshold_for(&[], 0.1).is_err());
        assert!(threshold_for(&c, 1.5).is_err());
    }

    #[test]
    fn outcome_fields_round_trip() {
        let o = InferenceOutcome {
            instance_id: 12,
            bucket: BucketId(3),
            label: Some(2),
            predicted: 1,
            confidence: 0.123456789012345,
            used_generator: true,
            oracle_queries: 4,
            u_size: 5,
            v_size: 1,
        };
        let fields = outcome_fields(&o);
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        assert_eq!(parse_outcome(&refs).unwrap(), o);
        assert!((o.saved_fraction() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn matrix_oracle_counts_values() {
        let d = crate::dataset::synthetic::isotropic(3, 4, 1).unwrap();
        let o = MatrixOracle::from_dataset(&d);
        let v = o.query(2, &FeatureSet::from_iter([0, 2])).unwrap();
        assert_eq!(v, vec![d.instances[2].features[0], d.instances[2].features[2]]);
        assert_eq!(o.served(), 2);
        assert!(o.query(99, &FeatureSet::empty()).is_err());
        assert!(o.query(0, &FeatureSet::from_iter([5])).is_err());
    }
}
