//! Experiment orchestration: configuration, the training and inference
//! pipeline, budget sweeps, repeated-seed reports and the small-instance
//! analysis run.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::analysis::{
    brute_force_opt, check_surrogate_bound, check_greedy_bound, estimate_partial_monotonicity, proof_pair_ranges,
    estimate_weak_submodularity, measure_constants, AssumptionConstants, BoundCheck, Cached, FullRetrainGf,
    Monotonicity, SurrogateBoundCheck, SetFunction, Submodularity, ValueOracle, ZERO_TOL,
};
use crate::dataset::synthetic::{informative_classification, InformativeSpec};
use crate::dataset::{apply_observation_policy, load_dataset, split_dataset, Dataset, LabelSource, Standardizer};
use crate::error::{GenexError, Result};
use crate::features::{subsets_up_to, FeatureSet};
use crate::greedy::{default_lambda, greedy_for_u, greedy_for_v, AcquisitionPlan, BucketPlan, GreedyVMode};
use crate::inference::{
    calibrate_tau, summarize, write_outcomes, InferenceEngine, InferenceOutcome, MatrixOracle, TrainedBucket,
};
use crate::models::{pretrain, train_f, ArchSpec, ReconTarget, TrainConfig};
use crate::nn::OptimizerKind;
use crate::partition::{bucket_skew_of, conicity, kmeans_partition, make_bank, partition, BucketId, Router};
use crate::seed::{derive_seed, rng_from, tag};
use crate::setfn::{mean_and_se, GfConfig, GfContext, GlConditioning, GlContext};
use crate::uncertainty::{DeltaMode, UncertaintyEstimator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    /// Every acquired feature is queried.
    VEmpty,
    /// Every acquired feature is generated when the gate allows.
    VEqualsU,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acquisition {
    Greedy,
    /// Uniformly random `U` with the same training schedule.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clustering {
    Hyperplanes,
    KMeans,
}

macro_rules! named_enum {
    ($t:ty, $what:literal, $($v:path => $s:literal),+) => {
        impl $t {
            pub fn parse(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(GenexError::invalid(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }

            pub fn name(&self) -> &'static str {
                match self {
                    $($v => $s,)+
                }
            }
        }
    };
}

named_enum!(Ablation, "ablation", Ablation::Full => "full", Ablation::VEmpty => "v-empty", Ablation::VEqualsU => "v-equals-u");
named_enum!(Acquisition, "acquisition", Acquisition::Greedy => "greedy", Acquisition::Random => "random");
named_enum!(Clustering, "clustering", Clustering::Hyperplanes => "rh", Clustering::KMeans => "kmeans");

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Label column name, or `file:<path>` for a separate labels CSV.
    pub labels: String,
    pub mask: Option<PathBuf>,
    pub seed: u64,
    /// `M`; the partition has at most `2^M` buckets.
    pub buckets_log2: usize,
    pub q_max: usize,
    /// `None` means `ceil(q_max / 2)`.
    pub lambda: Option<usize>,
    pub tau_quantile: f64,
    pub obs_fraction: f64,
    pub delta_mode: DeltaMode,
    pub mc_samples: usize,
    pub pretrain_epochs: usize,
    /// Random extra-feature reveals during pretraining.
    pub pretrain_reveal: bool,
    pub commit_epochs: usize,
    pub final_epochs: usize,
    pub ablation: Ablation,
    pub acquisition: Acquisition,
    pub clustering: Clustering,
    pub kmeans_iters: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub repetitions: usize,
    pub gl_conditioning: GlConditioning,
    pub greedy_v: GreedyVMode,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub hidden: usize,
    pub latent: usize,
    pub infer_samples: usize,
    /// Budgets for `sweep`; empty means 10..50% of n.
    pub budgets: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            labels: "label".into(),
            mask: None,
            seed: 0,
            buckets_log2: 3,
            q_max: 5,
            lambda: None,
            tau_quantile: 0.10,
            obs_fraction: 0.10,
            delta_mode: DeltaMode::MonteCarlo,
            mc_samples: 8,
            pretrain_epochs: 40,
            pretrain_reveal: true,
            commit_epochs: 2,
            final_epochs: 10,
            ablation: Ablation::Full,
            acquisition: Acquisition::Greedy,
            clustering: Clustering::Hyperplanes,
            kmeans_iters: 50,
            jobs: 0,
            repetitions: 20,
            gl_conditioning: GlConditioning::Observed,
            greedy_v: GreedyVMode::Loop,
            optimizer: OptimizerKind::Adam { lr: 3e-3 },
            batch_size: 32,
            hidden: 32,
            latent: 16,
            infer_samples: 1,
            budgets: Vec::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| GenexError::format("config", format!("bad value {v:?} for {key}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (v != "none" && !v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    pub fn lambda(&self) -> usize {
        self.lambda.unwrap_or_else(|| default_lambda(self.q_max))
    }

    pub fn label_source(&self) -> LabelSource {
        match self.labels.strip_prefix("file:") {
            Some(p) => LabelSource::File(PathBuf::from(p)),
            None => LabelSource::Column(self.labels.clone()),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            mc_samples: self.mc_samples,
            recon: ReconTarget::Full,
            reveal: self.pretrain_reveal,
        }
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            hidden: self.hidden,
            latent: self.latent,
            beta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GenexError::invalid(m.to_string()));
        if !(1..=20).contains(&self.buckets_log2) {
            return bad("buckets_log2 must be in 1..=20");
        }
        if !(0.0..=1.0).contains(&self.tau_quantile) {
            return bad("tau_quantile must be in [0, 1]");
        }
        if !(self.obs_fraction > 0.0 && self.obs_fraction <= 1.0) {
            return bad("obs_fraction must be in (0, 1]");
        }
        if let DeltaMode::Constant(c) = self.delta_mode {
            if !(0.0..=1.0).contains(&c) {
                return bad("constant uncertainty must be in [0, 1]");
            }
        }
        if self.mc_samples == 0 || self.batch_size == 0 || self.hidden == 0 || self.latent == 0 {
            return bad("mc_samples, batch_size, hidden and latent must be positive");
        }
        if self.repetitions == 0 || self.infer_samples == 0 || self.kmeans_iters == 0 {
            return bad("repetitions, infer_samples and kmeans_iters must be positive");
        }
        if !(self.optimizer.lr() > 0.0 && self.optimizer.lr().is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.budgets.windows(2).any(|w| w[0] > w[1]) {
            return bad("budgets must be ascending");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = opt_path(v),
            "labels" => self.labels = v.to_string(),
            "mask" => self.mask = opt_path(v),
            "seed" => self.seed = parse_num(key, v)?,
            "buckets_log2" => self.buckets_log2 = parse_num(key, v)?,
            "q_max" => self.q_max = parse_num(key, v)?,
            "lambda" => self.lambda = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "tau_quantile" => self.tau_quantile = parse_num(key, v)?,
            "obs_fraction" => self.obs_fraction = parse_num(key, v)?,
            "delta_mode" => self.delta_mode = DeltaMode::parse(v)?,
            "mc_samples" => self.mc_samples = parse_num(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_num(key, v)?,
            "pretrain_reveal" => self.pretrain_reveal = parse_num(key, v)?,
            "commit_epochs" => self.commit_epochs = parse_num(key, v)?,
            "final_epochs" => self.final_epochs = parse_num(key, v)?,
            "ablation" => self.ablation = Ablation::parse(v)?,
            "acquisition" => self.acquisition = Acquisition::parse(v)?,
            "clustering" => self.clustering = Clustering::parse(v)?,
            "kmeans_iters" => self.kmeans_iters = parse_num(key, v)?,
            "jobs" => self.jobs = parse_num(key, v)?,
            "repetitions" => self.repetitions = parse_num(key, v)?,
            "gl_conditioning" => self.gl_conditioning = GlConditioning::parse(v)?,
            "greedy_v" => self.greedy_v = GreedyVMode::parse(v)?,
            "optimizer" => self.optimizer = OptimizerKind::parse(v, self.optimizer.lr())?,
            "learning_rate" => {
                self.optimizer = OptimizerKind::parse(self.optimizer.name(), parse_num(key, v)?)?;
            }
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "latent" => self.latent = parse_num(key, v)?,
            "infer_samples" => self.infer_samples = parse_num(key, v)?,
            "budgets" => {
                self.budgets = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?;
            }
            other => return Err(GenexError::format("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a flat `key = value` text; `#` starts a
    /// comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GenexError::format("config", format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenexError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| GenexError::io(path, e))
    }

    /// Budgets a sweep runs over.
    pub fn sweep_budgets(&self, n: usize) -> Vec<usize> {
        if !self.budgets.is_empty() {
            return self.budgets.clone();
        }
        let mut b: Vec<usize> = [0.1, 0.2, 0.3, 0.4, 0.5]
            .iter()
            .map(|f| ((f * n as f64).round() as usize).max(1))
            .collect();
        b.dedup();
        b
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        writeln!(f, "dataset = {}", path(&self.dataset))?;
        writeln!(f, "labels = {}", self.labels)?;
        writeln!(f, "mask = {}", path(&self.mask))?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "buckets_log2 = {}", self.buckets_log2)?;
        writeln!(f, "q_max = {}", self.q_max)?;
        match self.lambda {
            Some(l) => writeln!(f, "lambda = {l}")?,
            None => writeln!(f, "lambda = auto")?,
        }
        writeln!(f, "tau_quantile = {}", self.tau_quantile)?;
        writeln!(f, "obs_fraction = {}", self.obs_fraction)?;
        writeln!(f, "delta_mode = {}", self.delta_mode.name())?;
        writeln!(f, "mc_samples = {}", self.mc_samples)?;
        writeln!(f, "pretrain_epochs = {}", self.pretrain_epochs)?;
        writeln!(f, "pretrain_reveal = {}", self.pretrain_reveal)?;
        writeln!(f, "commit_epochs = {}", self.commit_epochs)?;
        writeln!(f, "final_epochs = {}", self.final_epochs)?;
        writeln!(f, "ablation = {}", self.ablation.name())?;
        writeln!(f, "acquisition = {}", self.acquisition.name())?;
        writeln!(f, "clustering = {}", self.clustering.name())?;
        writeln!(f, "kmeans_iters = {}", self.kmeans_iters)?;
        writeln!(f, "jobs = {}", self.jobs)?;
        writeln!(f, "repetitions = {}", self.repetitions)?;
        writeln!(f, "gl_conditioning = {}", self.gl_conditioning.name())?;
        writeln!(f, "greedy_v = {}", self.greedy_v.name())?;
        writeln!(f, "optimizer = {}", self.optimizer.name())?;
        writeln!(f, "learning_rate = {}", self.optimizer.lr())?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "hidden = {}", self.hidden)?;
        writeln!(f, "latent = {}", self.latent)?;
        writeln!(f, "infer_samples = {}", self.infer_samples)?;
        let budgets: Vec<String> = self.budgets.iter().map(ToString::to_string).collect();
        writeln!(f, "budgets = {}", budgets.join(","))
    }
}

/// Loads the configured dataset file.
pub fn load_configured(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| GenexError::invalid("no dataset configured"))?;
    load_dataset(path, &cfg.label_source(), cfg.mask.as_deref(), None)
}

/// Runs `f` on a pool with the configured worker count.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| GenexError::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Prepared splits for one repetition.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Observation policy (unless a mask file is configured), split, and
/// train-fitted standardization.
pub fn prepare(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Splits> {
    let observed = if cfg.mask.is_some() {
        data.clone()
    } else {
        apply_observation_policy(data, cfg.obs_fraction, seed)?
    };
    let (train, validation, test) = split_dataset(&observed, seed)?;
    let st = Standardizer::fit(&train)?;
    Ok(Splits {
        train: st.apply(&train)?,
        validation: st.apply(&validation)?,
        test: st.apply(&test)?,
    })
}

/// Bucket assignment of the training split plus a router for new points.
pub fn partition_train(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<(Router, BTreeMap<BucketId, Vec<usize>>)> {
    match cfg.clustering {
        Clustering::Hyperplanes => {
            let bank = make_bank(train.n, cfg.buckets_log2, seed)?;
            let buckets = partition(&bank, train)?;
            let trained = buckets.keys().copied().collect();
            Ok((Router::Hyperplanes { bank, trained }, buckets))
        }
        Clustering::KMeans => {
            let k = (1usize << cfg.buckets_log2).min(train.len());
            let (clusters, model) = kmeans_partition(train, k, derive_seed(seed, &[tag::KMEANS]), cfg.kmeans_iters)?;
            let buckets: BTreeMap<BucketId, Vec<usize>> =
                clusters.into_iter().map(|(c, v)| (BucketId(c as u64), v)).collect();
            let trained = buckets.keys().copied().collect();
            Ok((Router::KMeans { model, trained }, buckets))
        }
    }
}

/// Pretraining, acquisition-set selection and generator-set selection for
/// one bucket.
pub fn train_bucket(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<TrainedBucket> {
    let tcfg = cfg.train_config();
    let models = pretrain(&cfg.arch(), data, cfg.pretrain_epochs, &tcfg, seed)?;
    let deltas = UncertaintyEstimator::new(models.clone(), cfg.mc_samples, cfg.delta_mode).table(data, seed)?;
    let pool = FeatureSet::full(data.n).difference(&data.common_observed());
    let gf_cfg = GfConfig {
        mc_samples: cfg.mc_samples,
        commit_epochs: cfg.commit_epochs,
        train: tcfg,
    };
    let mut gf = GfContext::new(data.clone(), models, deltas.clone(), gf_cfg, seed)?;
    let u = match cfg.acquisition {
        Acquisition::Greedy => greedy_for_u(&mut gf, cfg.q_max, &pool)?.selected,
        Acquisition::Random => {
            let mut order: Vec<usize> = pool.iter().collect();
            order.shuffle(&mut rng_from(seed, &[tag::RANDOM_U]));
            for &e in order.iter().take(cfg.q_max) {
                gf.commit(e)?;
            }
            gf.selected().clone()
        }
    };
    let mut models = gf.into_models();
    let per_instance: Vec<f64> = (0..data.len()).map(|i| deltas.delta(i, &u)).collect();
    train_f(
        &mut models,
        data,
        &u,
        &per_instance,
        cfg.final_epochs,
        &tcfg,
        derive_seed(seed, &[tag::SHUFFLE, u64::MAX]),
    )?;
    let v = match cfg.ablation {
        Ablation::VEmpty => FeatureSet::empty(),
        Ablation::VEqualsU => u.clone(),
        Ablation::Full => {
            let mut gl = GlContext::new(
                data.clone(),
                models.clone(),
                u.clone(),
                deltas,
                cfg.mc_samples,
                cfg.gl_conditioning,
                seed,
            )?;
            greedy_for_v(&mut gl, cfg.lambda(), &u, cfg.greedy_v)?.selected
        }
    };
    Ok(TrainedBucket {
        models,
        plan: BucketPlan { u, v },
    })
}

/// Everything produced by one repetition at one budget.
#[derive(Clone, Debug)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub engine: InferenceEngine,
    pub plan: AcquisitionPlan,
    pub outcomes: Vec<InferenceOutcome>,
    pub bucket_skew: f64,
    pub conicity: f64,
    pub seconds: f64,
}

pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    derive_seed(base, &[tag::REPETITION, rep as u64])
}

/// One full train, calibrate and test pass.
pub fn run_repetition(cfg: &ExperimentConfig, data: &Dataset, rep: usize) -> Result<RepResult> {
    let start = Instant::now();
    let seed = repetition_seed(cfg.seed, rep);
    let splits = prepare(cfg, data, seed)?;
    let (router, buckets) = partition_train(cfg, &splits.train, seed)?;
    let trained: Vec<(BucketId, TrainedBucket)> = buckets
        .par_iter()
        .map(|(b, positions)| {
            let local = splits.train.subset(positions);
            Ok((*b, train_bucket(cfg, &local, derive_seed(seed, &[tag::BUCKET, b.0]))?))
        })
        .collect::<Result<_>>()?;
    let cones: Vec<f64> = buckets
        .values()
        .map(|positions| {
            let vs: Vec<Vec<f64>> = positions
                .iter()
                .map(|&p| splits.train.instances[p].padded_observed())
                .collect();
            conicity(&vs)
        })
        .collect::<Result<_>>()?;
    let mut engine = InferenceEngine {
        router,
        buckets: trained.into_iter().collect(),
        tau: 0.0,
        samples: cfg.infer_samples,
    };
    let val_oracle = MatrixOracle::from_dataset(&splits.validation);
    engine.tau = calibrate_tau(&engine, &splits.validation, cfg.tau_quantile, &val_oracle, seed)?;
    let test_oracle = MatrixOracle::from_dataset(&splits.test);
    let outcomes = engine.infer_all(&splits.test, &test_oracle, seed)?;
    let lambda = if cfg.ablation == Ablation::VEqualsU { cfg.q_max } else { cfg.lambda() };
    let plan = engine.plan(cfg.q_max, lambda);
    plan.validate()?;
    Ok(RepResult {
        rep,
        seed,
        engine,
        plan,
        outcomes,
        bucket_skew: bucket_skew_of(&buckets)?,
        conicity: cones.iter().sum::<f64>() / cones.len() as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let (mean, se) = mean_and_se(xs);
        Stat { mean, se }
    }
}

/// Per-budget aggregate over repetitions.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub q_max: usize,
    pub lambda: usize,
    pub repetitions: usize,
    pub accuracy: Stat,
    /// `E[|U \ V|]` actually queried per test instance.
    pub queries: Stat,
    /// `E[|V| / |U|]` over test instances.
    pub saved_fraction: Stat,
    pub generator_rate: Stat,
    pub bucket_skew: Stat,
    pub conicity: Stat,
}

impl ReportRow {
    pub fn from_reps(q_max: usize, lambda: usize, reps: &[RepResult]) -> Self {
        let summaries: Vec<_> = reps.iter().map(|r| summarize(&r.outcomes)).collect();
        let col = |f: &dyn Fn(usize) -> f64| Stat::of(&(0..reps.len()).map(f).collect::<Vec<_>>());
        ReportRow {
            q_max,
            lambda,
            repetitions: reps.len(),
            accuracy: col(&|i| summaries[i].accuracy),
            queries: col(&|i| summaries[i].mean_queries),
            saved_fraction: col(&|i| summaries[i].saved_fraction),
            generator_rate: col(&|i| summaries[i].generator_rate),
            bucket_skew: col(&|i| reps[i].bucket_skew),
            conicity: col(&|i| reps[i].conicity),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 15] = [
    "q_max",
    "lambda",
    "repetitions",
    "accuracy_mean",
    "accuracy_se",
    "queries_mean",
    "queries_se",
    "saved_fraction_mean",
    "saved_fraction_se",
    "generator_rate_mean",
    "generator_rate_se",
    "bucket_skew_mean",
    "bucket_skew_se",
    "conicity_mean",
    "conicity_se",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_COLUMNS)?;
        for r in &self.rows {
            let mut rec = vec![r.q_max.to_string(), r.lambda.to_string(), r.repetitions.to_string()];
            for s in [r.accuracy, r.queries, r.saved_fraction, r.generator_rate, r.bucket_skew, r.conicity] {
                rec.push(s.mean.to_string());
                rec.push(s.se.to_string());
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| GenexError::format("report", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| GenexError::format("report", e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        if r.headers()?.iter().ne(REPORT_COLUMNS) {
            return Err(GenexError::format("report", "unexpected header"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != REPORT_COLUMNS.len() {
                return Err(GenexError::format("report", "wrong column count"));
            }
            let f = |i: usize| parse_num::<f64>(REPORT_COLUMNS[i], &rec[i]);
            let u = |i: usize| parse_num::<usize>(REPORT_COLUMNS[i], &rec[i]);
            let s = |i: usize| -> Result<Stat> { Ok(Stat { mean: f(i)?, se: f(i + 1)? }) };
            rows.push(ReportRow {
                q_max: u(0)?,
                lambda: u(1)?,
                repetitions: u(2)?,
                accuracy: s(3)?,
                queries: s(5)?,
                saved_fraction: s(7)?,
                generator_rate: s(9)?,
                bucket_skew: s(11)?,
                conicity: s(13)?,
            });
        }
        Ok(RunReport { rows })
    }

    /// Plot series: queries on x, accuracy with its standard error on y.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("queries_mean,accuracy_mean,accuracy_se\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.queries.mean, r.accuracy.mean, r.accuracy.se);
        }
        out
    }
}

/// All repetitions of one budget.
#[derive(Clone, Debug)]
pub struct BudgetRun {
    pub q_max: usize,
    pub reps: Vec<RepResult>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub report: RunReport,
    pub runs: Vec<BudgetRun>,
}

fn run_budget(cfg: &ExperimentConfig, data: &Dataset) -> Result<(ReportRow, BudgetRun)> {
    let reps: Vec<RepResult> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, data, rep))
        .collect::<Result<_>>()?;
    let lambda = reps.first().map_or(cfg.lambda(), |r| r.plan.lambda);
    Ok((
        ReportRow::from_reps(cfg.q_max, lambda, &reps),
        BudgetRun { q_max: cfg.q_max, reps },
    ))
}

/// Runs every repetition at the configured budget.
pub fn run_pipeline(cfg: &ExperimentConfig, data: &Dataset) -> Result<SweepResult> {
    sweep_budgets(cfg, data, &[cfg.q_max])
}

/// One pipeline run per budget. `lambda` follows each budget unless set
/// explicitly.
pub fn sweep_budgets(cfg: &ExperimentConfig, data: &Dataset, budgets: &[usize]) -> Result<SweepResult> {
    cfg.validate()?;
    if budgets.is_empty() {
        return Err(GenexError::invalid("a sweep needs at least one budget"));
    }
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(GenexError::invalid("budgets must be ascending"));
    }
    with_pool(cfg.jobs, || {
        let mut report = RunReport::default();
        let mut runs = Vec::new();
        for &q in budgets {
            let mut c = cfg.clone();
            c.q_max = q;
            let (row, run) = run_budget(&c, data)?;
            report.rows.push(row);
            runs.push(run);
        }
        Ok(SweepResult { report, runs })
    })?
}

pub const OUTCOME_LEAD: [&str; 2] = ["q_max", "rep"];

impl SweepResult {
    pub fn outcomes_csv(&self) -> Result<String> {
        let rows: Vec<(Vec<String>, InferenceOutcome)> = self
            .runs
            .iter()
            .flat_map(|b| {
                b.reps.iter().flat_map(move |r| {
                    r.outcomes
                        .iter()
                        .map(move |o| (vec![b.q_max.to_string(), r.rep.to_string()], o.clone()))
                })
            })
            .collect();
        let mut buf = Vec::new();
        write_outcomes(&mut buf, &OUTCOME_LEAD, &rows)?;
        String::from_utf8(buf).map_err(|e| GenexError::format("outcomes", e.to_string()))
    }

    pub fn plans_text(&self) -> String {
        let mut out = String::new();
        for b in &self.runs {
            for r in &b.reps {
                let _ = writeln!(out, "# q_max {} rep {}", b.q_max, r.rep);
                out.push_str(&r.plan.to_string());
            }
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("q_max,rep,seconds\n");
        for b in &self.runs {
            for r in &b.reps {
                let _ = writeln!(out, "{},{},{}", b.q_max, r.rep, r.seconds);
            }
        }
        out
    }

    /// Writes runreport.csv, outcomes.csv, plan.txt, series.csv and
    /// timing.csv.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GenexError::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| GenexError::io(&p, e))
        };
        put("runreport.csv", self.report.to_csv()?)?;
        put("outcomes.csv", self.outcomes_csv()?)?;
        put("plan.txt", self.plans_text())?;
        put("series.csv", self.report.series_csv())?;
        put("timing.csv", self.timing_csv())
    }
}

/// Splits a multi-section plan file back into `(q_max, rep, plan)`.
pub fn parse_plans(text: &str) -> Result<Vec<(usize, usize, AcquisitionPlan)>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize, String)> = None;
    let flush = |cur: Option<(usize, usize, String)>, out: &mut Vec<_>| -> Result<()> {
        if let Some((q, r, body)) = cur {
            out.push((q, r, AcquisitionPlan::from_text(&body)?));
        }
        Ok(())
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            flush(current.take(), &mut out)?;
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match parts.as_slice() {
                ["q_max", q, "rep", r] => current = Some((parse_num("q_max", q)?, parse_num("rep", r)?, String::new())),
                _ => return Err(GenexError::format("plan", format!("bad section line {line:?}"))),
            }
        } else if let Some((_, _, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(GenexError::format("plan", "content before first section"));
        }
    }
    flush(current, &mut out)?;
    Ok(out)
}

/// Recomputes the per-budget query and saved-cost means from an outcome
/// log, averaging per repetition first as the report does.
pub fn recompute_from_outcomes(text: &str) -> Result<BTreeMap<usize, (Stat, Stat)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut grouped: BTreeMap<usize, BTreeMap<usize, Vec<InferenceOutcome>>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        if fields.len() < 2 {
            return Err(GenexError::format("outcomes", "short row"));
        }
        let q: usize = parse_num("q_max", fields[0])?;
        let rep: usize = parse_num("rep", fields[1])?;
        let o = crate::inference::parse_outcome(&fields[2..])?;
        grouped.entry(q).or_default().entry(rep).or_default().push(o);
    }
    Ok(grouped
        .into_iter()
        .map(|(q, reps)| {
            let sums: Vec<_> = reps.values().map(|os| summarize(os)).collect();
            let queries: Vec<f64> = sums.iter().map(|s| s.mean_queries).collect();
            let saved: Vec<f64> = sums.iter().map(|s| s.saved_fraction).collect();
            (q, (Stat::of(&queries), Stat::of(&saved)))
        })
        .collect())
}

/// Size limits for the brute-force analysis run.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallInstanceSpec {
    pub n: usize,
    pub size: usize,
    pub num_classes: usize,
    pub num_informative: usize,
    pub q_max: usize,
    /// Epochs of surrogate training per subset for the full-retrain set
    /// function.
    pub retrain_epochs: usize,
    /// Random pairs and points for sampled estimates.
    pub budget: usize,
}

impl Default for SmallInstanceSpec {
    fn default() -> Self {
        SmallInstanceSpec {
            n: 6,
            size: 48,
            num_classes: 2,
            num_informative: 6,
            q_max: 2,
            retrain_epochs: 30,
            budget: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub n: usize,
    pub q_max: usize,
    pub delta_mode: DeltaMode,
    pub monotonicity: Monotonicity,
    pub submodularity: Submodularity,
    pub empty_value: f64,
    pub opt_set: FeatureSet,
    pub opt_value: f64,
    pub greedy_set: FeatureSet,
    pub greedy_value: f64,
    /// `None` when the bound is undefined, e.g. `q_max = 0`.
    pub greedy_bound: Option<BoundCheck>,
    /// The same bound with ratio ranges taken only over the pairs a
    /// `q_max`-step greedy run can meet.
    pub greedy_bound_proof_pairs: Option<BoundCheck>,
    pub degenerate: Vec<String>,
    pub surrogate_bound: SurrogateBoundCheck,
    pub constants: AssumptionConstants,
    /// Spread of the generated-substitution loss over every `V ⊆ U*`.
    pub gl_range: f64,
    pub gl_max_se: f64,
}

/// Brute-force verification on a small synthetic bucket.
pub fn run_analysis(cfg: &ExperimentConfig, spec: &SmallInstanceSpec) -> Result<AnalysisReport> {
    if spec.n > 8 {
        return Err(GenexError::BudgetExceeded {
            required: spec.n as u128,
            limit: 8,
        });
    }
    let seed = derive_seed(cfg.seed, &[tag::ANALYSIS]);
    let data = informative_classification(&InformativeSpec {
        n: spec.n,
        num_classes: spec.num_classes,
        num_informative: spec.num_informative.min(spec.n),
        size: spec.size,
        redundant_copy: false,
        seed,
    })?
    .dataset;
    let data = apply_observation_policy(&data, cfg.obs_fraction.max(0.5 / spec.n as f64 + 1e-9), seed)?;
    let tcfg = cfg.train_config();
    let models = pretrain(&cfg.arch(), &data, cfg.pretrain_epochs, &tcfg, seed)?;
    let deltas = UncertaintyEstimator::new(models.clone(), cfg.mc_samples, cfg.delta_mode).table(&data, seed)?;
    let gf_cfg = GfConfig {
        mc_samples: cfg.mc_samples,
        commit_epochs: cfg.commit_epochs,
        train: tcfg,
    };
    let full = FullRetrainGf::new(data.clone(), models.clone(), deltas.clone(), gf_cfg, spec.retrain_epochs, seed)?;
    let g = Cached::new(&full);
    let monotonicity = estimate_partial_monotonicity(&g, spec.budget, seed)?;
    let submodularity = estimate_weak_submodularity(&g, spec.budget, ZERO_TOL, seed)?;
    let empty_value = g.value(&FeatureSet::empty())?;
    let (opt_set, opt_value) = brute_force_opt(&g, spec.q_max)?;
    let greedy_set = greedy_for_u(&mut ValueOracle(&g), spec.q_max, &FeatureSet::full(spec.n))?.selected;
    let greedy_value = g.value(&greedy_set)?;

    let mut degenerate = Vec::new();
    let greedy_bound = match (spec.q_max, submodularity.gamma_min, submodularity.gamma_max) {
        (0, _, _) => {
            degenerate.push("q_max = 0: approximation bound undefined".to_string());
            None
        }
        (_, Some(lo), Some(hi)) => {
            let b = check_greedy_bound(
                greedy_value,
                opt_value,
                empty_value,
                monotonicity.m_min,
                monotonicity.m_max,
                lo,
                hi,
                spec.q_max,
            )?;
            if b.degenerate {
                degenerate.push("approximation bound inputs are degenerate".to_string());
            }
            Some(b)
        }
        _ => {
            degenerate.push("no pair with a non-zero joint marginal: gamma undefined".to_string());
            None
        }
    };

    let greedy_bound_proof_pairs = if spec.q_max == 0 {
        None
    } else {
        let (pm, pw) = proof_pair_ranges(&g, spec.q_max, ZERO_TOL)?;
        match (pw.gamma_min, pw.gamma_max) {
            (Some(lo), Some(hi)) => Some(check_greedy_bound(
                greedy_value,
                opt_value,
                empty_value,
                pm.m_min,
                pm.m_max,
                lo,
                hi,
                spec.q_max,
            )?),
            _ => None,
        }
    };

    let gf = GfContext::new(data.clone(), models.clone(), deltas.clone(), gf_cfg, seed)?;
    let surrogate_bound = check_surrogate_bound(&gf, spec.q_max, 10_000_000)?;
    let constants = measure_constants(&data, &models, &deltas, cfg.mc_samples, spec.budget, seed)?;

    let retrained = full.trained(&greedy_set)?;
    let gl = GlContext::new(data, retrained, greedy_set.clone(), deltas, cfg.mc_samples, cfg.gl_conditioning, seed)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut gl_max_se: f64 = 0.0;
    let members: Vec<usize> = greedy_set.iter().collect();
    for sub in subsets_up_to(members.len(), members.len()) {
        let v: FeatureSet = sub.iter().map(|k| members[k]).collect();
        let (val, se) = gl.value_with_se(&v)?;
        lo = lo.min(val);
        hi = hi.max(val);
        gl_max_se = gl_max_se.max(se);
    }

    Ok(AnalysisReport {
        n: spec.n,
        q_max: spec.q_max,
        delta_mode: cfg.delta_mode,
        monotonicity,
        submodularity,
        empty_value,
        opt_set,
        opt_value,
        greedy_set,
        greedy_value,
        greedy_bound,
        greedy_bound_proof_pairs,
        degenerate,
        surrogate_bound,
        constants,
        gl_range: hi - lo,
        gl_max_se,
    })
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or("undefined".to_string(), |v| v.to_string())
}

impl AnalysisReport {
    /// `key value` lines grouped by section.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.monotonicity;
        let w = &self.submodularity;
        let c = &self.constants;
        let _ = writeln!(s, "[instance]\nn {}\nq_max {}\ndelta_mode {}", self.n, self.q_max, self.delta_mode.name());
        let _ = writeln!(
            s,
            "\n[ratios]\nm_min {}\nm_max {}\nmonotonicity_pairs {}\ngamma_min {}\ngamma_max {}\nsubmodularity_pairs {}\nskipped_zero_denominator {}\nexhaustive {}",
            m.m_min,
            m.m_max,
            m.pairs,
            opt_num(w.gamma_min),
            opt_num(w.gamma_max),
            w.pairs,
            w.skipped,
            m.exhaustive && w.exhaustive
        );
        let _ = writeln!(
            s,
            "\n[optimum]\nempty_value {}\nopt_set {}\nopt_value {}\ngreedy_set {}\ngreedy_value {}",
            self.empty_value,
            self.opt_set.to_compact(),
            self.opt_value,
            self.greedy_set.to_compact(),
            self.greedy_value
        );
        let _ = writeln!(s, "\n[approximation_bound]");
        match &self.greedy_bound {
            Some(b) => {
                let _ = writeln!(
                    s,
                    "m_f {}\ngamma_f {}\nbound {}\nslack {}\nverdict {}",
                    b.m_f,
                    b.gamma_f,
                    b.bound,
                    b.slack,
                    if b.pass { "pass" } else { "fail" }
                );
            }
            None => {
                let _ = writeln!(s, "verdict undefined");
            }
        }
        for d in &self.degenerate {
            let _ = writeln!(s, "degenerate {d}");
        }
        if let Some(b) = &self.greedy_bound_proof_pairs {
            let _ = writeln!(
                s,
                "greedy_pairs_m_f {}\ngreedy_pairs_gamma_f {}\ngreedy_pairs_bound {}\ngreedy_pairs_verdict {}",
                b.m_f,
                b.gamma_f,
                b.bound,
                if b.pass { "pass" } else { "fail" }
            );
        }
        let p = &self.surrogate_bound;
        let _ = writeln!(
            s,
            "\n[surrogate_bound]\nlhs {}\nrhs {}\nrhs_set {}\nse {}\nslack {}\nverdict {}",
            p.lhs,
            p.rhs,
            p.rhs_set.to_compact(),
            p.se,
            p.slack,
            if p.pass { "pass" } else { "fail" }
        );
        let _ = writeln!(
            s,
            "\n[constants]\neps_delta {}\neps_x {}\ndelta_min {}\ndelta_max {}\nloss_min {}\nloss_max {}\nlipschitz_x {}",
            c.eps_delta, c.eps_x, c.delta_min, c.delta_max, c.loss_min, c.loss_max, c.lipschitz_x
        );
        let _ = writeln!(s, "\n[generated_loss]\nrange {}\nmax_se {}", self.gl_range, self.gl_max_se);
        s
    }

    /// One `section,name,value` row per reported quantity.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,value\n");
        let mut section = String::new();
        for line in self.to_text().lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
            } else if let Some((k, v)) = line.split_once(' ') {
                let v = if v.contains(',') { format!("\"{v}\"") } else { v.to_string() };
                let _ = writeln!(out, "{section},{k},{v}");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| GenexError::io(dir, e))?;
        for (name, body) in [("analysis.txt", self.to_text()), ("analysis.csv", self.to_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| GenexError::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trip() {
        let mut cfg = ExperimentConfig {
            dataset: Some(PathBuf::from("data/x.csv")),
            lambda: Some(2),
            delta_mode: DeltaMode::Constant(0.7),
            ablation: Ablation::VEqualsU,
            clustering: Clustering::KMeans,
            budgets: vec![1, 3, 5],
            ..Default::default()
        };
        cfg.optimizer = OptimizerKind::Sgd { lr: 0.05 };
        let back = ExperimentConfig::from_text(&cfg.to_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_string(), cfg.to_string());
    }

    #[test]
    fn config_rejects_out_of_range_values() {
        assert!(ExperimentConfig::from_text("tau_quantile = 1.5").is_err());
        assert!(ExperimentConfig::from_text("obs_fraction = 0").is_err());
        assert!(ExperimentConfig::from_text("buckets_log2 = 0").is_err());
        assert!(ExperimentConfig::from_text("no_such_key = 1").is_err());
        assert!(ExperimentConfig::from_text("budgets = 3,1").is_err());
        let cfg = ExperimentConfig::from_text("# comment\nq_max = 4 # trailing\n").unwrap();
        assert_eq!(cfg.q_max, 4);
        assert_eq!(cfg.lambda(), 2);
    }

    #[test]
    fn default_sweep_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sweep_budgets(30), vec![3, 6, 9, 12, 15]);
        assert_eq!(cfg.sweep_budgets(4), vec![1, 2]);
    }

    #[test]
    fn plan_sections_round_trip() {
        let mut p = AcquisitionPlan::new(2, 1);
        p.buckets.insert(
            BucketId(3),
            BucketPlan {
                u: FeatureSet::from_iter([0, 4]),
                v: FeatureSet::from_iter([4]),
            },
        );
        let text = format!("# q_max 2 rep 0\n{p}# q_max 2 rep 1\n{p}");
        let parsed = parse_plans(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1], (2, 1, p));
    }
}
