use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use genex::dataset::synthetic::{elongated_clusters, informative_classification, InformativeSpec};
use genex::dataset::{apply_observation_policy, save_dataset, Dataset, Standardizer};
use genex::experiment::{
    load_configured, partition_train, prepare, recompute_from_outcomes, repetition_seed, run_analysis, run_repetition,
    sweep_budgets, with_pool, ExperimentConfig, RunReport, SmallInstanceSpec,
};
use genex::inference::{summarize, write_outcomes, InferenceEngine, MatrixOracle};
use genex::partition::{bucket_skew_of, Router};

#[derive(Parser, Debug)]
#[command(name = "genex", version, about = "Budgeted batch feature acquisition with per-bucket generators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. A config file given with
/// `--config` is applied last and wins over the flags.
#[derive(Args, Debug, Default)]
struct Global {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Label column name, or `file:<path>` for a separate label file.
    #[arg(long, global = true)]
    labels: Option<String>,
    #[arg(long, global = true)]
    mask: Option<PathBuf>,
    #[arg(long, global = true)]
    buckets_log2: Option<usize>,
    #[arg(long, global = true)]
    qmax: Option<usize>,
    /// Generator quota, or `auto` for half the budget rounded up.
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long, global = true)]
    tau_quantile: Option<f64>,
    #[arg(long, global = true)]
    obs_fraction: Option<f64>,
    /// `mc`, `constant` or `constant:<value>`.
    #[arg(long, global = true)]
    delta_mode: Option<String>,
    /// `full`, `v-empty` or `v-equals-u`.
    #[arg(long, global = true)]
    ablation: Option<String>,
    /// `rh` or `kmeans`.
    #[arg(long, global = true)]
    clustering: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the resolved configuration.
    Config,
    /// Write a synthetic dataset as features.csv and mask.csv.
    Synth(SynthArgs),
    /// Split, standardize and hash the training split into buckets.
    Partition,
    /// Train every bucket, calibrate the threshold and save the engine.
    Train,
    /// Run a saved engine on the configured dataset.
    Infer {
        /// Engine directory; defaults to `<out-dir>/engine`.
        #[arg(long)]
        engine: Option<PathBuf>,
    },
    /// Repeated runs over one or more budgets.
    Sweep,
    /// Brute-force checks of the set-function properties on a small bucket.
    Analyze(AnalyzeArgs),
    /// Summarize a sweep directory and check its accounting.
    Report {
        /// Sweep output directory; defaults to `<out-dir>`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Informative,
    Elongated,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "informative")]
    kind: SynthKind,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 3000)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    informative: usize,
    /// Plant a near-copy of one informative feature.
    #[arg(long)]
    redundant: bool,
    #[arg(long, default_value_t = 6.0)]
    elongation: f64,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 48)]
    size: usize,
    #[arg(long, default_value_t = 6)]
    informative: usize,
    #[arg(long, default_value_t = 30)]
    retrain_epochs: usize,
}

impl Global {
    /// Defaults, then flags, then the config file.
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let path = |p: &Path| p.display().to_string();
        let flags: Vec<(&str, Option<String>)> = vec![
            ("seed", self.seed.map(|v| v.to_string())),
            ("dataset", self.dataset.as_deref().map(path)),
            ("labels", self.labels.clone()),
            ("mask", self.mask.as_deref().map(path)),
            ("buckets_log2", self.buckets_log2.map(|v| v.to_string())),
            ("q_max", self.qmax.map(|v| v.to_string())),
            ("lambda", self.lambda.clone()),
            ("tau_quantile", self.tau_quantile.map(|v| v.to_string())),
            ("obs_fraction", self.obs_fraction.map(|v| v.to_string())),
            ("delta_mode", self.delta_mode.clone()),
            ("ablation", self.ablation.clone()),
            ("clustering", self.clustering.clone()),
            ("jobs", self.jobs.map(|v| v.to_string())),
            ("repetitions", self.repetitions.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k, v).with_context(|| format!("--set {kv}"))?;
        }
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            cfg.apply_text(&text).with_context(|| format!("config file {}", p.display()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn synth(cfg: &ExperimentConfig, args: &SynthArgs, out: &Path) -> Result<()> {
    let data = match args.kind {
        SynthKind::Informative => {
            let d = informative_classification(&InformativeSpec {
                n: args.n,
                num_classes: args.classes,
                num_informative: args.informative,
                size: args.size,
                redundant_copy: args.redundant,
                seed: cfg.seed,
            })?;
            println!("informative features {}", d.informative);
            if let Some((copy, source)) = d.redundant {
                println!("feature {copy} is a near-copy of feature {source}");
            }
            d.dataset
        }
        SynthKind::Elongated => elongated_clusters(args.n, args.size, args.elongation, args.separation, cfg.seed)?,
    };
    let data = apply_observation_policy(&data, cfg.obs_fraction, cfg.seed)?;
    let (f, m) = save_dataset(&data, out)?;
    println!("wrote {} and {}", f.display(), m.display());
    Ok(())
}

fn partition_cmd(cfg: &ExperimentConfig, data: &Dataset, out: &Path) -> Result<()> {
    let seed = repetition_seed(cfg.seed, 0);
    let splits = prepare(cfg, data, seed)?;
    let (router, buckets) = partition_train(cfg, &splits.train, seed)?;
    let mut body = String::from("instance_id,bucket\n");
    for (b, positions) in &buckets {
        for &p in positions {
            body.push_str(&format!("{},{}\n", splits.train.instances[p].id, b.0));
        }
    }
    write(&out.join("buckets.csv"), &body)?;
    if let Router::Hyperplanes { bank, .. } = &router {
        bank.save(&out.join("hyperplanes.txt"))?;
    }
    println!("bucket size");
    for (b, positions) in &buckets {
        println!("{:>6} {}", b.0, positions.len());
    }
    println!("bucket_skew {:.4}", bucket_skew_of(&buckets)?);
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig, data: &Dataset, out: &Path) -> Result<()> {
    let rep = with_pool(cfg.jobs, || run_repetition(cfg, data, 0))??;
    let dir = out.join("engine");
    rep.engine.save(&dir, rep.plan.q_max, rep.plan.lambda)?;
    let splits = prepare(cfg, data, rep.seed)?;
    if let Some(st) = &splits.train.standardization {
        st.save(&dir.join("standardizer.txt"))?;
    }
    cfg.save(&out.join("config.txt"))?;
    let s = summarize(&rep.outcomes);
    println!("buckets {} tau {:.4}", rep.engine.buckets.len(), rep.engine.tau);
    print!("{}", rep.plan);
    println!(
        "test accuracy {:.4} queries {:.3} saved {:.4} generator_rate {:.4}",
        s.accuracy, s.mean_queries, s.saved_fraction, s.generator_rate
    );
    println!("engine saved to {}", dir.display());
    Ok(())
}

fn infer_cmd(cfg: &ExperimentConfig, data: &Dataset, engine_dir: &Path, out: &Path) -> Result<()> {
    let (engine, _) = InferenceEngine::load(engine_dir)?;
    let data = if cfg.mask.is_some() {
        data.clone()
    } else {
        apply_observation_policy(data, cfg.obs_fraction, cfg.seed)?
    };
    let st_path = engine_dir.join("standardizer.txt");
    let data = if st_path.exists() {
        Standardizer::load(&st_path)?.apply(&data)?
    } else {
        data
    };
    let oracle = MatrixOracle::from_dataset(&data);
    let outcomes = with_pool(cfg.jobs, || engine.infer_all(&data, &oracle, cfg.seed))??;
    let rows: Vec<_> = outcomes.iter().map(|o| (Vec::new(), o.clone())).collect();
    let path = out.join("outcomes.csv");
    let mut file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_outcomes(&mut file, &[], &rows)?;
    let s = summarize(&outcomes);
    println!(
        "instances {} accuracy {:.4} queries {:.3} saved {:.4} generator_rate {:.4}",
        outcomes.len(),
        s.accuracy,
        s.mean_queries,
        s.saved_fraction,
        s.generator_rate
    );
    Ok(())
}

fn print_report(report: &RunReport) {
    println!(
        "{:>5} {:>6} {:>4} {:>17} {:>17} {:>17} {:>8}",
        "q_max", "lambda", "reps", "accuracy", "queries", "saved", "skew"
    );
    for r in &report.rows {
        println!(
            "{:>5} {:>6} {:>4} {:>8.4}±{:<8.4} {:>8.3}±{:<8.3} {:>8.4}±{:<8.4} {:>8.4}",
            r.q_max,
            r.lambda,
            r.repetitions,
            r.accuracy.mean,
            r.accuracy.se,
            r.queries.mean,
            r.queries.se,
            r.saved_fraction.mean,
            r.saved_fraction.se,
            r.bucket_skew.mean
        );
    }
}

fn sweep_cmd(cfg: &ExperimentConfig, data: &Dataset, out: &Path) -> Result<()> {
    let budgets = if cfg.budgets.is_empty() {
        cfg.sweep_budgets(data.n)
    } else {
        cfg.budgets.clone()
    };
    let result = sweep_budgets(cfg, data, &budgets)?;
    result.write(out)?;
    cfg.save(&out.join("config.txt"))?;
    print_report(&result.report);
    Ok(())
}

fn report_cmd(dir: &Path) -> Result<()> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let report = RunReport::from_csv(&read("runreport.csv")?)?;
    print_report(&report);
    if dir.join("outcomes.csv").exists() {
        let recomputed = recompute_from_outcomes(&read("outcomes.csv")?)?;
        for row in &report.rows {
            match recomputed.get(&row.q_max) {
                Some((q, s)) if q.mean == row.queries.mean && s.mean == row.saved_fraction.mean => {}
                _ => bail!("outcome log disagrees with the report at q_max {}", row.q_max),
            }
        }
        println!("outcome log matches the report for {} budgets", report.rows.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = cli.global.resolve()?;
    let out = &cli.global.out_dir;
    if let Command::Config = cli.command {
        print!("{cfg}");
        return Ok(());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Synth(args) => synth(&cfg, args, out),
        Command::Analyze(args) => {
            let spec = SmallInstanceSpec {
                n: args.n,
                size: args.size,
                num_informative: args.informative,
                q_max: cfg.q_max,
                retrain_epochs: args.retrain_epochs,
                ..SmallInstanceSpec::default()
            };
            let report = with_pool(cfg.jobs, || run_analysis(&cfg, &spec))??;
            report.write(out)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Report { input } => report_cmd(input.as_deref().unwrap_or(out)),
        command => {
            let data = load_configured(&cfg)?;
            match command {
                Command::Partition => partition_cmd(&cfg, &data, out),
                Command::Train => train_cmd(&cfg, &data, out),
                Command::Infer { engine } => {
                    let dir = engine.clone().unwrap_or_else(|| out.join("engine"));
                    infer_cmd(&cfg, &data, &dir, out)
                }
                Command::Sweep => sweep_cmd(&cfg, &data, out),
                _ => unreachable!(),
            }
        }
    }
}
