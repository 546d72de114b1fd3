use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use jointkg::dataset::{PrepareOptions, SyntheticSpec};
use jointkg::diffmath::Checkpoint;
use jointkg::eval::{self, report};
use jointkg::io::write_atomic;
use jointkg::trainer::{self, ProgressRecord, PROGRESS_HEADER};
use jointkg::{seeded_rng, Dataset, Dissimilarity, EncoderKind, JointModel, RunConfig, Scalar, Triple};

/// Environment variable holding the log filter (e.g. `debug`).
const LOG_ENV: &str = "JOINTKG_LOG";

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const BUNDLE_FILE: &str = "bundle.json";

#[derive(Parser)]
#[command(name = "jointkg", version, about = "Joint structure and description embeddings for knowledge graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model checkpoint to evaluate, or the pretrained structure checkpoint for `train`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["nbow", "lstm", "alstm"])]
    encoder: Option<String>,
    /// Prepared dataset bundle (default: <out>/bundle.json).
    #[arg(long, global = true)]
    bundle: Option<PathBuf>,
    /// Extra configuration override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest triples and descriptions into a dataset bundle.
    Prepare {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        descriptions: Option<PathBuf>,
        /// Reject valid/test entities or relations unseen in train.
        #[arg(long)]
        strict_vocab: bool,
    },
    /// Train the structure-only translational baseline.
    Pretrain {
        /// Train in single precision.
        #[arg(long)]
        f32: bool,
    },
    /// Train the joint model.
    Train {
        #[arg(long)]
        f32: bool,
    },
    /// Link prediction (and relation prediction) on the test split.
    EvalLp {
        #[arg(long)]
        skip_relations: bool,
        /// Evaluate only the first N test triples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Triplet classification with per-relation thresholds.
    EvalTc,
    /// Mean gate activation by entity frequency group.
    ExportGates {
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients of the training loss.
    GradCheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Number of (positive, negative) pairs in the checked loss.
        #[arg(long, default_value_t = 4)]
        pairs: usize,
    },
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.training.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(enc) = &common.encoder {
        cfg.model.encoder = Some(enc.parse::<EncoderKind>()?);
    }
    if let Some(b) = &common.bundle {
        cfg.bundle = Some(b.clone());
    }
    Ok(cfg)
}

fn bundle_path(cfg: &RunConfig) -> PathBuf {
    cfg.bundle.clone().unwrap_or_else(|| cfg.out.join(BUNDLE_FILE))
}

fn write_report(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes())?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_bundle(cfg: &RunConfig) -> Result<Arc<Dataset>> {
    let path = bundle_path(cfg);
    let ds = Dataset::load(&path).with_context(|| format!("loading dataset bundle {}", path.display()))?;
    Ok(Arc::new(ds))
}

fn load_model(common: &Common, cfg: &RunConfig) -> Result<(JointModel<f64>, String)> {
    let path = common.checkpoint.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let label = ckpt.header.encoder.clone();
    let model = JointModel::from_checkpoint(&ckpt, load_bundle(cfg)?)?;
    Ok((model, label))
}

fn prepare(cfg: &RunConfig, train: Option<PathBuf>, valid: Option<PathBuf>, test: Option<PathBuf>, descriptions: Option<PathBuf>, strict: bool) -> Result<()> {
    let pick = |flag: Option<PathBuf>, conf: &Option<PathBuf>, name: &str| {
        flag.or_else(|| conf.clone()).with_context(|| format!("no `{name}` triples given (flag or config key)"))
    };
    let mut opts = PrepareOptions::new(
        pick(train, &cfg.train, "train")?,
        pick(valid, &cfg.valid, "valid")?,
        pick(test, &cfg.test, "test")?,
    );
    opts.descriptions = descriptions.or_else(|| cfg.descriptions.clone());
    opts.max_len = cfg.max_len;
    opts.min_word_freq = cfg.min_word_freq;
    opts.strict_vocab = strict;
    cfg.validate_hyperparameters()?;
    let ds = Dataset::prepare(&opts)?;
    let path = bundle_path(cfg);
    ds.save(&path)?;
    println!(
        "entities={} relations={} words={} train={} valid={} test={} -> {}",
        ds.entity_count(),
        ds.relation_count(),
        ds.words.len(),
        ds.train.len(),
        ds.valid.len(),
        ds.test.len(),
        path.display()
    );
    Ok(())
}

fn train_with<T: Scalar>(cfg: &RunConfig, dataset: Arc<Dataset>, pretrained: Option<&Checkpoint>) -> Result<()> {
    let mut rng = seeded_rng(cfg.training.seed);
    let mut model = trainer::initialize_model::<T, _>(cfg.model.clone(), dataset, pretrained, &mut rng)?;
    info!(
        "training {} model: d={} parameters={} ({})",
        cfg.model.encoder.map_or("structure-only", EncoderKind::as_str),
        cfg.model.dim,
        model.params().numel(),
        T::NAME
    );
    let mut progress = format!("{PROGRESS_HEADER}\n");
    let outcome = trainer::train(&mut model, &cfg.training, &mut rng, |r: &ProgressRecord| {
        info!("{}", r.csv_line());
        progress.push_str(&r.csv_line());
        progress.push('\n');
    })?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    model.to_checkpoint().save(&cfg.out.join(CHECKPOINT_FILE))?;
    write_report(&cfg.out, "progress.csv", &progress)?;
    write_report(&cfg.out, "run.conf", &cfg.hyperparameters())?;
    match (outcome.best_epoch, outcome.best_valid) {
        (Some(epoch), Some(v)) => println!(
            "best epoch {epoch}: validation filtered MR {:.2}, Hits@10 {:.2}",
            v.mean_rank, v.hits10
        ),
        _ => println!("trained {} epoch(s) without validation data", outcome.history.len()),
    }
    Ok(())
}

fn train_cmd(common: &Common, mut cfg: RunConfig, structure_only: bool, f32: bool) -> Result<()> {
    if structure_only {
        cfg.model.encoder = None;
        cfg.pretrained = None;
    } else if let Some(p) = &common.checkpoint {
        cfg.pretrained = Some(p.clone());
    }
    cfg.validate_hyperparameters()?;
    cfg.validate_paths(&["bundle", "pretrained"])?;
    let dataset = load_bundle(&cfg)?;
    let pretrained = match &cfg.pretrained {
        Some(p) => Some(Checkpoint::load(p).with_context(|| format!("loading pretrained {}", p.display()))?),
        None => {
            if !structure_only {
                warn!("no pretrained structure checkpoint; starting from random structure embeddings");
            }
            None
        }
    };
    if f32 {
        train_with::<f32>(&cfg, dataset, pretrained.as_ref())
    } else {
        train_with::<f64>(&cfg, dataset, pretrained.as_ref())
    }
}

fn eval_lp(common: &Common, cfg: &RunConfig, skip_relations: bool, limit: Option<usize>) -> Result<()> {
    let (model, label) = load_model(common, cfg)?;
    let test = &model.dataset().test;
    let test = &test[..limit.unwrap_or(test.len()).min(test.len())];
    let lp = eval::link_prediction_eval(&model, test);
    fs::create_dir_all(&cfg.out)?;
    write_report(&cfg.out, "link_prediction.csv", &report::link_prediction_csv(&label, &lp))?;
    write_report(&cfg.out, "categories.csv", &report::category_csv(&label, &lp))?;
    write_report(&cfg.out, "categories_detail.csv", &report::category_detail_csv(&lp))?;
    let s = &lp.overall;
    println!(
        "entities: MR raw {:.1} filter {:.1}; Hits@10 raw {:.2} filter {:.2}",
        s.mean_rank_raw(),
        s.mean_rank_filtered(),
        s.hits_raw(),
        s.hits_filtered()
    );
    if !skip_relations {
        let rel = eval::relation_prediction_eval(&model, test);
        write_report(&cfg.out, "relation_prediction.csv", &report::relation_prediction_csv(&label, &rel))?;
        println!("relations: Hits@1 raw {:.2} filter {:.2}", rel.hits_raw(), rel.hits_filtered());
    }
    Ok(())
}

fn eval_tc(common: &Common, cfg: &RunConfig) -> Result<()> {
    let (model, label) = load_model(common, cfg)?;
    let ds = Arc::clone(model.dataset());
    let mut rng = seeded_rng(cfg.training.seed);
    let valid = eval::make_classification_negatives(&ds.valid, ds.filter(), ds.entity_count(), &mut rng)?;
    let test = eval::make_classification_negatives(&ds.test, ds.filter(), ds.entity_count(), &mut rng)?;
    let thresholds = eval::find_thresholds(&model, &valid);
    let result = eval::classify(&model, &test, &thresholds);
    fs::create_dir_all(&cfg.out)?;
    write_report(&cfg.out, "classification.csv", &report::classification_csv(&label, &result))?;
    let mut table = String::from("relation,threshold\n");
    for (r, t) in thresholds.per_relation.iter().enumerate() {
        let t = t.unwrap_or(thresholds.global);
        writeln!(table, "{},{:?}", ds.relations.name(r as u32), t)?;
    }
    writeln!(table, "*,{:?}", thresholds.global)?;
    write_report(&cfg.out, "thresholds.csv", &table)?;
    println!("accuracy {:.2} ({}/{})", result.accuracy(), result.correct, result.total);
    Ok(())
}

fn export_gates(common: &Common, cfg: &RunConfig, groups: Option<usize>) -> Result<()> {
    let (model, _) = load_model(common, cfg)?;
    let fine = eval::gate_report(&model, groups.unwrap_or(cfg.gate_groups))?;
    let coarse = eval::gate_report(&model, eval::SUMMARY_GATE_GROUPS)?;
    fs::create_dir_all(&cfg.out)?;
    write_report(&cfg.out, "gates.csv", &report::gate_csv(&fine))?;
    write_report(&cfg.out, "gates_summary.csv", &report::gate_csv(&coarse))?;
    for g in &coarse {
        println!("group {:2}: freq {}..{} mean gate {:.4}", g.group_index, g.freq_lo, g.freq_hi, g.mean_gate);
    }
    Ok(())
}

fn grad_check(common: &Common, cfg: &RunConfig, tolerance: f64, eps: f64, pairs: usize) -> Result<()> {
    let mut rng = seeded_rng(cfg.training.seed);
    let mut model = if common.checkpoint.is_some() {
        load_model(common, cfg)?.0
    } else {
        // A fresh randomised toy instance.
        let spec = SyntheticSpec {
            entities: 3,
            relations: 2,
            triples: 10,
            words: 8,
            max_len: 6,
        };
        let ds = Arc::new(jointkg::dataset::synthetic_dataset(spec, cfg.training.seed)?);
        let mut model_cfg = cfg.model.clone();
        model_cfg.dim = 8;
        // Under L1 a positive and its negative share entities whose sign
        // terms cancel exactly; the finite difference of such a zero
        // gradient is pure rounding noise, so the smooth form is checked.
        if model_cfg.dissimilarity != Dissimilarity::SqL2 {
            info!("checking the squared-L2 score on the toy instance");
            model_cfg.dissimilarity = Dissimilarity::SqL2;
        }
        let mut m = JointModel::<f64>::new(model_cfg, ds, &mut rng)?;
        m.params_mut().randomize(1.0, &mut rng);
        m
    };
    let ds = Arc::clone(model.dataset());
    if ds.train.is_empty() {
        bail!("dataset has no training triples to check");
    }
    let sampler =
        trainer::NegativeSampler::new(&ds.stats, &ds.train, ds.entity_count(), ds.relation_count(), cfg.training.p_rel)?;
    let chosen: Vec<(Triple, Triple)> = (0..pairs.max(1))
        .map(|i| {
            let pos = ds.train[i % ds.train.len()];
            (pos, sampler.sample(pos, &mut rng).triple)
        })
        .collect();
    for (p, n) in &chosen {
        log::debug!("pair {:?} / {:?}", <[u32; 3]>::from(*p), <[u32; 3]>::from(*n));
    }
    let result = trainer::check_hinge_gradients(&mut model, &chosen, eps);
    let mut table = String::from("slot,max_rel_err,worst_index,analytic,numeric\n");
    for s in &result.slots {
        writeln!(table, "{},{:e},{},{:e},{:e}", s.slot, s.max_rel_err, s.worst_index, s.analytic, s.numeric)?;
        println!("{:<20} {:.3e}", s.slot, s.max_rel_err);
    }
    fs::create_dir_all(&cfg.out)?;
    write_report(&cfg.out, "grad_check.csv", &table)?;
    let worst = result.max_rel_err();
    println!("max relative error {worst:.3e} (tolerance {tolerance:e})");
    if !(worst < tolerance) {
        bail!("gradient check failed: max relative error {worst:e} >= {tolerance:e}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    let cfg = run_config(&cli.common)?;
    match cli.command {
        Command::Prepare {
            train,
            valid,
            test,
            descriptions,
            strict_vocab,
        } => prepare(&cfg, train, valid, test, descriptions, strict_vocab),
        Command::Pretrain { f32 } => train_cmd(&cli.common, cfg, true, f32),
        Command::Train { f32 } => train_cmd(&cli.common, cfg, false, f32),
        Command::EvalLp { skip_relations, limit } => eval_lp(&cli.common, &cfg, skip_relations, limit),
        Command::EvalTc => eval_tc(&cli.common, &cfg),
        Command::ExportGates { groups } => export_gates(&cli.common, &cfg, groups),
        Command::GradCheck { tolerance, eps, pairs } => grad_check(&cli.common, &cfg, tolerance, eps, pairs),
    }
}
