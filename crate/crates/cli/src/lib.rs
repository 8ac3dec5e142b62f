//! Command-line pipeline: prepare → condense → train → evaluate → compare.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use agtm_core::checkpoint::ParamFile;
use agtm_core::condenser::train_autoencoder;
use agtm_core::config::{load_condenser_config, load_train_config, train_preset, autoencoder_preset};
use agtm_core::dataset::{self, ingest_interactions, k_core_filter, read_split, split, write_split, InputFormat, SplitRatios};
use agtm_core::embfile::{read_embeddings, write_embeddings, ItemEmbeddings};
use agtm_core::eval::{compare_reports, evaluate_checkpoint, read_report, write_report, DEFAULT_K};
use agtm_core::model::{ModelCheckpoint, TextInput};
use agtm_core::numerics::ParamSet;
use agtm_core::synthetic::synth_embeddings;
use agtm_core::trainer::{train, write_log};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "AGTM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "agtm", version, about = "Text-initialised graph recommender: data preparation, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest interactions, apply the k-core filter and write a seeded split.
    Prepare(PrepareArgs),
    /// Train the autoencoder and write condensed item embeddings.
    Condense(CondenseArgs),
    /// Train a preference model on a prepared split.
    Train(TrainArgs),
    /// Score a checkpoint on the test part of a split.
    Evaluate(EvaluateArgs),
    /// Paired t-test between two metric reports.
    Compare(CompareArgs),
    /// Write seeded unit-norm Gaussian item embeddings.
    SynthEmbeddings(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// tsv, amazon_json_lines or movielens_dat.
    #[arg(long, default_value = "tsv")]
    pub format: InputFormat,
    #[arg(long, default_value_t = 10)]
    pub k_core: usize,
    #[arg(long, default_value = "0.75,0.05,0.20")]
    pub ratios: SplitRatios,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CondenseArgs {
    /// Raw embedding file with an items.txt sidecar.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Autoencoder config; the shipped preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub split_dir: PathBuf,
    /// Condensed embeddings, needed unless items are randomly initialised.
    #[arg(long)]
    pub condensed: Option<PathBuf>,
    /// Raw embeddings, needed for the no_ae ablation.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Training config file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset: amazon-musics, amazon-movies or amazon-electronics.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub split_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub report_a: PathBuf,
    #[arg(long)]
    pub report_b: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of rows; ids are item0, item1, ...
    #[arg(long, conflicts_with = "ids", required_unless_present = "ids")]
    pub n_items: Option<usize>,
    /// One id per line (e.g. a split's items.txt); one row per id.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Record of one command run, written as `manifest.json` in the output
/// directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub wall_time_secs: f64,
    /// File name → SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run {
    manifest: RunManifest,
    manifest_name: String,
    started: Instant,
}

impl Run {
    fn new(command: &str, config: Option<&Path>, inputs: &[&Path], out: &Path, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config: config.map(Path::to_path_buf),
                inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
                output_dir: out.to_path_buf(),
                seed,
                wall_time_secs: 0.0,
                artifacts: BTreeMap::new(),
            },
            manifest_name: "manifest.json".into(),
            started: Instant::now(),
        })
    }

    fn manifest_name(mut self, name: String) -> Self {
        self.manifest_name = name;
        self
    }

    fn record(&mut self, names: &[&str]) -> Result<()> {
        for name in names {
            let path = self.manifest.output_dir.join(name);
            self.manifest.artifacts.insert(name.to_string(), sha256_file(&path)?);
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunManifest> {
        self.manifest.wall_time_secs = self.started.elapsed().as_secs_f64();
        let path = self.manifest.output_dir.join(&self.manifest_name);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

/// Configures the global worker pool from `AGTM_THREADS` (all cores when
/// unset).
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        if n == 0 {
            bail!("{THREADS_ENV} must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a).map(drop),
        Command::Condense(a) => cmd_condense(&a).map(drop),
        Command::Train(a) => cmd_train(&a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(&a).map(drop),
        Command::Compare(a) => cmd_compare(&a).map(|line| print!("{line}")),
        Command::SynthEmbeddings(a) => cmd_synth(&a),
    }
}

pub fn cmd_prepare(a: &PrepareArgs) -> Result<RunManifest> {
    let mut run = Run::new("prepare", None, &[&a.input], &a.out, Some(a.seed))?;
    let raw = ingest_interactions(&a.input, a.format)?;
    log::info!(
        "read {} interactions ({} users, {} items)",
        raw.len(),
        raw.n_users(),
        raw.n_items()
    );
    let core = k_core_filter(&raw, a.k_core)?;
    let s = split(&core, a.ratios, a.seed)?;
    write_split(&s, &a.out)?;
    if s.dropped_validation + s.dropped_test > 0 {
        log::warn!(
            "dropped {} validation and {} test pairs with users or items unseen in train",
            s.dropped_validation,
            s.dropped_test
        );
    }
    println!("users\t{}", core.n_users());
    println!("items\t{}", core.n_items());
    println!("interactions\t{}", core.len());
    println!("density\t{:.5}", dataset::density(core.len(), core.n_users(), core.n_items()));
    run.record(&["train.tsv", "valid.tsv", "test.tsv", "users.txt", "items.txt", "meta.txt"])?;
    run.finish()
}

pub fn cmd_condense(a: &CondenseArgs) -> Result<RunManifest> {
    let cfg = match &a.config {
        Some(p) => load_condenser_config(p)?,
        None => autoencoder_preset(),
    };
    let mut run = Run::new("condense", a.config.as_deref(), &[&a.embeddings], &a.out, Some(cfg.seed))?;
    let raw = read_embeddings(&a.embeddings)?;
    let trained = train_autoencoder(&raw.matrix, &cfg)?;
    write_embeddings(&a.out.join("condensed.agtm"), &ItemEmbeddings::new(raw.item_ids, trained.condensed)?)?;
    let ckpt = ParamFile {
        descriptor: format!(
            "autoencoder;input_dim={};hidden={};dim={}",
            trained.params.input_dim(),
            trained.params.hidden(),
            trained.params.dim()
        ),
        blocks: trained
            .params
            .blocks()
            .into_iter()
            .map(|(n, m)| (n.to_string(), m.clone()))
            .collect(),
    };
    ckpt.save(&a.out.join("autoencoder.ckpt"))?;
    let mut log_text = String::from("epoch\tloss\n");
    for (e, l) in trained.epoch_loss.iter().enumerate() {
        log_text.push_str(&format!("{}\t{l}\n", e + 1));
    }
    fs::write(a.out.join("condense_log.tsv"), log_text)?;
    if let Some(last) = trained.epoch_loss.last() {
        println!("final reconstruction loss per item\t{last}");
    }
    run.record(&["condensed.agtm", "items.txt", "autoencoder.ckpt", "condense_log.tsv"])?;
    run.finish()
}

pub fn cmd_train(a: &TrainArgs) -> Result<RunManifest> {
    let cfg = match (&a.config, &a.preset) {
        (Some(p), _) => load_train_config(p)?,
        (None, Some(name)) => train_preset(name)?,
        (None, None) => Default::default(),
    };
    let s = read_split(&a.split_dir)?;
    let text_path = match cfg.variant.text_input() {
        TextInput::None => None,
        TextInput::Condensed => Some(a.condensed.as_ref().with_context(|| {
            format!("variant {} needs --condensed", cfg.variant.descriptor())
        })?),
        TextInput::Raw => Some(a.embeddings.as_ref().with_context(|| {
            format!("variant {} needs the raw --embeddings file", cfg.variant.descriptor())
        })?),
    };
    let mut inputs: Vec<&Path> = vec![&a.split_dir];
    inputs.extend(text_path.map(PathBuf::as_path));
    let mut run = Run::new("train", a.config.as_deref(), &inputs, &a.out, Some(cfg.seed))?;
    let text = match text_path {
        Some(p) => {
            let emb = read_embeddings(p)?;
            let (m, missing) = emb.align_to(s.item_ids());
            if missing == s.n_items() {
                bail!("{} shares no item ids with the split", p.display());
            }
            if missing > 0 {
                log::warn!("{missing} of {} items have no embedding; using zero rows", s.n_items());
            }
            Some(m)
        }
        None => None,
    };
    let outcome = match train(&s, text.as_ref(), &cfg) {
        Ok(o) => o,
        Err(failure) => {
            let path = a.out.join("last_good.ckpt");
            failure.last_good.save(&path)?;
            write_log(&a.out.join("train_log.tsv"), &failure.log)?;
            bail!("{failure}; last good parameters saved to {}", path.display());
        }
    };
    outcome.checkpoint.save(&a.out.join("model.ckpt"))?;
    write_log(&a.out.join("train_log.tsv"), &outcome.log)?;
    fs::write(a.out.join("train.conf"), agtm_core::config::format_train_config(&cfg))?;
    match (outcome.best_epoch, outcome.best_val_ndcg) {
        (Some(e), Some(v)) => println!("best validation ndcg@{DEFAULT_K}\t{v:.6}\tepoch {e}"),
        _ => println!("no validation evaluation; kept final parameters"),
    }
    println!(
        "epochs\t{}{}",
        outcome.epochs_run,
        if outcome.stopped_early { "\t(early stop)" } else { "" }
    );
    run.record(&["model.ckpt", "train_log.tsv", "train.conf"])?;
    run.finish()
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<RunManifest> {
    let out_dir = a.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = if out_dir.as_os_str().is_empty() { PathBuf::from(".") } else { out_dir };
    let name = a.out.file_name().context("report path has no file name")?.to_string_lossy().into_owned();
    // The report usually sits next to a training run's manifest.json.
    let mut run = Run::new("evaluate", None, &[&a.checkpoint, &a.split_dir], &out_dir, None)?
        .manifest_name(format!("{name}.manifest.json"));
    let ckpt = ModelCheckpoint::load(&a.checkpoint)?;
    let s = read_split(&a.split_dir)?;
    let res = evaluate_checkpoint(&ckpt, &s, a.k)?;
    let user_ids: Vec<String> = s.user_ids().to_vec();
    write_report(&a.out, &res, &user_ids)?;
    println!(
        "recall@{k}\t{:.6}\nndcg@{k}\t{:.6}\nusers\t{}\tskipped\t{}",
        res.mean_recall,
        res.mean_ndcg,
        res.n_evaluated_users(),
        res.n_skipped_users,
        k = a.k
    );
    run.record(&[&name])?;
    run.finish()
}

/// The two result lines, recall first.
pub fn cmd_compare(a: &CompareArgs) -> Result<String> {
    let ra = read_report(&a.report_a)?;
    let rb = read_report(&a.report_b)?;
    let (r, n) = compare_reports(&ra, &rb)?;
    Ok(format!(
        "recall@{k} t={:.6} p={:.6e} n={}\nndcg@{k} t={:.6} p={:.6e} n={}\n",
        r.t,
        r.p,
        r.n,
        n.t,
        n.p,
        n.n,
        k = ra.k
    ))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let emb = match (&a.ids, a.n_items) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let ids: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
            let base = synth_embeddings(ids.len(), a.dim, a.seed)?;
            ItemEmbeddings::new(ids, base.matrix)?
        }
        (None, Some(n)) => synth_embeddings(n, a.dim, a.seed)?,
        (None, None) => bail!("pass --n-items or --ids"),
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_embeddings(&a.out, &emb)?;
    Ok(())
}
