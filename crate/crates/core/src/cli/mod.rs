//! Command-line driver: dataset preparation, training, evaluation,
//! recommendation, sweeps and ablations.

mod settings;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

pub use settings::Settings;

use crate::data::{
    build_split, kcore_filter, load_dataset, load_interactions, save_dataset, stats, Delimiter, LoadOptions, Phase,
    SplitDataset, Vocab,
};
use crate::engine::{
    finetune, load_checkpoint, pretrain, retrieve_lenient, save_checkpoint, Checkpoint, CheckpointPhase, TrainConfig,
};
use crate::error::{Error, Result};
use crate::eval::{append_reports, evaluate, run_ablation, save_sweep_csv, sweep, Ablation, MetricReport, SweepGrid};

pub const DATASET_FILE: &str = "dataset.json";
pub const REPORT_FILE: &str = "reports.jsonl";
pub const ABLATION_FILE: &str = "ablations.jsonl";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PRETRAINED_DIR: &str = "pretrained";
pub const FINETUNED_DIR: &str = "finetuned";

#[derive(Debug, Parser)]
#[command(
    name = "multiround",
    version,
    about = "Adaptive multi-round retrieval for sequential recommendation"
)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for datasets, checkpoints and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, k-core filter, split and store a dataset.
    Prepare {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 5)]
        min_count: usize,
    },
    /// Print dataset statistics as JSON.
    Stats {
        #[command(flatten)]
        input: InputArgs,
        /// Apply k-core filtering first.
        #[arg(long)]
        min_count: Option<usize>,
    },
    /// Train the single-round base model.
    Pretrain {
        #[command(flatten)]
        data: DataArg,
    },
    /// Train the adapters on top of a pretrained checkpoint.
    Finetune {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Start from a fresh backbone instead of the pretrained one.
        #[arg(long)]
        no_pretrain: bool,
    },
    /// Append a metric report for a checkpoint.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Cutoff; defaults to the checkpoint's `eval_k`.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Print top-K lists for the given raw user ids.
    Recommend {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        users: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Finetune and test every (rounds, lambda) cell of a grid.
    Sweep {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        rounds: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
    },
    /// Finetune and test each component ablation.
    Ablate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Interaction file with `user item timestamp` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Sep::Tab)]
    delimiter: Sep,
    /// Skip the first line.
    #[arg(long)]
    header: bool,
    /// Drop interactions older than this timestamp.
    #[arg(long)]
    since: Option<i64>,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Prepared dataset; defaults to `<out>/dataset.json`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sep {
    Tab,
    Comma,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Invalid(e.to_string()))
    }
}

/// Runs one invocation and returns the process exit code: 0 on success,
/// 1 on a usage error, 2 on a runtime error.
pub fn run<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

/// Layers `base` < config file < `--set` < `--seed`.
fn resolve_config(cli: &Cli, base: &TrainConfig) -> std::result::Result<TrainConfig, Failure> {
    let mut s = Settings::new(base);
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    for a in &cli.set {
        s.assign(a).map_err(Failure::Usage)?;
    }
    if let Some(seed) = cli.seed {
        s.set("seed", &seed.to_string()).map_err(Failure::Usage)?;
    }
    Ok(s.build()?)
}

fn load_options(input: &InputArgs) -> LoadOptions {
    LoadOptions {
        delimiter: match input.delimiter {
            Sep::Tab => Delimiter::Tab,
            Sep::Comma => Delimiter::Comma,
        },
        header: input.header,
        since: input.since,
    }
}

fn data_path(cli: &Cli, data: &DataArg) -> PathBuf {
    data.data.clone().unwrap_or_else(|| cli.out.join(DATASET_FILE))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_json(stdout: &mut dyn Write, v: &impl Serialize) -> std::result::Result<(), Failure> {
    let line = serde_json::to_string(v).map_err(|e| Error::Invalid(e.to_string()))?;
    writeln!(stdout, "{line}")?;
    Ok(())
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut probe = Settings::new(&TrainConfig::default());
    for a in &cli.set {
        probe.assign(a).map_err(Failure::Usage)?;
    }
    match &cli.command {
        Command::Prepare { input, min_count } => {
            let log = load_interactions(&input.input, &load_options(input))?;
            let filtered = kcore_filter(&log, *min_count)?;
            let (split, vocab) = build_split(&filtered)?;
            ensure_dir(&cli.out)?;
            let path = cli.out.join(DATASET_FILE);
            save_dataset(&path, &split, &vocab)?;
            info!("wrote {}", path.display());
            print_json(stdout, &stats(&filtered))
        }
        Command::Stats { input, min_count } => {
            let mut log = load_interactions(&input.input, &load_options(input))?;
            if let Some(m) = min_count {
                log = kcore_filter(&log, *m)?;
            }
            print_json(stdout, &stats(&log))
        }
        Command::Pretrain { data } => {
            let (split, _) = load_dataset(data_path(cli, data))?;
            let cfg = resolve_config(cli, &TrainConfig::default())?;
            let outcome = pretrain(&split, &cfg)?;
            let dir = cli.out.join(PRETRAINED_DIR);
            save_checkpoint(&outcome.checkpoint, &dir)?;
            print_json(
                stdout,
                &TrainSummary::new(&outcome.checkpoint, &dir, outcome.history.len()),
            )
        }
        Command::Finetune {
            data,
            checkpoint,
            no_pretrain,
        } => {
            let (split, _) = load_dataset(data_path(cli, data))?;
            let base = load_checkpoint(checkpoint)?;
            let cfg = resolve_config(cli, &base.config)?;
            let outcome = finetune(&split, &base, &cfg, *no_pretrain)?;
            let dir = cli.out.join(FINETUNED_DIR);
            save_checkpoint(&outcome.checkpoint, &dir)?;
            print_json(
                stdout,
                &TrainSummary::new(&outcome.checkpoint, &dir, outcome.history.len()),
            )
        }
        Command::Evaluate {
            data,
            checkpoint,
            split: which,
            k,
        } => {
            let (split, _) = load_dataset(data_path(cli, data))?;
            let ckpt = load_checkpoint(checkpoint)?;
            let phase = match which {
                SplitArg::Valid => Phase::Valid,
                SplitArg::Test => Phase::Test,
            };
            let report = evaluate_checkpoint(&ckpt, &split, phase, *k)?;
            ensure_dir(&cli.out)?;
            append_reports(cli.out.join(REPORT_FILE), std::slice::from_ref(&report))?;
            writeln!(stdout, "{}", report.to_json_line()?)?;
            Ok(())
        }
        Command::Recommend {
            data,
            checkpoint,
            users,
            k,
        } => {
            let (split, vocab) = load_dataset(data_path(cli, data))?;
            let ckpt = load_checkpoint(checkpoint)?;
            for rec in recommend(&ckpt, &split, &vocab, users, k.unwrap_or(ckpt.config.eval_k))? {
                print_json(stdout, &rec)?;
            }
            Ok(())
        }
        Command::Sweep {
            data,
            checkpoint,
            rounds,
            lambdas,
        } => {
            let (split, _) = load_dataset(data_path(cli, data))?;
            let base = load_checkpoint(checkpoint)?;
            let cfg = resolve_config(cli, &base.config)?;
            let defaults = SweepGrid::default();
            let grid = SweepGrid::new(
                if rounds.is_empty() {
                    defaults.rounds
                } else {
                    rounds.clone()
                },
                if lambdas.is_empty() {
                    defaults.lambdas
                } else {
                    lambdas.clone()
                },
            )
            .map_err(|e| Failure::Usage(e.to_string()))?;
            let rows = sweep(&split, &base, &grid, &cfg)?;
            ensure_dir(&cli.out)?;
            let path = cli.out.join(SWEEP_FILE);
            save_sweep_csv(&path, &rows)?;
            crate::eval::write_sweep_csv(&mut *stdout, &rows)?;
            Ok(())
        }
        Command::Ablate { data, checkpoint } => {
            let (split, _) = load_dataset(data_path(cli, data))?;
            let base = load_checkpoint(checkpoint)?;
            let cfg = resolve_config(cli, &base.config)?;
            ensure_dir(&cli.out)?;
            let path = cli.out.join(ABLATION_FILE);
            for ab in Ablation::ALL {
                let report = run_ablation(&split, &base, &cfg, ab)?;
                append_reports(&path, std::slice::from_ref(&report))?;
                writeln!(stdout, "{}", report.to_json_line()?)?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    phase: &'static str,
    epoch: usize,
    epochs_run: usize,
    checkpoint: String,
    config_hash: String,
}

impl TrainSummary {
    fn new(ckpt: &Checkpoint, dir: &Path, epochs_run: usize) -> Self {
        Self {
            phase: ckpt.phase.as_str(),
            epoch: ckpt.epoch,
            epochs_run,
            checkpoint: dir.display().to_string(),
            config_hash: ckpt.config.hash(),
        }
    }
}

/// Rounds used at inference: one for a base model, the trained count otherwise.
pub fn inference_rounds(ckpt: &Checkpoint) -> usize {
    match ckpt.phase {
        CheckpointPhase::Pretrained => 1,
        CheckpointPhase::Finetuned => ckpt.config.rounds,
    }
}

/// Evaluates a checkpoint with its own configuration, stamping the report
/// with the checkpoint's epoch and config hash.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    split: &SplitDataset,
    phase: Phase,
    k: Option<usize>,
) -> Result<MetricReport> {
    let cfg = &ckpt.config;
    let rounds = inference_rounds(ckpt);
    let k = k.unwrap_or(cfg.eval_k);
    let mut report = evaluate(&ckpt.model, split, phase, k, rounds, cfg.batch_size)?;
    report.epoch = ckpt.epoch;
    report.config_hash = cfg.hash();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub user: String,
    pub items: Vec<String>,
    pub rounds: Vec<usize>,
}

/// Top-`k` next items for raw user ids, ranked from each full history with
/// that history excluded.
pub fn recommend(
    ckpt: &Checkpoint,
    split: &SplitDataset,
    vocab: &Vocab,
    users: &[String],
    k: usize,
) -> Result<Vec<Recommendation>> {
    let mut seqs = Vec::with_capacity(users.len());
    let mut excl = Vec::with_capacity(users.len());
    for raw in users {
        let uid = vocab
            .user_id(raw)
            .ok_or_else(|| Error::Invalid(format!("unknown user `{raw}`")))?;
        let h = split.users[uid].history();
        excl.push(h.iter().copied().collect::<BTreeSet<_>>().into_iter().collect());
        seqs.push(h);
    }
    let results = retrieve_lenient(
        &ckpt.model,
        &seqs,
        &excl,
        k,
        inference_rounds(ckpt),
        ckpt.config.batch_size,
    )?;
    Ok(users
        .iter()
        .zip(results)
        .map(|(u, r)| Recommendation {
            user: u.clone(),
            items: r
                .items
                .iter()
                .map(|&i| vocab.item_raw(i).unwrap_or("?").to_string())
                .collect(),
            rounds: r.rounds,
        })
        .collect())
}
