//! Command-line front end: argument parsing, validation and dispatch.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors (reported
//! before any side effect), 2 on runtime errors.

mod eval;
mod train;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::data::{AugmentPolicy, ClipVariant, Split};
use crate::error::KwsError;
use crate::train::{Augmenter, TrainConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] KwsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Marks a library error as a validation failure (exit code 1).
trait Validation<T> {
    fn invalid(self) -> CliResult<T>;
}

impl<T> Validation<T> for crate::Result<T> {
    fn invalid(self) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file", path.display())))
    }
}

fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such directory", path.display())))
    }
}

fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(usage(format!("{}: output directory does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "qbe-kws", version, about = "Query-by-example keyword spotting")]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads for feature extraction and inference.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut 1 s keyword clips from an aligned manifest, or generate the toy corpus.
    Prepare(PrepareArgs),
    /// Cross-entropy pre-training of the embedding network.
    TrainClassifier(TrainClassifierArgs),
    /// Circle-loss fine-tuning of conv5 and fc.
    FinetuneCircle(FinetuneCircleArgs),
    /// Train the phoneme-to-embedding regressor.
    TrainP2e(TrainP2eArgs),
    /// Fine-tune the 3-class (target, unknown, background) baseline.
    FinetuneBaseline(FinetuneBaselineArgs),
    /// Build a keyword profile from example recordings or phonemes.
    Enroll(EnrollArgs),
    /// Detect enrolled keywords in a recording.
    Spot(SpotArgs),
    /// Few-shot classification protocol (EER and top-1 per keyword).
    EvalClass(EvalClassArgs),
    /// Streaming protocol: FNR at a false-alarm budget.
    EvalStream(EvalStreamArgs),
    /// Export DET points from classification scores or scored streams.
    ExportDet(ExportDetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Silence,
    Context,
    Both,
}

impl VariantArg {
    fn variants(self) -> Vec<ClipVariant> {
        match self {
            Self::Silence => vec![ClipVariant::Silence],
            Self::Context => vec![ClipVariant::Context],
            Self::Both => vec![ClipVariant::Silence, ClipVariant::Context],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            Self::Train => Some(Split::Train),
            Self::Val => Some(Split::Val),
            Self::All => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Aligned word manifest (JSONL).
    #[arg(long, conflicts_with = "toy_words")]
    pub manifest: Option<PathBuf>,
    /// Clip variant(s) to cut from the manifest.
    #[arg(long, value_enum, default_value_t = VariantArg::Silence)]
    pub variant: VariantArg,
    /// Generate a synthetic corpus with this many words instead.
    #[arg(long)]
    pub toy_words: Option<usize>,
    /// Clips per toy word.
    #[arg(long, default_value_t = 100)]
    pub toy_clips: usize,
    /// Clips per toy word assigned to the validation split.
    #[arg(long, default_value_t = 25)]
    pub toy_val: usize,
    /// Sound units per toy word.
    #[arg(long, default_value_t = 4)]
    pub toy_units: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    /// Plain-text `key = value` training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, repeatable; wins over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory for per-epoch checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Training report (JSONL).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl TrainOpts {
    /// Preset, then config file, then `--set`, then the global seed.
    fn resolve(&self, mut cfg: TrainConfig, seed: u64, quiet: bool) -> CliResult<TrainConfig> {
        if let Some(p) = &self.config {
            require_file(p)?;
            cfg.apply_file(p).invalid()?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim()).invalid()?;
        }
        cfg.seed = seed;
        cfg.progress = !quiet;
        cfg.checkpoint_dir = self.checkpoint_dir.clone();
        cfg.validate().invalid()?;
        if let Some(r) = &self.report {
            require_parent(r)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct AugmentOpts {
    /// Train on clean clips.
    #[arg(long)]
    pub no_augment: bool,
    /// Background speech WAVs.
    #[arg(long)]
    pub speech_dir: Option<PathBuf>,
    #[arg(long)]
    pub music_dir: Option<PathBuf>,
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
    /// Room impulse response WAVs.
    #[arg(long)]
    pub rir_dir: Option<PathBuf>,
}

impl AugmentOpts {
    fn augmenter(&self) -> CliResult<Option<Augmenter>> {
        if self.no_augment {
            return Ok(None);
        }
        for d in [&self.speech_dir, &self.music_dir, &self.noise_dir, &self.rir_dir].into_iter().flatten() {
            require_dir(d)?;
        }
        let policy = AugmentPolicy {
            speech_dir: self.speech_dir.clone(),
            music_dir: self.music_dir.clone(),
            noise_dir: self.noise_dir.clone(),
            rir_dir: self.rir_dir.clone(),
            ..AugmentPolicy::default()
        };
        Augmenter::new(policy).invalid().map(Some)
    }
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Prepared clip directory.
    #[arg(long)]
    pub clips: PathBuf,
    /// Output checkpoint (backbone and head).
    #[arg(long)]
    pub out: PathBuf,
    /// Stage widths conv1..conv5.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 16, 32, 64, 128])]
    pub channels: Vec<usize>,
    /// Residual blocks in conv2..conv5.
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 6, 3])]
    pub blocks: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    pub embedding_dim: usize,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub augment: AugmentOpts,
}

#[derive(Debug, Args)]
pub struct FinetuneCircleArgs {
    /// Pre-trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub clips: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub augment: AugmentOpts,
}

#[derive(Debug, Args)]
pub struct TrainP2eArgs {
    /// Embedding checkpoint that provides the regression targets.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub clips: PathBuf,
    /// Pronunciation lexicon (`WORD PH1 PH2 ...`).
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of words held out for validation.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args)]
pub struct FinetuneBaselineArgs {
    /// Pre-trained classification checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Clip directory providing target examples and the non-target bank.
    #[arg(long)]
    pub clips: PathBuf,
    #[arg(long)]
    pub keyword: String,
    /// Target examples drawn from the training split.
    #[arg(long, default_value_t = 5)]
    pub shots: usize,
    /// Background noise WAVs; seeded synthetic noise when omitted.
    #[arg(long)]
    pub background_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub augment: AugmentOpts,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub keyword: String,
    /// Example recordings.
    pub examples: Vec<PathBuf>,
    /// Phoneme sequence such as "HH AH0 L OW1" (requires --p2e).
    #[arg(long, requires = "p2e", conflicts_with = "examples")]
    pub phonemes: Option<String>,
    #[arg(long)]
    pub p2e: Option<PathBuf>,
    /// Profile store to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Add to the profiles already in --out instead of replacing the file.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Debug, Args)]
pub struct StreamOpts {
    /// Window length in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    /// Hop between windows in seconds.
    #[arg(long, default_value_t = 0.1)]
    pub stride: f64,
    /// Dead time after a detection, per keyword, in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub suppression: f64,
}

#[derive(Debug, Args)]
pub struct SpotArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub audio: PathBuf,
    /// Detect when similarity is strictly above this value.
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    pub threshold: f64,
    #[command(flatten)]
    pub stream: StreamOpts,
    /// Per-window score trace (CSV).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalClassArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub clips: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    pub split: SplitArg,
    /// Enrollment examples per keyword.
    #[arg(long, default_value_t = 5)]
    pub shots: usize,
    /// Per-keyword results (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pooled target/non-target scores (CSV) for export-det.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalStreamArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub clips: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    pub split: SplitArg,
    /// Keywords to evaluate (default: every word in the split).
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub shots: usize,
    /// Keyword clips inserted per stream.
    #[arg(long, default_value_t = 20)]
    pub targets: usize,
    /// Filler clips of other words inserted per stream.
    #[arg(long, default_value_t = 200)]
    pub fillers: usize,
    /// False alarms per hour budget.
    #[arg(long, default_value_t = 1.0)]
    pub target_fa: f64,
    /// Detection-to-truth matching tolerance in seconds.
    #[arg(long, default_value_t = crate::eval::MATCH_TOLERANCE)]
    pub tolerance: f64,
    #[command(flatten)]
    pub stream: StreamOpts,
    /// Scored streams (JSON) for export-det.
    #[arg(long)]
    pub streams_out: Option<PathBuf>,
    /// Summary (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportDetArgs {
    /// Scores CSV written by eval-class.
    #[arg(long, conflicts_with = "streams", required_unless_present = "streams")]
    pub scores: Option<PathBuf>,
    /// Scored streams written by eval-stream.
    #[arg(long)]
    pub streams: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub suppression: f64,
    #[arg(long, default_value_t = crate::eval::MATCH_TOLERANCE)]
    pub tolerance: f64,
    /// DET points (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

/// Global options shared by every verb.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    fn progress(&self, line: &str) {
        if !self.quiet {
            eprintln!("{line}");
        }
    }
}

/// Parses `args` (including the program name) and runs the verb.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // A pool may already exist when several commands run in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Context {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Prepare(a) => train::prepare(a, &ctx),
        Command::TrainClassifier(a) => train::train_classifier(a, &ctx),
        Command::FinetuneCircle(a) => train::finetune_circle(a, &ctx),
        Command::TrainP2e(a) => train::train_p2e(a, &ctx),
        Command::FinetuneBaseline(a) => train::finetune_baseline(a, &ctx),
        Command::Enroll(a) => eval::enroll(a, &ctx),
        Command::Spot(a) => eval::spot(a, &ctx),
        Command::EvalClass(a) => eval::eval_class(a, &ctx),
        Command::EvalStream(a) => eval::eval_stream(a, &ctx),
        Command::ExportDet(a) => eval::export_det(a, &ctx),
    }
}
