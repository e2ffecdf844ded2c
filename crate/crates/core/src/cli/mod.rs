//! Command-line front end. Every subcommand takes `--seed` and `--config`;
//! a config file holds `key=value` lines named after the long flags, and
//! flags given on the command line win.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure. `compare`
//! additionally exits with 1 when the difference is not significant.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::RunManifest;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ctxnmt", version, about = "Context-aware NMT with a gated context encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest raw pairs, filter, attach context, learn/apply BPE, write the prepared dataset.
    Prepare(PrepareArgs),
    /// Generate the synthetic gendered language with gold annotations.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Translate a prepared dataset.
    Translate(TranslateArgs),
    /// Corpus BLEU of hypotheses against references.
    Bleu(BleuArgs),
    /// Paired bootstrap test of system B against system A.
    Compare(CompareArgs),
    /// Write head-averaged source→context attention for a dataset.
    DumpAttention(DumpArgs),
    /// Analyses over an attention dump.
    Analyze(AnalyzeArgs),
    /// Pronoun-focused test subsets and gender split.
    BuildTestset(BuildTestsetArgs),
    /// Finite-difference gradient check of a tiny model.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// key=value file mirroring the long flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Previous,
    Next,
    None,
    Shuffled,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Raw tab-separated pairs: movie_id, start, end, overlap, source, target.
    #[arg(long)]
    pub raw: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::data::DEFAULT_MIN_OVERLAP)]
    pub min_overlap: f64,
    /// Maximum gap in seconds between neighbouring sentences.
    #[arg(long, default_value_t = crate::data::DEFAULT_MAX_GAP_SECONDS)]
    pub max_gap: f64,
    #[arg(long, value_enum, default_value_t = Direction::Previous)]
    pub direction: Direction,
    #[arg(long, default_value_t = 32000)]
    pub src_merges: i64,
    #[arg(long, default_value_t = 32000)]
    pub tgt_merges: i64,
    /// Reuse `src.bpe`/`tgt.bpe` from an earlier prepare run instead of learning.
    #[arg(long)]
    pub bpe_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20000)]
    pub size: usize,
    #[arg(long, default_value_t = 40)]
    pub nouns: usize,
    #[arg(long, default_value_t = 0.5)]
    pub distractor_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContextArg {
    /// Context-agnostic baseline.
    None,
    /// Gated context encoder, previous-sentence context.
    Prev,
    /// Gated context encoder, next-sentence context.
    Next,
    /// Gated context encoder trained on shuffled contexts.
    Shuffled,
    /// Concatenation baseline.
    Concat,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prepared training data.
    #[arg(long)]
    pub data: PathBuf,
    /// Prepared development data for checkpoint selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Output directory for checkpoints, vocabularies and the metrics log.
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabularies; built from the training data when absent.
    #[arg(long)]
    pub src_vocab: Option<PathBuf>,
    #[arg(long)]
    pub tgt_vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ContextArg::Prev)]
    pub context_mode: ContextArg,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    #[arg(long, default_value_t = 512)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2048)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.1)]
    pub label_smoothing: f64,
    #[arg(long, default_value_t = 256)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.98)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 4000)]
    pub warmup_steps: usize,
    /// Source tokens per batch.
    #[arg(long, default_value_t = 5000)]
    pub token_budget: usize,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: usize,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Multiplier on the learning-rate schedule.
    #[arg(long, default_value_t = 1.0)]
    pub lr_scale: f64,
    /// Stop after this many evaluations without dev-loss improvement.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub src_vocab: PathBuf,
    #[arg(long)]
    pub tgt_vocab: PathBuf,
    /// Prepared data; the target column is ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Hypotheses, one detokenized sentence per line.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::transformer::DEFAULT_BEAM_WIDTH)]
    pub beam: usize,
    /// Greedy decoding (same as --beam 1).
    #[arg(long)]
    pub greedy: bool,
    #[arg(long, default_value_t = 100)]
    pub max_out: usize,
    /// Permute the contexts across the dataset with --seed before translating.
    #[arg(long)]
    pub shuffle_contexts: bool,
}

#[derive(Debug, Args)]
pub struct BleuArgs {
    #[command(flatten)]
    pub common: Common,
    /// Hypotheses, one sentence per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References: plain lines, or a prepared file (its target column is used).
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// System A (the baseline).
    #[arg(long)]
    pub hyp_a: PathBuf,
    /// System B (tested for being better than A).
    #[arg(long)]
    pub hyp_b: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub src_vocab: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    UsefulMass,
    TopWords,
    Curves,
    Agreement,
    Confusion,
    Heatmap,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(value_enum)]
    pub kind: Analysis,
    /// Attention dump.
    #[arg(long)]
    pub dump: PathBuf,
    /// Gold annotations (agreement, confusion).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Output file (or directory for curves).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra punctuation tokens, one per line (replaces the bundled list).
    #[arg(long)]
    pub punctuation: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value_t = crate::analysis::MULTI_NOUN)]
    pub min_nouns: usize,
    /// Source length of the position cohort; the largest cohort when absent.
    #[arg(long)]
    pub cohort_length: Option<usize>,
    /// Hypotheses and references for the BLEU-by-length curve.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Picks of another system: `example_id<TAB>index` or `example_id<TAB>-`.
    #[arg(long)]
    pub other_picks: Option<PathBuf>,
    /// Name of the other system in the confusion table.
    #[arg(long, default_value = "other")]
    pub other_name: String,
    /// Example to draw (heatmap); the first record when absent.
    #[arg(long)]
    pub example_id: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildTestsetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated pronoun filter; empty keeps every pronoun.
    #[arg(long, default_value = "", value_delimiter = ',')]
    pub pronouns: Vec<String>,
    #[arg(long)]
    pub require_noun: bool,
    #[arg(long, default_value_t = 0)]
    pub min_nouns: usize,
    /// Also write one subset per gender.
    #[arg(long)]
    pub split_gender: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of model seeds, starting at --seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = ContextArg::Prev)]
    pub context_mode: ContextArg,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Appends `--key value` for every config entry whose flag is not already on
/// the command line. `true`/`false` values toggle switches.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let text = fs::read_to_string(&path)?;
    let present = |flag: &str| {
        args.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        })
    };
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: "expected key=value".into(),
        })?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        if flag == "--config" || present(&flag) {
            continue;
        }
        match value.trim() {
            "true" => extra.push(OsString::from(flag)),
            "false" => {}
            v => {
                extra.push(OsString::from(flag));
                extra.push(OsString::from(v));
            }
        }
    }
    let mut out = args;
    out.extend(extra);
    Ok(out)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
