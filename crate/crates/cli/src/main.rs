//! `iul`: runs the IUL detection pipeline stage by stage and serves the
//! review queue.

mod config;
mod data;
mod error;
mod llm_eval;
mod manifest;
mod models;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iul_core::experiment::{NegativeSet, Strategy};
use iul_core::llm::{PromptMode, UnparsedPolicy};

use config::RunConfig;
use error::StageResult;
use manifest::Workspace;

#[derive(Debug, Parser)]
#[command(name = "iul", version, about = "Detect inappropriate use of language in medical-education text")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all stage artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, clean and length-filter the annotated and pool corpora.
    Ingest(IngestArgs),
    /// Merge overlapping annotations into single excerpts.
    Consolidate,
    /// Build the POSITIVE / AN / EN labeled set.
    Label(LabelArgs),
    /// Build the stratified cross-validation plan.
    Split(SplitArgs),
    /// Train the selected strategies on every fold.
    Train(TrainArgs),
    /// Predict held-out folds, or score a new corpus.
    Predict(PredictArgs),
    /// Compute metric reports from predictions.
    Evaluate(EvalArgs),
    /// Prompt a chat-completion model for every labeled excerpt.
    LlmEval(LlmArgs),
    /// Serve the expert review queue over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic annotated corpus and page pool.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    annotated: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    lexicons: Option<PathBuf>,
    /// Extracted-negative cap applied to every subcategory.
    #[arg(long)]
    en_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
struct Selection {
    /// Strategy to run; repeat for several. Defaults to the configured list.
    #[arg(long = "strategy", value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    /// AN, EN or AN+EN.
    #[arg(long, value_parser = parse_negatives)]
    negatives: Option<NegativeSet>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    selection: Selection,
    /// `linear` or `finetune`.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hashed feature dimension (power of two).
    #[arg(long)]
    dimension: Option<u32>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    selection: Selection,
    /// Score this corpus instead of the held-out folds.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Treat `--corpus` as page text to split into sentences.
    #[arg(long, requires = "corpus")]
    pages: bool,
    /// Fold whose models score `--corpus`.
    #[arg(long, default_value_t = 0, requires = "corpus")]
    fold: usize,
    /// Score `--corpus` with the external scorer named by IUL_SCORER_URL.
    #[arg(long, requires = "corpus")]
    external: bool,
    /// Heads the external scorer returns, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "iul", requires = "external")]
    heads: Vec<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    selection: Selection,
}

#[derive(Debug, Args)]
struct LlmArgs {
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// definitions, shots or both.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<PromptMode>,
    /// How unparsed answers count: positive, negative or exclude.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<UnparsedPolicy>,
    #[arg(long, value_parser = parse_negatives)]
    negatives: Option<NegativeSet>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    retries: Option<u32>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Enqueue every prediction, not only flagged ones.
    #[arg(long)]
    audit_mode: bool,
    /// Queue file written by `iul predict` to enqueue before serving.
    #[arg(long)]
    enqueue: Vec<PathBuf>,
    /// Enqueue and exit without serving.
    #[arg(long)]
    no_serve: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving annotated.jsonl, pool.jsonl and truth.jsonl.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: iul_core::experiment::ExperimentError| e.to_string())
}

fn parse_negatives(s: &str) -> Result<NegativeSet, String> {
    s.parse().map_err(|e: iul_core::experiment::ExperimentError| e.to_string())
}

fn parse_mode(s: &str) -> Result<PromptMode, String> {
    s.parse().map_err(|e: iul_core::llm::LlmError| e.to_string())
}

fn parse_policy(s: &str) -> Result<UnparsedPolicy, String> {
    s.parse().map_err(|e: iul_core::llm::LlmError| e.to_string())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Consolidate => "consolidate",
            Command::Label(_) => "label",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::LlmEval(_) => "llm-eval",
            Command::Serve(_) => "serve",
            Command::Synth(_) => "synth",
        }
    }
}

fn apply_selection(cfg: &mut RunConfig, sel: &Selection) {
    if !sel.strategies.is_empty() {
        cfg.train.strategies = sel.strategies.clone();
    }
    if let Some(n) = sel.negatives {
        cfg.train.negatives = n;
    }
}

fn run(cli: Cli) -> StageResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.paths.out = out;
    }
    let ws = Workspace::new(cfg.paths.out.clone());
    match cli.command {
        Command::Ingest(a) => {
            cfg.paths.annotated = a.annotated.or(cfg.paths.annotated);
            cfg.paths.pool = a.pool.or(cfg.paths.pool);
            data::ingest(&ws, &cfg)
        }
        Command::Consolidate => data::consolidate(&ws),
        Command::Label(a) => {
            cfg.paths.lexicons = a.lexicons.or(cfg.paths.lexicons);
            cfg.label.en_cap = a.en_cap.or(cfg.label.en_cap);
            cfg.label.seed = a.seed.unwrap_or(cfg.label.seed);
            data::label(&ws, &cfg)
        }
        Command::Split(a) => {
            cfg.split.k = a.k.unwrap_or(cfg.split.k);
            cfg.split.val_fraction = a.val_fraction.unwrap_or(cfg.split.val_fraction);
            cfg.split.seed = a.seed.unwrap_or(cfg.split.seed);
            data::split(&ws, &cfg)
        }
        Command::Train(a) => {
            apply_selection(&mut cfg, &a.selection);
            let t = &mut cfg.train;
            if let Some(p) = a.profile {
                t.profile = p;
            }
            t.learning_rate = a.lr.or(t.learning_rate);
            t.batch_size = a.batch_size.or(t.batch_size);
            t.patience = a.patience.or(t.patience);
            t.max_epochs = a.max_epochs.or(t.max_epochs);
            t.seed = a.seed.unwrap_or(t.seed);
            t.dimension = a.dimension.unwrap_or(t.dimension);
            models::train(&ws, &cfg)
        }
        Command::Predict(a) => {
            apply_selection(&mut cfg, &a.selection);
            match a.corpus {
                None => models::predict(&ws, &cfg),
                Some(corpus) => {
                    let target = models::CorpusTarget { path: corpus, pages: a.pages, fold: a.fold };
                    if a.external {
                        models::predict_external(&ws, &target, a.heads)
                    } else {
                        models::predict_corpus(&ws, &cfg, &target)
                    }
                }
            }
        }
        Command::Evaluate(a) => {
            apply_selection(&mut cfg, &a.selection);
            models::evaluate(&ws, &cfg)
        }
        Command::LlmEval(a) => {
            let l = &mut cfg.llm;
            l.base_url = a.base_url.or(l.base_url.take());
            if let Some(m) = a.model {
                l.model = m;
            }
            l.mode = a.mode.unwrap_or(l.mode);
            l.policy = a.policy.unwrap_or(l.policy);
            l.negatives = a.negatives.unwrap_or(l.negatives);
            l.concurrency = a.concurrency.unwrap_or(l.concurrency);
            l.retries = a.retries.unwrap_or(l.retries);
            llm_eval::run(&ws, &cfg)
        }
        Command::Serve(a) => {
            let r = &mut cfg.review;
            r.store = a.store.or(r.store.take());
            if let Some(b) = a.bind {
                r.bind = b;
            }
            r.audit_mode |= a.audit_mode;
            serve::run(&ws, &cfg, &a.enqueue, !a.no_serve)
        }
        Command::Synth(a) => data::synth(&a.dir, a.sentences, a.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json(stage));
            ExitCode::from(1)
        }
    }
}
