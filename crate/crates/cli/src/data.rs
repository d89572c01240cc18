//! Data-preparation stages: ingest, consolidate, label, split, and the
//! synthetic corpus writer.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use iul_core::consolidation::{consolidate as merge, report, ConsolidatedExcerpt};
use iul_core::corpus::{filter_short, load_corpus, CorpusKind, RawExcerpt, RowError};
use iul_core::digest::FieldHasher;
use iul_core::experiment::stratification_samples;
use iul_core::jsonl::{read_jsonl, to_jsonl_string};
use iul_core::labeling::{build_labeled_set, read_labeled_set, LabelInputs, LabeledRecord, Lexicon};
use iul_core::splitting::build_fold_plan;
use iul_core::synth::{generate, SynthConfig};
use iul_core::taxonomy::Subcategory;

use crate::config::{LabelConfig, RunConfig, SplitConfig};
use crate::error::{Context, ErrorKind, StageError, StageResult};
use crate::manifest::{StageRun, Workspace};

pub const ANNOTATED: &str = "ingest/annotated.jsonl";
pub const POOL: &str = "ingest/pool.jsonl";
pub const CONSOLIDATED: &str = "consolidate/consolidated.jsonl";
pub const LABELED: &str = "label/labeled.jsonl";
pub const LABEL_DIR: &str = "label";
pub const FOLD_PLAN: &str = "split/fold_plan.json";
pub const SPLIT_DIR: &str = "split";

#[derive(Debug, Serialize)]
struct FileError<'a> {
    file: &'a str,
    line: usize,
    message: &'a str,
}

pub fn read_raw(path: &Path) -> StageResult<Vec<RawExcerpt>> {
    read_jsonl(path).or_kind(ErrorKind::Data, "reading excerpts")
}

pub fn read_labeled(ws: &Workspace) -> StageResult<Vec<LabeledRecord>> {
    let path = ws.require(LABELED, "label")?;
    read_labeled_set(&path).or_kind(ErrorKind::Data, &path.display().to_string())
}

fn load(path: &Path, kind: CorpusKind) -> StageResult<(Vec<RawExcerpt>, Vec<RowError>)> {
    if !path.exists() {
        return Err(StageError::missing(format!("corpus {} does not exist", path.display())));
    }
    let loaded = load_corpus(path, kind).or_kind(ErrorKind::Io, "loading corpus")?;
    for e in &loaded.errors {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    Ok((loaded.excerpts, loaded.errors))
}

pub fn ingest(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let annotated_path = cfg
        .paths
        .annotated
        .as_deref()
        .ok_or_else(|| StageError::config("no annotated corpus: set paths.annotated or pass --annotated"))?;
    let mut run = StageRun::new(ws, "ingest", "ingest", &json!({ "pool": cfg.paths.pool.is_some() }))?;
    run.input_file("annotated", annotated_path)?;

    let (annotated, annotated_errors) = load(annotated_path, CorpusKind::Annotated)?;
    let loaded = annotated.len();
    let annotated = filter_short(annotated);
    run.fact("annotated_rows", annotated.len());
    run.fact("annotated_short", loaded - annotated.len());
    run.write("annotated.jsonl", to_jsonl_string(&annotated))?;

    let mut errors: Vec<FileError> = annotated_errors
        .iter()
        .map(|e| FileError { file: "annotated", line: e.line, message: &e.message })
        .collect();
    let pool_errors;
    let mut pool_rows = 0;
    match cfg.paths.pool.as_deref() {
        Some(pool_path) => {
            run.input_file("pool", pool_path)?;
            let (pool, errs) = load(pool_path, CorpusKind::Pool)?;
            pool_errors = errs;
            let pool = filter_short(pool);
            pool_rows = pool.len();
            run.write("pool.jsonl", to_jsonl_string(&pool))?;
            errors.extend(pool_errors.iter().map(|e| FileError { file: "pool", line: e.line, message: &e.message }));
        }
        None => {
            let stale = ws.path(POOL);
            if stale.exists() {
                fs::remove_file(&stale).or_kind(ErrorKind::Io, &stale.display().to_string())?;
            }
        }
    }
    run.fact("pool_sentences", pool_rows);
    run.fact("row_errors", errors.len());
    run.write("errors.jsonl", to_jsonl_string(&errors))?;
    run.finish()?;
    println!(
        "ingest: {} annotated excerpts ({} too short), {} pool sentences, {} row errors",
        annotated.len(),
        loaded - annotated.len(),
        pool_rows,
        errors.len()
    );
    Ok(())
}

pub fn consolidate(ws: &Workspace) -> StageResult<()> {
    let path = ws.require(ANNOTATED, "ingest")?;
    let mut run = StageRun::new(ws, "consolidate", "consolidate", &json!({}))?;
    run.input_file("annotated", &path)?;
    let raw = read_raw(&path)?;
    let merged = merge(&raw);
    run.write("consolidated.jsonl", to_jsonl_string(&merged))?;
    run.write("groups.jsonl", to_jsonl_string(&report(&merged)))?;
    run.fact("groups", merged.len());
    run.finish()?;
    println!("consolidate: {} excerpts merged into {} groups", raw.len(), merged.len());
    Ok(())
}

fn lexicon_digest(lexicon: &Lexicon) -> String {
    let mut h = FieldHasher::new();
    for c in Subcategory::ALL {
        h.field(c.slug());
        for t in lexicon.terms(c) {
            h.field(t);
        }
    }
    h.field("age_patterns");
    for p in lexicon.age_patterns() {
        h.field(p.as_str());
    }
    h.finish()
}

#[derive(Serialize)]
struct LabelStageConfig<'a> {
    label: &'a LabelConfig,
    lexicon: String,
}

pub fn label(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let annotated_path = ws.require(ANNOTATED, "ingest")?;
    let consolidated_path = ws.require(CONSOLIDATED, "consolidate")?;
    let pool_path = ws.path(POOL);
    let lexicon = match &cfg.paths.lexicons {
        Some(dir) => Lexicon::load_dir(dir).or_kind(ErrorKind::Config, "loading lexicons")?,
        None => Lexicon::seed(),
    };
    let stage_cfg = LabelStageConfig { label: &cfg.label, lexicon: lexicon_digest(&lexicon) };
    let mut run = StageRun::new(ws, "label", LABEL_DIR, &stage_cfg)?.with_seed(cfg.label.seed);
    run.input_file("annotated", &annotated_path)?;
    run.input_file("consolidated", &consolidated_path)?;

    let annotated = read_raw(&annotated_path)?;
    let consolidated: Vec<ConsolidatedExcerpt> =
        read_jsonl(&consolidated_path).or_kind(ErrorKind::Data, "reading consolidated excerpts")?;
    let pool = if pool_path.exists() {
        run.input_file("pool", &pool_path)?;
        read_raw(&pool_path)?
    } else {
        log::warn!("no pool sentences were ingested; the labeled set will have no extracted negatives");
        Vec::new()
    };
    let inputs = LabelInputs {
        annotated: &annotated,
        pool: &pool,
        lexicon: &lexicon,
        scheme: &cfg.label.scheme,
        caps: cfg.label.caps()?,
        seed: cfg.label.seed,
    };
    let (rows, counts) = build_labeled_set(&consolidated, &inputs).or_kind(ErrorKind::Data, "labeling")?;
    if counts.positive == 0 {
        return Err(StageError::data("the labeled set has no positive excerpts; check label.scheme against the corpus codes"));
    }
    run.fact("en_extracted", pool_path.exists());
    run.fact("counts", counts);
    run.write("labeled.jsonl", to_jsonl_string(&rows))?;
    let mut counts_json = serde_json::to_string_pretty(&counts).expect("counts serialize");
    counts_json.push('\n');
    run.write("counts.json", counts_json)?;
    run.finish()?;
    println!(
        "label: {} positive, {} annotated negative, {} extracted negative ({} dropped as duplicates)",
        counts.positive, counts.annotated_negative, counts.extracted_negative, counts.dropped
    );
    Ok(())
}

pub fn split(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let labeled_path = ws.require(LABELED, "label")?;
    let SplitConfig { k, val_fraction, seed } = cfg.split;
    let mut run = StageRun::new(ws, "split", SPLIT_DIR, &cfg.split)?.with_seed(seed);
    run.input_file("labeled", &labeled_path)?;
    let rows = read_labeled(ws)?;
    let plan = build_fold_plan(&stratification_samples(&rows), k, val_fraction, seed)
        .or_kind(ErrorKind::Config, "building fold plan")?;
    run.fact("label_digest", &plan.digest);
    run.write("fold_plan.json", plan.to_json())?;
    run.finish()?;
    let sizes: Vec<String> = plan.folds.iter().map(|f| f.test.len().to_string()).collect();
    println!("split: {k} folds over {} excerpts, test sizes {}", rows.len(), sizes.join("/"));
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    excerpt_id: String,
    subcategories: Vec<Subcategory>,
}

pub fn synth(dir: &Path, sentences: Option<usize>, seed: Option<u64>) -> StageResult<()> {
    let mut cfg = SynthConfig::default();
    cfg.sentences = sentences.unwrap_or(cfg.sentences);
    cfg.seed = seed.unwrap_or(cfg.seed);
    let corpus = generate(&cfg);
    fs::create_dir_all(dir).or_kind(ErrorKind::Io, &dir.display().to_string())?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).or_kind(ErrorKind::Io, &path.display().to_string())
    };
    write("annotated.jsonl", to_jsonl_string(&corpus.annotated))?;
    write("pool.jsonl", to_jsonl_string(&corpus.pool))?;
    let truth: BTreeMap<&String, Vec<Subcategory>> = corpus
        .truth
        .iter()
        .map(|(id, bits)| (id, Subcategory::ALL.into_iter().filter(|c| bits[c.index()]).collect()))
        .collect();
    let rows: Vec<TruthRow> = truth
        .into_iter()
        .map(|(id, subcategories)| TruthRow { excerpt_id: id.clone(), subcategories })
        .collect();
    write("truth.jsonl", to_jsonl_string(&rows))?;
    println!(
        "synth: {} annotated rows, {} pool pages written to {}",
        corpus.annotated.len(),
        corpus.pool.len(),
        dir.display()
    );
    Ok(())
}
