//! Model stages: train, predict, evaluate.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use iul_core::corpus::{filter_short, load_corpus, CorpusKind, RawExcerpt};
use iul_core::evaluation::{folds_csv, render_table, MetricsReport};
use iul_core::experiment::{
    evaluate_predictions, predict_fold, predict_texts, stratification_samples, train_fold, ExperimentData,
    FoldModels, HeadOutputs, NegativeSet, Prediction, Strategy,
};
use iul_core::jsonl::{read_jsonl, to_jsonl_string};
use iul_core::labeling::{LabelSource, LabeledRecord, Lexicon};
use iul_core::modeling::{is_positive, Featurizer, ScoreVector, Scorer, TrainConfig};
use iul_core::review::{FlaggedPrediction, LabelBits};
use iul_core::splitting::{label_matrix_digest, FoldPlan};
use iul_core::taxonomy::Subcategory;
use iul_service::{HttpScorer, ScorerConfig};

use crate::config::RunConfig;
use crate::data::{read_labeled, read_raw, ANNOTATED, FOLD_PLAN, LABELED, LABEL_DIR, POOL, SPLIT_DIR};
use crate::error::{Context, ErrorKind, StageError, StageResult};
use crate::manifest::{file_digest, Manifest, StageRun, Workspace};

const PREDICTIONS: &str = "predictions.jsonl";
/// Every prediction in review-queue form; the queue keeps flagged rows
/// unless it runs in audit mode.
const QUEUE: &str = "queue.jsonl";

fn run_name(strategy: Strategy, negatives: NegativeSet) -> String {
    format!("{}_{}", strategy.as_str(), negatives.slug())
}

fn train_dir(strategy: Strategy, negatives: NegativeSet) -> PathBuf {
    Path::new("train").join(run_name(strategy, negatives))
}

fn predict_dir(strategy: Strategy, negatives: NegativeSet) -> PathBuf {
    Path::new("predict").join(run_name(strategy, negatives))
}

fn evaluate_dir(strategy: Strategy, negatives: NegativeSet) -> PathBuf {
    Path::new("evaluate").join(run_name(strategy, negatives))
}

fn strategies(cfg: &RunConfig) -> StageResult<&[Strategy]> {
    if cfg.train.strategies.is_empty() {
        Err(StageError::config("no strategies selected"))
    } else {
        Ok(&cfg.train.strategies)
    }
}

fn load_plan(ws: &Workspace) -> StageResult<FoldPlan> {
    let path = ws.require(FOLD_PLAN, "split")?;
    FoldPlan::load(&path).or_kind(ErrorKind::Data, &path.display().to_string())
}

/// The plan must have been built from the current labeled set.
fn check_plan(plan: &FoldPlan, records: &[LabeledRecord]) -> StageResult<()> {
    if plan.digest != label_matrix_digest(&stratification_samples(records)) {
        return Err(StageError::stale("the fold plan was built from a different labeled set; rerun `iul split`"));
    }
    Ok(())
}

/// Every selected negative source must be present in the labeled set.
fn check_negatives(ws: &Workspace, records: &[LabeledRecord], negatives: NegativeSet) -> StageResult<()> {
    let label = ws.manifest(LABEL_DIR, "label")?;
    let extracted = label.facts.get("en_extracted").and_then(|v| v.as_bool()).unwrap_or(false);
    let count = |s: LabelSource| records.iter().filter(|r| r.source == s).count();
    if negatives.includes(LabelSource::En) {
        if !extracted {
            return Err(StageError::missing(format!(
                "negatives {negatives} need extracted negatives, but `iul label` ran without a pool corpus; \
                 set paths.pool, then rerun ingest and label"
            )));
        }
        if count(LabelSource::En) == 0 {
            return Err(StageError::missing(format!(
                "negatives {negatives} need extracted negatives, but extraction produced none"
            )));
        }
    }
    if negatives.includes(LabelSource::An) && count(LabelSource::An) == 0 {
        return Err(StageError::data(format!("negatives {negatives} need annotated negatives, but the labeled set has none")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainStageConfig {
    strategy: Strategy,
    negatives: NegativeSet,
    train: TrainConfig,
    featurizer: Featurizer,
}

pub fn train(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let labeled_path = ws.require(LABELED, "label")?;
    let plan_path = ws.require(FOLD_PLAN, "split")?;
    let records = read_labeled(ws)?;
    let plan = load_plan(ws)?;
    check_plan(&plan, &records)?;
    let negatives = cfg.train.negatives;
    check_negatives(ws, &records, negatives)?;
    let train_cfg = cfg.train.train_config()?;
    let featurizer = cfg.train.featurizer()?;
    let data = ExperimentData::new(records, featurizer.clone());

    for &strategy in strategies(cfg)? {
        let stage_cfg =
            TrainStageConfig { strategy, negatives, train: train_cfg.clone(), featurizer: featurizer.clone() };
        let mut run = StageRun::new(ws, "train", train_dir(strategy, negatives), &stage_cfg)?.with_seed(train_cfg.seed);
        run.input_file("labeled", &labeled_path)?;
        run.input_file("fold_plan", &plan_path)?;
        let trained: Vec<StageResult<FoldModels>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..plan.folds.len())
                .map(|fold| {
                    let (data, plan, train_cfg) = (&data, &plan, &train_cfg);
                    s.spawn(move || {
                        train_fold(data, plan, fold, strategy, negatives, train_cfg)
                            .or_kind(ErrorKind::Data, &format!("training {strategy}"))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        let mut epochs = Vec::new();
        for (fold, models) in trained.into_iter().enumerate() {
            let models = models?;
            let fold_dir = format!("fold{fold}");
            let names = models.save(run.dir().join(&fold_dir)).or_kind(ErrorKind::Io, "saving models")?;
            for name in names {
                run.record(Path::new(&fold_dir).join(name))?;
            }
            epochs.push(models.files().iter().filter_map(|(_, m)| m.metadata.as_ref().map(|md| md.epochs_run)).max());
        }
        run.finish()?;
        println!("train: {strategy} on {negatives}, {} folds", plan.folds.len());
        log::info!("train: {strategy} epochs per fold {epochs:?}");
    }
    Ok(())
}

fn load_fold_models(ws: &Workspace, strategy: Strategy, negatives: NegativeSet, fold: usize) -> StageResult<FoldModels> {
    let dir = ws.path(train_dir(strategy, negatives)).join(format!("fold{fold}"));
    FoldModels::load(strategy, &dir).or_kind(ErrorKind::MissingArtifact, &format!("loading {}", dir.display()))
}

fn featurizer_of(manifest: &Manifest) -> StageResult<Featurizer> {
    let cfg: TrainStageConfig =
        serde_json::from_value(manifest.config.clone()).or_kind(ErrorKind::Data, "reading train manifest")?;
    Ok(cfg.featurizer)
}

/// Where each ingested excerpt came from.
fn provenance(ws: &Workspace) -> StageResult<HashMap<String, (String, u32)>> {
    let mut out = HashMap::new();
    for rel in [ANNOTATED, POOL] {
        let path = ws.path(rel);
        if path.exists() {
            for e in read_raw(&path)? {
                out.insert(e.excerpt_id, (e.document_id, e.page));
            }
        }
    }
    Ok(out)
}

fn label_bits(outputs: &HeadOutputs) -> LabelBits {
    LabelBits {
        y: outputs.flagged() as u8,
        z: Subcategory::ALL.map(|c| outputs.predicted.get(c.slug()).copied().unwrap_or(0)),
    }
}

fn score_vector(scores: &BTreeMap<String, f64>) -> ScoreVector {
    ScoreVector { heads: scores.keys().cloned().collect(), probs: scores.values().copied().collect() }
}

fn queue_row(
    excerpt_id: &str,
    text: &str,
    (document_id, page): (String, u32),
    outputs: &HeadOutputs,
    lexicon: &Lexicon,
) -> FlaggedPrediction {
    let mut matched_terms: Vec<String> =
        Subcategory::ALL.iter().flat_map(|&c| lexicon.matched_terms(text, c)).collect();
    matched_terms.extend(lexicon.matched_age_patterns(text));
    matched_terms.sort();
    matched_terms.dedup();
    FlaggedPrediction {
        excerpt_id: excerpt_id.to_string(),
        document_id,
        page,
        text: text.to_string(),
        scores: score_vector(&outputs.scores),
        predicted: label_bits(outputs),
        matched_terms,
    }
}

pub fn predict(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let records = read_labeled(ws)?;
    let plan = load_plan(ws)?;
    check_plan(&plan, &records)?;
    let negatives = cfg.train.negatives;
    let origin = provenance(ws)?;
    let lexicon = Lexicon::seed();
    let mut data: Option<ExperimentData> = None;

    for &strategy in strategies(cfg)? {
        let train = ws.manifest(train_dir(strategy, negatives), "train")?;
        ws.verify_outputs(&train)?;
        let featurizer = featurizer_of(&train)?;
        if data.as_ref().is_none_or(|d| d.featurizer != featurizer) {
            data = Some(ExperimentData::new(records.clone(), featurizer));
        }
        let data = data.as_ref().expect("just set");
        let mut run = StageRun::new(ws, "predict", predict_dir(strategy, negatives), &json!({ "train": train.config_digest }))?;
        run.input_digest("train", &train.config_digest);
        for (rel, digest) in &train.inputs {
            run.input_digest(rel, digest);
        }
        let mut predictions: Vec<Prediction> = Vec::new();
        for fold in 0..plan.folds.len() {
            let models = load_fold_models(ws, strategy, negatives, fold)?;
            predictions.extend(predict_fold(&models, data, &plan, fold).or_kind(ErrorKind::Data, "predicting")?);
        }
        let queue: Vec<FlaggedPrediction> = predictions
            .iter()
            .map(|p| {
                let outputs = HeadOutputs { scores: p.scores.clone(), predicted: p.predicted.clone() };
                let i = data.position(&p.excerpt_id).expect("predicted rows come from the labeled set");
                let place = origin.get(&p.excerpt_id).cloned().unwrap_or_default();
                queue_row(&p.excerpt_id, &data.records[i].text, place, &outputs, &lexicon)
            })
            .collect();
        let flagged = queue.iter().filter(|q| q.predicted.y == 1).count();
        run.write(PREDICTIONS, to_jsonl_string(&predictions))?;
        run.write(QUEUE, to_jsonl_string(&queue))?;
        run.fact("flagged", flagged);
        run.finish()?;
        println!("predict: {strategy} on {negatives}, {} predictions, {flagged} flagged", predictions.len());
    }
    Ok(())
}

pub struct CorpusTarget {
    pub path: PathBuf,
    /// Split rows into sentences first.
    pub pages: bool,
    pub fold: usize,
}

impl CorpusTarget {
    fn load(&self) -> StageResult<Vec<RawExcerpt>> {
        if !self.path.exists() {
            return Err(StageError::missing(format!("corpus {} does not exist", self.path.display())));
        }
        let kind = if self.pages { CorpusKind::Pool } else { CorpusKind::Annotated };
        let loaded = load_corpus(&self.path, kind).or_kind(ErrorKind::Io, "loading corpus")?;
        for e in &loaded.errors {
            log::warn!("{}:{}: {}", self.path.display(), e.line, e.message);
        }
        Ok(filter_short(loaded.excerpts))
    }

    fn stem(&self) -> String {
        self.path.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned())
    }
}

#[derive(Serialize)]
struct ScoredRow<'a> {
    excerpt_id: &'a str,
    document_id: &'a str,
    page: u32,
    scores: &'a BTreeMap<String, f64>,
    predicted: &'a BTreeMap<String, u8>,
}

fn write_scored(run: &mut StageRun, excerpts: &[RawExcerpt], outputs: &[HeadOutputs]) -> StageResult<usize> {
    let lexicon = Lexicon::seed();
    let rows: Vec<ScoredRow> = excerpts
        .iter()
        .zip(outputs)
        .map(|(e, o)| ScoredRow {
            excerpt_id: &e.excerpt_id,
            document_id: &e.document_id,
            page: e.page,
            scores: &o.scores,
            predicted: &o.predicted,
        })
        .collect();
    let queue: Vec<FlaggedPrediction> = excerpts
        .iter()
        .zip(outputs)
        .map(|(e, o)| queue_row(&e.excerpt_id, &e.text, (e.document_id.clone(), e.page), o, &lexicon))
        .collect();
    let flagged = queue.iter().filter(|q| q.predicted.y == 1).count();
    run.write(PREDICTIONS, to_jsonl_string(&rows))?;
    run.write(QUEUE, to_jsonl_string(&queue))?;
    run.fact("flagged", flagged);
    Ok(flagged)
}

/// Scores a new corpus with one fold's trained models.
pub fn predict_corpus(ws: &Workspace, cfg: &RunConfig, target: &CorpusTarget) -> StageResult<()> {
    let excerpts = target.load()?;
    for &strategy in strategies(cfg)? {
        let negatives = cfg.train.negatives;
        let train = ws.manifest(train_dir(strategy, negatives), "train")?;
        ws.verify_outputs(&train)?;
        let featurizer = featurizer_of(&train)?;
        let models = load_fold_models(ws, strategy, negatives, target.fold)?;
        let dir = predict_dir(strategy, negatives).join(format!("corpus_{}", target.stem()));
        let mut run = StageRun::new(
            ws,
            "predict",
            dir,
            &json!({ "train": train.config_digest, "fold": target.fold, "pages": target.pages }),
        )?;
        run.input_file("corpus", &target.path)?;
        let texts: Vec<&str> = excerpts.iter().map(|e| e.text.as_str()).collect();
        let outputs = predict_texts(&models, &featurizer, &texts).or_kind(ErrorKind::Data, "scoring corpus")?;
        let flagged = write_scored(&mut run, &excerpts, &outputs)?;
        run.finish()?;
        println!("predict: {strategy} fold {} scored {} excerpts, {flagged} flagged", target.fold, excerpts.len());
    }
    Ok(())
}

/// Scores a new corpus with the external scorer backend.
pub fn predict_external(ws: &Workspace, target: &CorpusTarget, heads: Vec<String>) -> StageResult<()> {
    let excerpts = target.load()?;
    let scorer_cfg = ScorerConfig::from_env(heads.clone()).or_kind(ErrorKind::Config, "external scorer")?;
    let scorer = HttpScorer::new(scorer_cfg).or_kind(ErrorKind::Config, "external scorer")?;
    let dir = Path::new("predict").join("external").join(format!("corpus_{}", target.stem()));
    let mut run = StageRun::new(ws, "predict", dir, &json!({ "heads": heads, "pages": target.pages }))?;
    run.input_file("corpus", &target.path)?;
    let texts: Vec<&str> = excerpts.iter().map(|e| e.text.as_str()).collect();
    let scores = scorer.score(&texts).or_kind(ErrorKind::Endpoint, "external scorer")?;
    let outputs: Vec<HeadOutputs> = scores
        .into_iter()
        .map(|sv| {
            let mut o = HeadOutputs::default();
            for (h, p) in sv.heads.iter().zip(sv.probs) {
                o.scores.insert(h.clone(), p);
                o.predicted.insert(h.clone(), is_positive(p) as u8);
            }
            o
        })
        .collect();
    let flagged = write_scored(&mut run, &excerpts, &outputs)?;
    run.finish()?;
    println!("predict: external scorer scored {} excerpts, {flagged} flagged", excerpts.len());
    Ok(())
}

pub fn evaluate(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let labeled_path = ws.require(LABELED, "label")?;
    let records = read_labeled(ws)?;
    let labeled_digest = file_digest(&labeled_path)?;
    let split = ws.manifest(SPLIT_DIR, "split")?;
    ws.verify_outputs(&split)?;
    let negatives = cfg.train.negatives;
    let data = ExperimentData::new(records, Featurizer::with_dimension(2).expect("valid dimension"));

    for &strategy in strategies(cfg)? {
        let train = ws.manifest(train_dir(strategy, negatives), "train")?;
        let predicted = ws.manifest(predict_dir(strategy, negatives), "predict")?;
        ws.verify_outputs(&train)?;
        ws.verify_outputs(&predicted)?;
        if predicted.inputs.get("train") != Some(&train.config_digest) {
            return Err(StageError::stale(format!(
                "{strategy} predictions come from a different training run; rerun `iul predict`"
            )));
        }
        if train.inputs.get("labeled") != Some(&labeled_digest) {
            return Err(StageError::stale(format!(
                "{strategy} models were trained on a different labeled set; rerun `iul train` and `iul predict`"
            )));
        }
        let predictions: Vec<Prediction> = read_jsonl(ws.path(predict_dir(strategy, negatives)).join(PREDICTIONS))
            .or_kind(ErrorKind::Data, "reading predictions")?;
        let reports =
            evaluate_predictions(&data, strategy, negatives, &predictions).or_kind(ErrorKind::Data, "evaluating")?;
        let mut run = StageRun::new(
            ws,
            "evaluate",
            evaluate_dir(strategy, negatives),
            &json!({ "train": train.config_digest, "predict": predicted.config_digest }),
        )?;
        run.input_digest("train", &train.config_digest);
        run.input_digest("labeled", &labeled_digest);
        run.input_file("predictions", &ws.path(predict_dir(strategy, negatives)).join(PREDICTIONS))?;
        write_reports(&mut run, &reports)?;
        run.finish()?;
        print!("{}", render_table(&reports));
    }
    Ok(())
}

pub fn write_reports(run: &mut StageRun, reports: &[MetricsReport]) -> StageResult<()> {
    let mut json = serde_json::to_string_pretty(reports).expect("reports serialize");
    json.push('\n');
    run.write("report.json", json)?;
    run.write("report.txt", render_table(reports))?;
    run.write("folds.csv", folds_csv(reports).or_kind(ErrorKind::Io, "writing folds.csv")?)?;
    Ok(())
}
