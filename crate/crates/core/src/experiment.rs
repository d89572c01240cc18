//! Cross-validated training and evaluation of the detection strategies
//! under a chosen negative-set configuration.
//!
//! Training rows per fold come from the fold's TRAIN part (validation rows
//! from VAL) filtered by strategy:
//! - general, multilabel, hierarchical level 1: all positives plus the
//!   selected negative sources;
//! - specific detector for `c`: rows with `z_c = 1` plus selected negatives
//!   that mention an identifier of `c`;
//! - hierarchical level 2: positives only.
//!
//! Test rows never depend on the training configuration: general heads are
//! scored on the whole TEST part, subcategory heads on rows with `z_c = 1`
//! plus negatives (AN or EN) mentioning an identifier of `c`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evaluation::{aggregate_folds, FoldMetrics, MetricError, MetricsReport};
use crate::labeling::{LabelSource, LabeledRecord};
use crate::modeling::{
    derive_general_from_multilabel, general_score_from_multilabel, hierarchical_predict, is_positive,
    multilabel_heads, train_binary, train_multilabel, train_subcategories, Example, FeatureVector, Featurizer,
    GeneralRule, LinearModel, ModelError, Scorer, TrainConfig, GENERAL_HEAD, NON_IUL_HEAD,
};
use crate::splitting::{FoldPlan, Part, SplitError, StratSample};
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

/// Head reporting the general decision of a multilabel model under the
/// non-IUL-head rule.
pub const GENERAL_Z0_HEAD: &str = "iul_z0";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("fold {fold}: {message}")]
    Data { fold: usize, message: String },
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NegativeSet {
    #[serde(rename = "AN")]
    An,
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "AN+EN")]
    AnEn,
}

impl NegativeSet {
    pub const ALL: [Self; 3] = [Self::An, Self::En, Self::AnEn];

    pub fn includes(self, source: LabelSource) -> bool {
        matches!(
            (self, source),
            (Self::An | Self::AnEn, LabelSource::An) | (Self::En | Self::AnEn, LabelSource::En)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::An => "AN",
            Self::En => "EN",
            Self::AnEn => "AN+EN",
        }
    }

    /// Directory-safe name.
    pub fn slug(self) -> &'static str {
        match self {
            Self::An => "an",
            Self::En => "en",
            Self::AnEn => "an_en",
        }
    }
}

impl fmt::Display for NegativeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NegativeSet {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('_', "+").as_str() {
            "AN" => Ok(Self::An),
            "EN" => Ok(Self::En),
            "AN+EN" => Ok(Self::AnEn),
            _ => Err(ExperimentError::Unknown { what: "negative set", value: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    General,
    Specific,
    Multilabel,
    Hierarchical,
}

impl Strategy {
    pub const ALL: [Self; 4] = [Self::General, Self::Specific, Self::Multilabel, Self::Hierarchical];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::Specific => "specific",
            Self::Multilabel => "multilabel",
            Self::Hierarchical => "hierarchical",
        }
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|s| *s == self).expect("listed") as u64
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ExperimentError::Unknown { what: "strategy", value: s.to_string() })
    }
}

/// Stratification bits: `[y, z1..z6, is_AN, is_EN]`.
pub fn stratification_samples(records: &[LabeledRecord]) -> Vec<StratSample> {
    records
        .iter()
        .map(|r| {
            let mut bits = vec![r.y == 1];
            bits.extend(r.z.iter().map(|b| *b == 1));
            bits.push(r.source == LabelSource::An);
            bits.push(r.source == LabelSource::En);
            StratSample::new(r.excerpt_id.clone(), bits)
        })
        .collect()
}

/// Labeled rows with their features, computed once.
pub struct ExperimentData {
    pub records: Vec<LabeledRecord>,
    pub features: Vec<FeatureVector>,
    pub featurizer: Featurizer,
    index: HashMap<String, usize>,
}

impl ExperimentData {
    pub fn new(records: Vec<LabeledRecord>, featurizer: Featurizer) -> Self {
        let features = records.iter().map(|r| featurizer.featurize(&r.text)).collect();
        let index = records.iter().enumerate().map(|(i, r)| (r.excerpt_id.clone(), i)).collect();
        Self { records, features, featurizer, index }
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn part(&self, plan: &FoldPlan, fold: usize, part: Part) -> Result<Vec<usize>, ExperimentError> {
        let parts = plan.folds.get(fold).ok_or_else(|| ExperimentError::Data {
            fold,
            message: format!("plan has only {} folds", plan.folds.len()),
        })?;
        let ids = match part {
            Part::Train => &parts.train,
            Part::Val => &parts.val,
            Part::Test => &parts.test,
        };
        ids.iter()
            .map(|id| {
                self.position(id).ok_or_else(|| ExperimentError::Data {
                    fold,
                    message: format!("split id `{id}` is not in the labeled set"),
                })
            })
            .collect()
    }

    fn mentions(&self, i: usize, c: Subcategory) -> bool {
        self.records[i].matched_subcategories.contains(&c)
    }

    fn example(&self, i: usize, y: Vec<bool>) -> Example {
        Example { x: self.features[i].clone(), y }
    }
}

/// Rows a strategy trains on within one part.
fn training_rows(
    data: &ExperimentData,
    rows: &[usize],
    negatives: NegativeSet,
    target: Option<Subcategory>,
) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&i| {
            let r = &data.records[i];
            match target {
                None => r.y == 1 || negatives.includes(r.source),
                Some(c) => r.positive_for(c) || (r.y == 0 && negatives.includes(r.source) && data.mentions(i, c)),
            }
        })
        .collect()
}

/// Test rows for a head: everything for general heads, positives of `c`
/// plus identifier-bearing negatives for subcategory heads.
pub fn evaluation_rows(data: &ExperimentData, rows: &[usize], target: Option<Subcategory>) -> Vec<usize> {
    match target {
        None => rows.to_vec(),
        Some(c) => rows
            .iter()
            .copied()
            .filter(|&i| data.records[i].positive_for(c) || (data.records[i].y == 0 && data.mentions(i, c)))
            .collect(),
    }
}

/// Trained models of one strategy for one fold.
pub enum FoldModels {
    General(LinearModel),
    Specific(Vec<LinearModel>),
    Multilabel(LinearModel),
    Hierarchical { general: LinearModel, sub: LinearModel },
}

impl FoldModels {
    pub fn strategy(&self) -> Strategy {
        match self {
            Self::General(_) => Strategy::General,
            Self::Specific(_) => Strategy::Specific,
            Self::Multilabel(_) => Strategy::Multilabel,
            Self::Hierarchical { .. } => Strategy::Hierarchical,
        }
    }

    /// `(file name, model)` pairs in a fixed order.
    pub fn files(&self) -> Vec<(String, &LinearModel)> {
        match self {
            Self::General(m) => vec![("general.json".into(), m)],
            Self::Specific(ms) => {
                Subcategory::ALL.iter().zip(ms).map(|(c, m)| (format!("specific_{}.json", c.slug()), m)).collect()
            }
            Self::Multilabel(m) => vec![("multilabel.json".into(), m)],
            Self::Hierarchical { general, sub } => {
                vec![("level1_general.json".into(), general), ("level2_subcategories.json".into(), sub)]
            }
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<String>, ModelError> {
        let dir = dir.as_ref();
        self.files()
            .into_iter()
            .map(|(name, m)| m.save(dir.join(&name)).map(|_| name))
            .collect()
    }

    pub fn load(strategy: Strategy, dir: impl AsRef<Path>) -> Result<Self, ModelError> {
        let dir = dir.as_ref();
        let load = |name: &str| LinearModel::load(dir.join(name));
        Ok(match strategy {
            Strategy::General => Self::General(load("general.json")?),
            Strategy::Specific => Self::Specific(
                Subcategory::ALL
                    .iter()
                    .map(|c| load(&format!("specific_{}.json", c.slug())))
                    .collect::<Result<_, _>>()?,
            ),
            Strategy::Multilabel => Self::Multilabel(load("multilabel.json")?),
            Strategy::Hierarchical => Self::Hierarchical {
                general: load("level1_general.json")?,
                sub: load("level2_subcategories.json")?,
            },
        })
    }
}

/// Distinct, reproducible seed per (fold, strategy, model).
pub fn model_seed(base: u64, fold: usize, strategy: Strategy, model: usize) -> u64 {
    base ^ ((fold as u64) << 32) ^ (strategy.index() << 24) ^ ((model as u64) << 16)
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

fn nonempty(rows: Vec<usize>, fold: usize, what: &str) -> Result<Vec<usize>, ExperimentError> {
    if rows.is_empty() {
        Err(ExperimentError::Data { fold, message: format!("no {what} rows") })
    } else {
        Ok(rows)
    }
}

pub fn train_fold(
    data: &ExperimentData,
    plan: &FoldPlan,
    fold: usize,
    strategy: Strategy,
    negatives: NegativeSet,
    cfg: &TrainConfig,
) -> Result<FoldModels, ExperimentError> {
    let train_part = data.part(plan, fold, Part::Train)?;
    let val_part = data.part(plan, fold, Part::Val)?;
    let general_sets = || -> Result<(Vec<Example>, Vec<Example>), ExperimentError> {
        let pick = |rows: &[usize], what| {
            nonempty(training_rows(data, rows, negatives, None), fold, what)
                .map(|rows| rows.iter().map(|&i| data.example(i, vec![data.records[i].y == 1])).collect())
        };
        Ok((pick(&train_part, "general training")?, pick(&val_part, "general validation")?))
    };
    let wrap = |e: ModelError, what: &str| ExperimentError::Data { fold, message: format!("{what}: {e}") };

    Ok(match strategy {
        Strategy::General => {
            let (train, val) = general_sets()?;
            let seed = model_seed(cfg.seed, fold, strategy, 0);
            FoldModels::General(
                train_binary(GENERAL_HEAD, &data.featurizer, &train, &val, None, &with_seed(cfg, seed))
                    .map_err(|e| wrap(e, "general"))?,
            )
        }
        Strategy::Specific => {
            let mut models = Vec::with_capacity(NUM_SUBCATEGORIES);
            for c in Subcategory::ALL {
                let pick = |rows: &[usize], what: &str| {
                    nonempty(training_rows(data, rows, negatives, Some(c)), fold, &format!("{} {what}", c.slug()))
                        .map(|rows| rows.iter().map(|&i| data.example(i, vec![data.records[i].positive_for(c)])).collect::<Vec<_>>())
                };
                let train = pick(&train_part, "training")?;
                let val = pick(&val_part, "validation")?;
                let seed = model_seed(cfg.seed, fold, strategy, c.index());
                models.push(
                    train_binary(c.slug(), &data.featurizer, &train, &val, None, &with_seed(cfg, seed))
                        .map_err(|e| wrap(e, c.slug()))?,
                );
            }
            FoldModels::Specific(models)
        }
        Strategy::Multilabel => {
            let bits = |i: usize| {
                let r = &data.records[i];
                std::iter::once(r.y == 0).chain(r.z.iter().map(|b| *b == 1)).collect::<Vec<_>>()
            };
            let pick = |rows: &[usize], what| {
                nonempty(training_rows(data, rows, negatives, None), fold, what)
                    .map(|rows| rows.iter().map(|&i| data.example(i, bits(i))).collect::<Vec<_>>())
            };
            let train = pick(&train_part, "multilabel training")?;
            let val = pick(&val_part, "multilabel validation")?;
            let seed = model_seed(cfg.seed, fold, strategy, 0);
            FoldModels::Multilabel(
                train_multilabel(&data.featurizer, &train, &val, &with_seed(cfg, seed))
                    .map_err(|e| wrap(e, "multilabel"))?,
            )
        }
        Strategy::Hierarchical => {
            let (train, val) = general_sets()?;
            let seed = model_seed(cfg.seed, fold, strategy, 0);
            let general = train_binary(GENERAL_HEAD, &data.featurizer, &train, &val, None, &with_seed(cfg, seed))
                .map_err(|e| wrap(e, "level 1"))?;
            let positives = |rows: &[usize], what| {
                let rows: Vec<usize> = rows.iter().copied().filter(|&i| data.records[i].y == 1).collect();
                nonempty(rows, fold, what).map(|rows| {
                    rows.iter().map(|&i| data.example(i, data.records[i].z.iter().map(|b| *b == 1).collect())).collect::<Vec<_>>()
                })
            };
            let train = positives(&train_part, "level-2 training")?;
            let val = positives(&val_part, "level-2 validation")?;
            let seed = model_seed(cfg.seed, fold, strategy, 1);
            let sub = train_subcategories(&data.featurizer, &train, &val, &with_seed(cfg, seed))
                .map_err(|e| wrap(e, "level 2"))?;
            FoldModels::Hierarchical { general, sub }
        }
    })
}

/// Scores and decisions per head for one test row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub fold: usize,
    pub excerpt_id: String,
    pub scores: BTreeMap<String, f64>,
    pub predicted: BTreeMap<String, u8>,
}

/// Scores and decisions per head for one text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadOutputs {
    pub scores: BTreeMap<String, f64>,
    pub predicted: BTreeMap<String, u8>,
}

impl HeadOutputs {
    fn put(&mut self, head: &str, score: f64, pred: bool) {
        self.scores.insert(head.to_string(), score);
        self.predicted.insert(head.to_string(), pred as u8);
    }

    /// Whether any general or subcategory head fired.
    pub fn flagged(&self) -> bool {
        match self.predicted.get(GENERAL_HEAD) {
            Some(&y) => y == 1,
            None => Subcategory::ALL.iter().any(|c| self.predicted.get(c.slug()) == Some(&1)),
        }
    }
}

/// Runs a strategy's models over featurized texts (texts are needed by the
/// gated pipeline only).
fn head_outputs(models: &FoldModels, features: &[&FeatureVector], texts: &[&str]) -> Result<Vec<HeadOutputs>, ExperimentError> {
    let mut out = vec![HeadOutputs::default(); features.len()];
    let probabilities = |m: &LinearModel| features.iter().map(|x| m.probabilities(x)).collect::<Vec<_>>();
    match models {
        FoldModels::General(m) => {
            for (o, p) in out.iter_mut().zip(probabilities(m)) {
                o.put(GENERAL_HEAD, p[0], is_positive(p[0]));
            }
        }
        FoldModels::Specific(ms) => {
            for (c, m) in Subcategory::ALL.iter().zip(ms) {
                for (o, p) in out.iter_mut().zip(probabilities(m)) {
                    o.put(c.slug(), p[0], is_positive(p[0]));
                }
            }
        }
        FoldModels::Multilabel(m) => {
            for (o, p) in out.iter_mut().zip(probabilities(m)) {
                let sv = crate::modeling::ScoreVector { heads: multilabel_heads(), probs: p };
                for (head, &prob) in sv.heads.iter().zip(&sv.probs) {
                    o.put(head, prob, is_positive(prob));
                }
                for (head, rule) in [(GENERAL_HEAD, GeneralRule::MaxSubcategory), (GENERAL_Z0_HEAD, GeneralRule::NonIulHead)] {
                    let score = general_score_from_multilabel(&sv, rule).expect("seven heads");
                    o.put(head, score, derive_general_from_multilabel(&sv, rule)?);
                }
            }
        }
        FoldModels::Hierarchical { general, sub } => {
            let preds = hierarchical_predict(general as &dyn Scorer, sub as &dyn Scorer, texts)?;
            for (o, p) in out.iter_mut().zip(&preds) {
                o.put(GENERAL_HEAD, p.general, p.y);
                for c in Subcategory::ALL {
                    o.put(c.slug(), p.subcategory_score(c), p.z[c.index()]);
                }
            }
        }
    }
    Ok(out)
}

/// Predicts every row of the fold's TEST part.
pub fn predict_fold(
    models: &FoldModels,
    data: &ExperimentData,
    plan: &FoldPlan,
    fold: usize,
) -> Result<Vec<Prediction>, ExperimentError> {
    let rows = data.part(plan, fold, Part::Test)?;
    let features: Vec<&FeatureVector> = rows.iter().map(|&i| &data.features[i]).collect();
    let texts: Vec<&str> = rows.iter().map(|&i| data.records[i].text.as_str()).collect();
    let outputs = head_outputs(models, &features, &texts)?;
    Ok(rows
        .iter()
        .zip(outputs)
        .map(|(&i, o)| Prediction {
            fold,
            excerpt_id: data.records[i].excerpt_id.clone(),
            scores: o.scores,
            predicted: o.predicted,
        })
        .collect())
}

/// Scores unlabeled texts with one fold's models.
pub fn predict_texts(models: &FoldModels, featurizer: &Featurizer, texts: &[&str]) -> Result<Vec<HeadOutputs>, ExperimentError> {
    let features: Vec<FeatureVector> = texts.iter().map(|t| featurizer.featurize(t)).collect();
    let refs: Vec<&FeatureVector> = features.iter().collect();
    head_outputs(models, &refs, texts)
}

fn head_target(head: &str) -> Option<Option<Subcategory>> {
    if head == GENERAL_HEAD || head == GENERAL_Z0_HEAD {
        return Some(None);
    }
    Subcategory::ALL.into_iter().find(|c| c.slug() == head).map(Some)
}

/// Per-head reports from predictions of all folds. Heads are reported in
/// the order: general heads, then subcategories; the non-IUL head itself is
/// not a detection target and is skipped.
pub fn evaluate_predictions(
    data: &ExperimentData,
    strategy: Strategy,
    negatives: NegativeSet,
    predictions: &[Prediction],
) -> Result<Vec<MetricsReport>, ExperimentError> {
    let mut heads: Vec<String> = Vec::new();
    for p in predictions {
        for h in p.scores.keys() {
            if h != NON_IUL_HEAD && !heads.contains(h) {
                heads.push(h.clone());
            }
        }
    }
    let rank = |h: &str| match head_target(h) {
        Some(None) => (0, if h == GENERAL_HEAD { 0 } else { 1 }),
        Some(Some(c)) => (1, c.index()),
        None => (2, 0),
    };
    heads.sort_by_key(|h| rank(h));

    let mut folds: Vec<usize> = predictions.iter().map(|p| p.fold).collect();
    folds.sort_unstable();
    folds.dedup();

    let mut reports = Vec::new();
    for head in heads {
        let target = head_target(&head)
            .ok_or_else(|| ExperimentError::Unknown { what: "prediction head", value: head.clone() })?;
        let mut per_fold = Vec::new();
        for &fold in &folds {
            let mut scores = Vec::new();
            let mut preds = Vec::new();
            let mut labels = Vec::new();
            for p in predictions.iter().filter(|p| p.fold == fold) {
                let i = data.position(&p.excerpt_id).ok_or_else(|| ExperimentError::Data {
                    fold,
                    message: format!("prediction for unknown id `{}`", p.excerpt_id),
                })?;
                if evaluation_rows(data, &[i], target).is_empty() {
                    continue;
                }
                let (Some(&s), Some(&d)) = (p.scores.get(&head), p.predicted.get(&head)) else { continue };
                scores.push(s);
                preds.push(d == 1);
                labels.push(match target {
                    None => data.records[i].y == 1,
                    Some(c) => data.records[i].positive_for(c),
                });
            }
            if !labels.is_empty() {
                per_fold.push(FoldMetrics::compute(fold, &scores, &preds, &labels)?);
            }
        }
        if !per_fold.is_empty() {
            reports.push(aggregate_folds(strategy.as_str(), &head, negatives.as_str(), per_fold)?);
        }
    }
    Ok(reports)
}

/// Trains, predicts and evaluates one strategy across every fold.
pub fn cross_validate(
    data: &ExperimentData,
    plan: &FoldPlan,
    strategy: Strategy,
    negatives: NegativeSet,
    cfg: &TrainConfig,
) -> Result<(Vec<MetricsReport>, Vec<Prediction>), ExperimentError> {
    let mut predictions = Vec::new();
    for fold in 0..plan.folds.len() {
        let models = train_fold(data, plan, fold, strategy, negatives, cfg)?;
        predictions.extend(predict_fold(&models, data, plan, fold)?);
    }
    Ok((evaluate_predictions(data, strategy, negatives, &predictions)?, predictions))
}
