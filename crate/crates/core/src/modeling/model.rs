use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer};
use super::train::ClassWeights;
use super::ModelError;
use crate::taxonomy::Subcategory;

pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Head name of a general (IUL vs not) detector.
pub const GENERAL_HEAD: &str = "iul";
/// Head name of the multilabel "predicted as non-IUL" output.
pub const NON_IUL_HEAD: &str = "non_iul";
/// A probability is a positive decision only when strictly above this.
pub const THRESHOLD: f64 = 0.5;

pub fn is_positive(p: f64) -> bool {
    p > THRESHOLD
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One weighted-BCE head (general or subcategory-specific).
    Binary,
    /// Non-IUL head followed by the six subcategory heads.
    Multilabel,
    /// Six subcategory heads, the second level of the hierarchical pipeline.
    Subcategories,
}

impl ModelKind {
    pub fn head_count(self) -> usize {
        match self {
            Self::Binary => 1,
            Self::Multilabel => 7,
            Self::Subcategories => 6,
        }
    }
}

pub fn multilabel_heads() -> Vec<String> {
    std::iter::once(NON_IUL_HEAD.to_string())
        .chain(Subcategory::ALL.iter().map(|c| c.slug().to_string()))
        .collect()
}

pub fn subcategory_heads() -> Vec<String> {
    Subcategory::ALL.iter().map(|c| c.slug().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_size: usize,
    pub val_size: usize,
    /// Per head; `(1, 1)` for unweighted heads.
    pub class_weights: Vec<ClassWeights>,
}

/// Probabilities per named head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub heads: Vec<String>,
    pub probs: Vec<f64>,
}

impl ScoreVector {
    pub fn new(heads: Vec<String>, probs: Vec<f64>) -> Result<Self, ScoreError> {
        if heads.len() != probs.len() {
            return Err(ScoreError::Protocol(format!("{} heads but {} scores", heads.len(), probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ScoreError::Protocol(format!("score {p} outside [0, 1]")));
        }
        Ok(Self { heads, probs })
    }

    pub fn get(&self, head: &str) -> Option<f64> {
        self.heads.iter().position(|h| h == head).map(|i| self.probs[i])
    }

    pub fn subcategory(&self, c: Subcategory) -> Option<f64> {
        self.get(c.slug())
    }

    /// Largest subcategory probability, if any subcategory head exists.
    pub fn max_subcategory(&self) -> Option<f64> {
        Subcategory::ALL.iter().filter_map(|c| self.subcategory(*c)).reduce(f64::max)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    /// Network or server failure; callers may retry.
    #[error("scorer transport error: {0}")]
    Transport(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer configuration error: {0}")]
    Config(String),
}

impl ScoreError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport(_))
    }
}

/// Anything that maps texts to per-head probabilities: an in-process
/// linear model or a remote backend.
pub trait Scorer: Send + Sync {
    fn heads(&self) -> Vec<String>;
    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn heads(&self) -> Vec<String> {
        (**self).heads()
    }

    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
        (**self).score(texts)
    }
}

/// Wraps a scorer and counts how many texts it was asked to score.
pub struct CountingScorer<S> {
    inner: S,
    texts: AtomicUsize,
    calls: AtomicUsize,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, texts: AtomicUsize::new(0), calls: AtomicUsize::new(0) }
    }

    pub fn texts_scored(&self) -> usize {
        self.texts.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn heads(&self) -> Vec<String> {
        self.inner.heads()
    }

    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        self.inner.score(texts)
    }
}

/// Independent sigmoid heads over shared hashed features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub featurizer: Featurizer,
    pub heads: Vec<String>,
    /// `heads.len()` dense rows of `featurizer.dimension` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub metadata: Option<TrainingMetadata>,
}

impl LinearModel {
    pub fn zeros(kind: ModelKind, featurizer: Featurizer, heads: Vec<String>) -> Result<Self, ModelError> {
        featurizer.validate()?;
        if heads.len() != kind.head_count() {
            return Err(ModelError::Config(format!(
                "{kind:?} model needs {} heads, got {}",
                kind.head_count(),
                heads.len()
            )));
        }
        let dim = featurizer.dimension as usize;
        Ok(Self {
            kind,
            weights: vec![vec![0.0; dim]; heads.len()],
            bias: vec![0.0; heads.len()],
            heads,
            featurizer,
            metadata: None,
        })
    }

    pub fn dimension(&self) -> usize {
        self.featurizer.dimension as usize
    }

    pub fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| x.dot(w) + b).collect()
    }

    pub fn probabilities(&self, x: &FeatureVector) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    pub fn score_features(&self, x: &FeatureVector) -> ScoreVector {
        ScoreVector { heads: self.heads.clone(), probs: self.probabilities(x) }
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        let finite = self.bias.iter().chain(self.weights.iter().flatten()).all(|v| v.is_finite());
        if finite { Ok(()) } else { Err(ModelError::NonFinite("model parameters".into())) }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind,
            featurizer: self.featurizer.clone(),
            heads: self
                .heads
                .iter()
                .zip(&self.weights)
                .zip(&self.bias)
                .map(|((name, w), b)| HeadFile {
                    name: name.clone(),
                    bias: *b,
                    weights: w
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, v)| (i as u32, *v))
                        .collect(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported model format version {}", file.format_version)));
        }
        let names = file.heads.iter().map(|h| h.name.clone()).collect();
        let mut model = Self::zeros(file.kind, file.featurizer, names)?;
        let dim = model.dimension();
        for (h, head) in file.heads.into_iter().enumerate() {
            model.bias[h] = head.bias;
            for (i, v) in head.weights {
                let slot = model.weights[h]
                    .get_mut(i as usize)
                    .ok_or_else(|| ModelError::Format(format!("weight index {i} outside dimension {dim}")))?;
                *slot = v;
            }
        }
        model.metadata = file.metadata;
        model.check_finite()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| ModelError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }
}

impl Scorer for LinearModel {
    fn heads(&self) -> Vec<String> {
        self.heads.clone()
    }

    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
        Ok(texts.iter().map(|t| self.score_features(&self.featurizer.featurize(t))).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    featurizer: Featurizer,
    heads: Vec<HeadFile>,
    metadata: Option<TrainingMetadata>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    name: String,
    bias: f64,
    /// Nonzero weights as `[index, value]`.
    weights: Vec<(u32, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LinearModel {
        LinearModel::zeros(ModelKind::Binary, Featurizer::with_dimension(64).unwrap(), vec!["iul".into()]).unwrap()
    }

    #[test]
    fn zero_model_scores_half() {
        let m = LinearModel::zeros(ModelKind::Multilabel, Featurizer::with_dimension(64).unwrap(), multilabel_heads())
            .unwrap();
        let s = m.score(&["the elderly"]).unwrap();
        assert!(s[0].probs.iter().all(|p| *p == 0.5));
        assert!(!is_positive(0.5));
    }

    #[test]
    fn positive_weights_raise_probability() {
        let mut m = small();
        let x = m.featurizer.featurize("mentally retarded");
        let before = m.score_features(&x).probs[0];
        for (i, _) in x.iter() {
            m.weights[0][i] += 0.3;
        }
        assert!(m.score_features(&x).probs[0] > before);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut m = small();
        m.weights[0][3] = 0.1 + 0.2;
        m.weights[0][17] = -1e-300;
        m.bias[0] = std::f64::consts::PI;
        let back = LinearModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let text = ["the elderly patient"];
        assert_eq!(back.score(&text).unwrap(), m.score(&text).unwrap());
    }

    #[test]
    fn wrong_head_count_rejected() {
        let f = Featurizer::with_dimension(64).unwrap();
        assert!(LinearModel::zeros(ModelKind::Multilabel, f, vec!["iul".into()]).is_err());
    }

    #[test]
    fn bad_version_rejected() {
        let json = small().to_json().replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(LinearModel::from_json(&json), Err(ModelError::Format(_))));
    }

    #[test]
    fn sigmoid_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn score_vector_validates_range() {
        assert!(ScoreVector::new(vec!["a".into()], vec![1.2]).is_err());
        assert!(ScoreVector::new(vec!["a".into()], vec![0.9, 0.1]).is_err());
        let s = ScoreVector::new(multilabel_heads(), vec![0.4, 0.1, 0.2, 0.3, 0.1, 0.1, 0.1]).unwrap();
        assert_eq!(s.max_subcategory(), Some(0.3));
        assert_eq!(s.get(NON_IUL_HEAD), Some(0.4));
    }
}
