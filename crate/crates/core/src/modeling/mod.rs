//! Hashed n-gram features, linear sigmoid heads trained with (weighted)
//! binary cross-entropy, the scorer contract, and the four detection
//! strategies: general, specific, multilabel, and hierarchical.

mod features;
mod model;
mod strategies;
mod train;

pub use features::{featurize, FeatureVector, Featurizer, DEFAULT_DIMENSION, DEFAULT_HASH_SEED};
pub use model::{
    is_positive, multilabel_heads, sigmoid, subcategory_heads, CountingScorer, LinearModel, ModelKind, ScoreError,
    ScoreVector, Scorer, TrainingMetadata, GENERAL_HEAD, MODEL_FORMAT_VERSION, NON_IUL_HEAD, THRESHOLD,
};
pub use strategies::{
    derive_general_from_multilabel, general_score_from_multilabel, general_scores, hierarchical_predict,
    run_specific, GeneralRule, HierarchicalPrediction, SpecificClassifiers,
};
pub use train::{
    batch_gradient, batch_loss, compute_class_weights, train_binary, train_heads, train_multilabel,
    train_subcategories, weighted_bce, weighted_bce_grad, ClassWeights, Example, Gradient, TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bad training data: {0}")]
    Data(String),
    #[error("need both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("model file error: {0}")]
    Format(String),
    #[error("cannot access {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Score(#[from] ScoreError),
}
