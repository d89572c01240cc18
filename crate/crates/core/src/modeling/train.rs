use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer};
use super::model::{sigmoid, LinearModel, ModelKind, TrainingMetadata, THRESHOLD};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Fixed at 0.5; recorded so model files are self-describing.
    pub threshold: f64,
}

impl TrainConfig {
    /// Fine-tuning hyperparameters for transformer encoders.
    pub fn finetune() -> Self {
        Self { learning_rate: 4e-5, batch_size: 32, patience: 10, max_epochs: 100, seed: 0, threshold: THRESHOLD }
    }

    /// Same schedule with a step size suited to a from-scratch linear model.
    pub fn linear() -> Self {
        Self { learning_rate: 0.05, ..Self::finetune() }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "finetune" => Some(Self::finetune()),
            "linear" => Some(Self::linear()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config("batch size, patience and max epochs must be positive".into()));
        }
        if self.threshold != THRESHOLD {
            return Err(ModelError::Config(format!("decision threshold is fixed at 0.5, got {}", self.threshold)));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::finetune()
    }
}

/// Per-class loss weights `(w0, w1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub const UNIT: Self = Self { w0: 1.0, w1: 1.0 };

    pub fn for_label(&self, y: bool) -> f64 {
        if y { self.w1 } else { self.w0 }
    }
}

/// `w_c = N / (2 n_c)`, so both classes carry half the total weight.
pub fn compute_class_weights(labels: &[bool]) -> Result<ClassWeights, ModelError> {
    let n = labels.len();
    let n1 = labels.iter().filter(|l| **l).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(ModelError::SingleClass { positives: n1, negatives: n0 });
    }
    Ok(ClassWeights { w0: n as f64 / (2.0 * n0 as f64), w1: n as f64 / (2.0 * n1 as f64) })
}

/// Features with one target bit per head.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: FeatureVector,
    pub y: Vec<bool>,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() }
}

/// Weighted BCE of one head at logit `z`:
/// `-w1 * y * log(sigmoid(z)) - w0 * (1 - y) * log(1 - sigmoid(z))`.
pub fn weighted_bce(z: f64, y: bool, w: ClassWeights) -> f64 {
    if y { w.w1 * softplus(-z) } else { w.w0 * softplus(z) }
}

/// d(weighted_bce)/dz `= w_y * (sigmoid(z) - y)`.
pub fn weighted_bce_grad(z: f64, y: bool, w: ClassWeights) -> f64 {
    w.for_label(y) * (sigmoid(z) - y as u8 as f64)
}

/// Mean over the batch of the summed per-head losses.
pub fn batch_loss(model: &LinearModel, batch: &[&Example], weights: &[ClassWeights]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|ex| {
            model
                .logits(&ex.x)
                .into_iter()
                .zip(&ex.y)
                .zip(weights)
                .map(|((z, &y), &w)| weighted_bce(z, y, w))
                .sum::<f64>()
        })
        .sum();
    total / batch.len() as f64
}

/// Gradient of [`batch_loss`]: sparse per-head weight entries plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<FeatureVector>,
    pub bias: Vec<f64>,
}

pub fn batch_gradient(model: &LinearModel, batch: &[&Example], weights: &[ClassWeights]) -> Gradient {
    let heads = model.heads.len();
    let mut pairs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); heads];
    let mut bias = vec![0.0; heads];
    let scale = 1.0 / batch.len().max(1) as f64;
    for ex in batch {
        for (h, z) in model.logits(&ex.x).into_iter().enumerate() {
            let dz = weighted_bce_grad(z, ex.y[h], weights[h]) * scale;
            bias[h] += dz;
            pairs[h].extend(ex.x.indices.iter().zip(&ex.x.values).map(|(&i, &v)| (i, dz * v)));
        }
    }
    Gradient { weights: pairs.into_iter().map(FeatureVector::from_pairs).collect(), bias }
}

fn check_examples(examples: &[Example], heads: usize, what: &str) -> Result<(), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::Data(format!("{what} set is empty")));
    }
    if let Some(ex) = examples.iter().find(|ex| ex.y.len() != heads) {
        return Err(ModelError::Data(format!("{what} example has {} targets, expected {heads}", ex.y.len())));
    }
    Ok(())
}

/// Seeded mini-batch gradient descent with early stopping on validation
/// loss; returns the parameters of the best validation epoch (epoch 0 is
/// the all-zero initialization).
pub fn train_heads(
    kind: ModelKind,
    heads: Vec<String>,
    featurizer: &Featurizer,
    train: &[Example],
    val: &[Example],
    weights: &[ClassWeights],
    cfg: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    cfg.validate()?;
    let mut model = LinearModel::zeros(kind, featurizer.clone(), heads)?;
    let n_heads = model.heads.len();
    if weights.len() != n_heads {
        return Err(ModelError::Config(format!("{} class weights for {n_heads} heads", weights.len())));
    }
    check_examples(train, n_heads, "training")?;
    check_examples(val, n_heads, "validation")?;
    let dim = model.dimension() as u32;
    if let Some(i) = train.iter().chain(val).flat_map(|ex| &ex.x.indices).find(|&&i| i >= dim) {
        return Err(ModelError::Data(format!("feature index {i} outside dimension {dim}")));
    }

    let val_refs: Vec<&Example> = val.iter().collect();
    let mut best_loss = batch_loss(&model, &val_refs, weights);
    let mut best = (model.weights.clone(), model.bias.clone());
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs_run = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scale = cfg.learning_rate / chunk.len() as f64;
            // Gradient at the pre-batch parameters, then one update.
            let grads: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| {
                    let ex = &train[i];
                    model
                        .logits(&ex.x)
                        .into_iter()
                        .enumerate()
                        .map(|(h, z)| weighted_bce_grad(z, ex.y[h], weights[h]))
                        .collect()
                })
                .collect();
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFinite(format!("gradient at epoch {epoch}, batch {b}")));
            }
            for (&i, g) in chunk.iter().zip(&grads) {
                for (h, &gh) in g.iter().enumerate() {
                    let step = scale * gh;
                    model.bias[h] -= step;
                    let w = &mut model.weights[h];
                    for (j, v) in train[i].x.iter() {
                        w[j] -= step * v;
                    }
                }
            }
        }

        let loss = batch_loss(&model, &val_refs, weights);
        if !loss.is_finite() {
            return Err(ModelError::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best.0.clone_from(&model.weights);
            best.1.clone_from(&model.bias);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    model.weights = best.0;
    model.bias = best.1;
    model.metadata = Some(TrainingMetadata {
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        max_epochs: cfg.max_epochs,
        epochs_run,
        best_epoch,
        best_val_loss: best_loss,
        train_size: train.len(),
        val_size: val.len(),
        class_weights: weights.to_vec(),
    });
    model.check_finite()?;
    Ok(model)
}

/// One weighted head; weights come from the training labels unless given.
pub fn train_binary(
    head: &str,
    featurizer: &Featurizer,
    train: &[Example],
    val: &[Example],
    weights: Option<ClassWeights>,
    cfg: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    let weights = match weights {
        Some(w) => w,
        None => compute_class_weights(&train.iter().map(|ex| ex.y.first().copied().unwrap_or(false)).collect::<Vec<_>>())?,
    };
    train_heads(ModelKind::Binary, vec![head.to_string()], featurizer, train, val, &[weights], cfg)
}

/// Unweighted summed BCE over seven heads (`non_iul`, then subcategories).
pub fn train_multilabel(
    featurizer: &Featurizer,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    let heads = super::model::multilabel_heads();
    let weights = vec![ClassWeights::UNIT; heads.len()];
    train_heads(ModelKind::Multilabel, heads, featurizer, train, val, &weights, cfg)
}

/// Unweighted summed BCE over the six subcategory heads.
pub fn train_subcategories(
    featurizer: &Featurizer,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<LinearModel, ModelError> {
    let heads = super::model::subcategory_heads();
    let weights = vec![ClassWeights::UNIT; heads.len()];
    train_heads(ModelKind::Subcategories, heads, featurizer, train, val, &weights, cfg)
}
