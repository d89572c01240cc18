use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use iul_core::experiment::{NegativeSet, Strategy};
use iul_core::labeling::{CodeScheme, EnCaps};
use iul_core::llm::{PromptMode, UnparsedPolicy};
use iul_core::modeling::{Featurizer, TrainConfig, DEFAULT_DIMENSION};
use iul_core::taxonomy::Subcategory;

use crate::error::StageError;

/// Everything a run can be configured with. Loaded from TOML, then
/// overridden by command-line flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub label: LabelConfig,
    pub split: SplitConfig,
    pub train: TrainSection,
    pub llm: LlmSection,
    pub review: ReviewSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub annotated: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    /// Directory of `<slug>.txt` term lists; the bundled seed lists when unset.
    pub lexicons: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { annotated: None, pool: None, lexicons: None, out: PathBuf::from("run") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub seed: u64,
    /// Cap on extracted negatives per subcategory, applied to all six.
    pub en_cap: Option<usize>,
    /// Per-subcategory caps keyed by slug; win over `en_cap`.
    pub en_caps: BTreeMap<String, usize>,
    pub scheme: CodeScheme,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { seed: 1, en_cap: None, en_caps: BTreeMap::new(), scheme: CodeScheme::default() }
    }
}

impl LabelConfig {
    pub fn caps(&self) -> Result<EnCaps, StageError> {
        let mut caps = match self.en_cap {
            Some(c) => EnCaps::uniform(c),
            None => EnCaps::unlimited(),
        };
        for (slug, cap) in &self.en_caps {
            let c = Subcategory::ALL
                .into_iter()
                .find(|c| c.slug() == slug)
                .ok_or_else(|| StageError::config(format!("label.en_caps: unknown subcategory `{slug}`")))?;
            caps.0[c.index()] = Some(*cap);
        }
        Ok(caps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub k: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { k: 5, val_fraction: 0.2, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// `linear` or `finetune`; individual fields below override it.
    pub profile: String,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub seed: u64,
    pub dimension: u32,
    pub negatives: NegativeSet,
    pub strategies: Vec<Strategy>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            profile: "linear".into(),
            learning_rate: None,
            batch_size: None,
            patience: None,
            max_epochs: None,
            seed: 0,
            dimension: DEFAULT_DIMENSION,
            negatives: NegativeSet::AnEn,
            strategies: Strategy::ALL.to_vec(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> Result<TrainConfig, StageError> {
        let mut cfg = TrainConfig::profile(&self.profile)
            .ok_or_else(|| StageError::config(format!("unknown training profile `{}`", self.profile)))?;
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        cfg.seed = self.seed;
        cfg.validate().map_err(|e| StageError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn featurizer(&self) -> Result<Featurizer, StageError> {
        Featurizer::with_dimension(self.dimension).map_err(|e| StageError::config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub base_url: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub token_env: String,
    pub mode: PromptMode,
    pub policy: UnparsedPolicy,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub negatives: NegativeSet,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            base_url: None,
            model: "gpt-4o".into(),
            token_env: iul_service::LLM_TOKEN_ENV.into(),
            mode: PromptMode::Both,
            policy: UnparsedPolicy::Positive,
            retries: 3,
            retry_backoff_ms: 250,
            timeout_secs: 60,
            concurrency: 4,
            negatives: NegativeSet::AnEn,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSection {
    /// Store directory; `<out>/review` when unset.
    pub store: Option<PathBuf>,
    pub bind: String,
    pub audit_mode: bool,
}

impl Default for ReviewSection {
    fn default() -> Self {
        Self { store: None, bind: "127.0.0.1:8080".into(), audit_mode: false }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, StageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| StageError::missing(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| StageError::config(format!("{}: {e}", path.display())))
    }
}
