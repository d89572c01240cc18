use std::time::Duration;

use serde::{Deserialize, Serialize};

use iul_core::modeling::{ScoreError, ScoreVector, Scorer};

pub const SCORER_URL_ENV: &str = "IUL_SCORER_URL";
pub const SCORER_TOKEN_ENV: &str = "IUL_SCORER_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    /// One row per text, one probability per head.
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ScorerConfig {
    pub base_url: String,
    pub token: Option<String>,
    pub heads: Vec<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub batch_size: usize,
}

impl ScorerConfig {
    pub fn new(base_url: impl Into<String>, heads: Vec<String>) -> Self {
        Self {
            base_url: base_url.into(),
            token: None,
            heads,
            timeout: Duration::from_secs(30),
            retries: 2,
            batch_size: 64,
        }
    }

    /// Base URL and token from [`SCORER_URL_ENV`] and [`SCORER_TOKEN_ENV`].
    pub fn from_env(heads: Vec<String>) -> Result<Self, ScoreError> {
        let url = std::env::var(SCORER_URL_ENV)
            .map_err(|_| ScoreError::Config(format!("{SCORER_URL_ENV} is not set")))?;
        let mut cfg = Self::new(url, heads);
        cfg.token = std::env::var(SCORER_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Ok(cfg)
    }
}

/// Scores texts through a remote backend speaking
/// `POST {base}/v1/score {"texts": [...]}` → `{"scores": [[...], ...]}`.
pub struct HttpScorer {
    cfg: ScorerConfig,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(cfg: ScorerConfig) -> Result<Self, ScoreError> {
        if cfg.heads.is_empty() {
            return Err(ScoreError::Config("scorer needs at least one head".into()));
        }
        if cfg.batch_size == 0 {
            return Err(ScoreError::Config("batch_size must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent })
    }

    fn url(&self) -> String {
        format!("{}/v1/score", self.cfg.base_url.trim_end_matches('/'))
    }

    fn post_once(&self, body: &str) -> Result<ScoreResponse, ScoreError> {
        let mut req = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(token) = &self.cfg.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| ScoreError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ScoreError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| ScoreError::Protocol(format!("bad response body: {e}"))),
            408 | 429 | 500..=599 => Err(ScoreError::Transport(format!("HTTP {status}: {text}"))),
            _ => Err(ScoreError::Protocol(format!("HTTP {status}: {text}"))),
        }
    }

    fn post(&self, texts: &[&str]) -> Result<ScoreResponse, ScoreError> {
        let body = serde_json::to_string(&ScoreRequest { texts: texts.iter().map(|t| t.to_string()).collect() })
            .expect("serializable request");
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Err(e) if e.is_retryable() && attempt < self.cfg.retries => {
                    attempt += 1;
                    log::warn!("scorer request failed ({e}); retry {attempt}/{}", self.cfg.retries);
                }
                other => return other,
            }
        }
    }
}

impl Scorer for HttpScorer {
    fn heads(&self) -> Vec<String> {
        self.cfg.heads.clone()
    }

    fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.cfg.batch_size) {
            let resp = self.post(batch)?;
            if resp.scores.len() != batch.len() {
                return Err(ScoreError::Protocol(format!("{} rows for {} texts", resp.scores.len(), batch.len())));
            }
            for row in resp.scores {
                out.push(ScoreVector::new(self.cfg.heads.clone(), row)?);
            }
        }
        Ok(out)
    }
}
