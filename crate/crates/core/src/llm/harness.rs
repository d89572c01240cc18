use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cache::{CacheEntry, VerdictCache};
use super::prompt::{render_prompt, PromptMode, PromptSpec, RenderedPrompt, Shot};
use super::verdict::{parse_verdict, LlmVerdict, VerdictLabel};
use super::LlmError;
use crate::evaluation::{aggregate_folds, FoldMetrics, MetricsReport};
use crate::modeling::GENERAL_HEAD;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl ChatError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ChatError::Transport(_))
    }
}

/// A chat-completion backend. Implementations send `system` and `user` as
/// separate messages at temperature 0 and return the assistant text.
pub trait ChatClient: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, ChatError>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, ChatError> {
        (**self).complete(prompt)
    }
}

/// Wraps a client and counts the requests that reach it.
pub struct CountingClient<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: ChatClient> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ChatClient> ChatClient for CountingClient<C> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt)
    }
}

/// Sends one prompt, retrying transport failures up to `retries` more
/// times with doubling back-off.
pub fn query_endpoint(
    client: &dyn ChatClient,
    prompt: &RenderedPrompt,
    retries: u32,
    backoff: Duration,
) -> Result<String, LlmError> {
    let mut delay = backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match client.complete(prompt) {
            Ok(raw) => {
                log::debug!("{} responded: {raw}", client.model());
                return Ok(raw);
            }
            Err(e) if e.is_retryable() && attempt <= retries => {
                log::warn!("{} attempt {attempt} failed: {e}", client.model());
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
            Err(ChatError::Transport(message)) => return Err(LlmError::Transport { attempts: attempt, message }),
            Err(ChatError::Protocol(message)) => return Err(LlmError::Protocol(message)),
        }
    }
}

/// How verdicts without a parseable answer enter the metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnparsedPolicy {
    #[default]
    Positive,
    Negative,
    Exclude,
}

impl std::str::FromStr for UnparsedPolicy {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Ok(UnparsedPolicy::Positive),
            "negative" => Ok(UnparsedPolicy::Negative),
            "exclude" => Ok(UnparsedPolicy::Exclude),
            other => Err(LlmError::InvalidSpec(format!("unknown unparsed policy `{other}`"))),
        }
    }
}

impl UnparsedPolicy {
    pub fn resolve(self, label: VerdictLabel) -> Option<bool> {
        label.as_bit().or(match self {
            UnparsedPolicy::Positive => Some(true),
            UnparsedPolicy::Negative => Some(false),
            UnparsedPolicy::Exclude => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmItem {
    pub excerpt_id: String,
    pub text: String,
    pub y: bool,
    /// Cross-validation fold whose test part holds this item.
    pub fold: usize,
}

#[derive(Debug, Clone)]
pub struct LlmEvalConfig {
    pub mode: PromptMode,
    /// Shots for the SHOTS and BOTH modes; `None` uses the default six.
    pub shots: Option<Vec<Shot>>,
    pub retries: u32,
    pub retry_backoff: Duration,
    pub concurrency: usize,
    pub policy: UnparsedPolicy,
    /// Negative-set label written into the report.
    pub negatives: String,
}

impl Default for LlmEvalConfig {
    fn default() -> Self {
        Self {
            mode: PromptMode::Both,
            shots: None,
            retries: 3,
            retry_backoff: Duration::from_millis(250),
            concurrency: 4,
            policy: UnparsedPolicy::Positive,
            negatives: "AN+EN".into(),
        }
    }
}

impl LlmEvalConfig {
    pub fn spec_for(&self, text: &str) -> PromptSpec {
        let mut spec = PromptSpec::standard(self.mode, text);
        if let (true, Some(shots)) = (self.mode.has_shots(), &self.shots) {
            spec.shots = shots.clone();
        }
        spec
    }
}

/// Per-item outcome as persisted next to the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub excerpt_id: String,
    pub fold: usize,
    pub y: u8,
    pub digest: String,
    pub label: VerdictLabel,
    /// Decision after the unparsed policy; `None` when excluded.
    pub predicted: Option<u8>,
    pub reasoning: String,
}

#[derive(Debug, Clone)]
pub struct LlmEvalOutcome {
    pub report: MetricsReport,
    pub verdicts: Vec<VerdictRecord>,
    pub unparsed: usize,
    pub excluded: usize,
    pub network_calls: usize,
    pub cache_hits: usize,
}

/// Verdict for one prompt, served from the cache when possible. Returns
/// whether the endpoint was contacted.
pub fn cached_verdict(
    client: &dyn ChatClient,
    cache: &VerdictCache,
    prompt: &RenderedPrompt,
    cfg: &LlmEvalConfig,
) -> Result<(LlmVerdict, bool), LlmError> {
    let digest = prompt.digest();
    if let Some(hit) = cache.get(client.model(), &digest) {
        return Ok((parse_verdict(&hit.raw), false));
    }
    let started = Instant::now();
    let raw = query_endpoint(client, prompt, cfg.retries, cfg.retry_backoff)?;
    let mut verdict = parse_verdict(&raw);
    verdict.latency_ms = started.elapsed().as_millis() as u64;
    cache.insert(CacheEntry {
        digest,
        model: client.model().to_string(),
        raw,
        label: verdict.label,
        ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    })?;
    Ok((verdict, true))
}

/// Prompts the endpoint for every item, with at most `cfg.concurrency`
/// requests in flight, and scores the binary verdicts per fold.
pub fn run_llm_eval(
    items: &[LlmItem],
    client: &dyn ChatClient,
    cache: &VerdictCache,
    cfg: &LlmEvalConfig,
) -> Result<LlmEvalOutcome, LlmError> {
    if items.is_empty() {
        return Err(LlmError::Config("no items to evaluate".into()));
    }
    if cfg.concurrency == 0 {
        return Err(LlmError::Config("concurrency must be at least 1".into()));
    }
    let prompts: Vec<RenderedPrompt> =
        items.iter().map(|it| render_prompt(&cfg.spec_for(&it.text))).collect::<Result<_, _>>()?;

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<(LlmVerdict, bool)>>> = Mutex::new(vec![None; items.len()]);
    let first_error: Mutex<Option<LlmError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..cfg.concurrency.min(items.len()) {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    return;
                }
                match cached_verdict(client, cache, &prompts[i], cfg) {
                    Ok(v) => results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(v),
                    Err(e) => {
                        failed.store(true, Ordering::SeqCst);
                        first_error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }

    let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut verdicts = Vec::with_capacity(items.len());
    let (mut unparsed, mut excluded, mut network_calls) = (0, 0, 0);
    let mut per_fold: BTreeMap<usize, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    for ((item, prompt), result) in items.iter().zip(&prompts).zip(results) {
        let (verdict, fetched) = result.expect("every item processed");
        network_calls += fetched as usize;
        if verdict.label == VerdictLabel::Unparsed {
            unparsed += 1;
        }
        let predicted = cfg.policy.resolve(verdict.label);
        match predicted {
            Some(p) => {
                let (preds, labels) = per_fold.entry(item.fold).or_default();
                preds.push(p);
                labels.push(item.y);
            }
            None => excluded += 1,
        }
        verdicts.push(VerdictRecord {
            excerpt_id: item.excerpt_id.clone(),
            fold: item.fold,
            y: item.y as u8,
            digest: prompt.digest(),
            label: verdict.label,
            predicted: predicted.map(u8::from),
            reasoning: verdict.reasoning,
        });
    }
    let folds = per_fold
        .into_iter()
        .map(|(fold, (preds, labels))| FoldMetrics::from_predictions(fold, &preds, &labels))
        .collect::<Result<Vec<_>, _>>()?;
    let strategy = format!("llm:{}", client.model());
    let report = aggregate_folds(&strategy, GENERAL_HEAD, &cfg.negatives, folds)?;
    Ok(LlmEvalOutcome { report, verdicts, unparsed, excluded, network_calls, cache_hits: items.len() - network_calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Constant(&'static str);

    impl ChatClient for Constant {
        fn model(&self) -> &str {
            "stub"
        }

        fn complete(&self, _: &RenderedPrompt) -> Result<String, ChatError> {
            Ok(self.0.to_string())
        }
    }

    struct Flaky {
        failures: u32,
        seen: AtomicU32,
    }

    impl ChatClient for Flaky {
        fn model(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _: &RenderedPrompt) -> Result<String, ChatError> {
            if self.seen.fetch_add(1, Ordering::SeqCst) < self.failures {
                Err(ChatError::Transport("connection reset".into()))
            } else {
                Ok("Final Answer: 1".into())
            }
        }
    }

    fn items(n: usize, positives: usize) -> Vec<LlmItem> {
        (0..n)
            .map(|i| LlmItem { excerpt_id: format!("e{i}"), text: format!("excerpt number {i}"), y: i < positives, fold: i % 5 })
            .collect()
    }

    fn prompt() -> RenderedPrompt {
        render_prompt(&PromptSpec::standard(PromptMode::Both, "text")).unwrap()
    }

    fn quick() -> LlmEvalConfig {
        LlmEvalConfig { retry_backoff: Duration::ZERO, ..LlmEvalConfig::default() }
    }

    #[test]
    fn retries_until_success() {
        let c = Flaky { failures: 2, seen: AtomicU32::new(0) };
        assert_eq!(query_endpoint(&c, &prompt(), 3, Duration::ZERO).unwrap(), "Final Answer: 1");
        assert_eq!(c.seen.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn no_retry_surfaces_transport_error() {
        let c = Flaky { failures: 1, seen: AtomicU32::new(0) };
        let err = query_endpoint(&c, &prompt(), 0, Duration::ZERO).unwrap_err();
        assert!(matches!(err, LlmError::Transport { attempts: 1, .. }));
    }

    #[test]
    fn always_negative_has_zero_recall() {
        let client = Constant("Reasoning: none.\nFinal Answer: 0");
        let out = run_llm_eval(&items(50, 10), &client, &VerdictCache::in_memory(), &quick()).unwrap();
        assert_eq!(out.report.mean.recall, 0.0);
        assert_eq!(out.unparsed, 0);
    }

    #[test]
    fn unparsed_policies() {
        let client = Constant("I cannot determine.");
        let data = items(20, 5);
        let cache = VerdictCache::in_memory();
        let pos = run_llm_eval(&data, &client, &cache, &quick()).unwrap();
        assert_eq!(pos.unparsed, 20);
        assert_eq!(pos.report.mean.recall, 1.0);
        let neg = run_llm_eval(&data, &client, &cache, &LlmEvalConfig { policy: UnparsedPolicy::Negative, ..quick() })
            .unwrap();
        assert_eq!(neg.report.mean.recall, 0.0);
        let ex = run_llm_eval(&data, &client, &cache, &LlmEvalConfig { policy: UnparsedPolicy::Exclude, ..quick() });
        assert!(matches!(ex, Err(LlmError::Metric(_))));
    }

    #[test]
    fn cache_prevents_second_query() {
        let client = CountingClient::new(Constant("Final Answer: 1"));
        let cache = VerdictCache::in_memory();
        let data = items(30, 6);
        let first = run_llm_eval(&data, &client, &cache, &quick()).unwrap();
        assert_eq!((first.network_calls, client.calls()), (30, 30));
        let second = run_llm_eval(&data, &client, &cache, &quick()).unwrap();
        assert_eq!((second.network_calls, second.cache_hits, client.calls()), (0, 30, 30));
        assert_eq!(first.verdicts, second.verdicts);
        assert_eq!(first.report, second.report);
    }

    #[test]
    fn verdicts_do_not_depend_on_concurrency() {
        let client = Constant("Final Answer: yes");
        let data = items(40, 7);
        let one = run_llm_eval(&data, &client, &VerdictCache::in_memory(), &LlmEvalConfig { concurrency: 1, ..quick() })
            .unwrap();
        let many = run_llm_eval(&data, &client, &VerdictCache::in_memory(), &LlmEvalConfig { concurrency: 8, ..quick() })
            .unwrap();
        assert_eq!(one.verdicts, many.verdicts);
        assert_eq!(one.report, many.report);
    }

    #[test]
    fn persistent_failure_aborts() {
        let client = Flaky { failures: u32::MAX, seen: AtomicU32::new(0) };
        let cfg = LlmEvalConfig { retries: 1, ..quick() };
        assert!(matches!(
            run_llm_eval(&items(5, 1), &client, &VerdictCache::in_memory(), &cfg),
            Err(LlmError::Transport { attempts: 2, .. })
        ));
    }
}
