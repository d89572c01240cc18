//! Few-shot prompting of chat-completion models for the general IUL
//! decision: prompt rendering, verdict parsing, a response cache, and a
//! bounded-concurrency evaluation loop.

mod cache;
mod harness;
mod prompt;
mod verdict;

pub use cache::{CacheEntry, VerdictCache};
pub use harness::{
    cached_verdict, query_endpoint, run_llm_eval, ChatClient, ChatError, CountingClient, LlmEvalConfig,
    LlmEvalOutcome, LlmItem, UnparsedPolicy, VerdictRecord,
};
pub use prompt::{
    build_prompt, default_shots, render_prompt, PromptMode, PromptSpec, RenderedPrompt, Shot, DEFINITIONS,
    SYSTEM_PROMPT,
};
pub use verdict::{parse_verdict, LlmVerdict, VerdictLabel};

use crate::evaluation::MetricError;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("target excerpt is empty")]
    EmptyExcerpt,
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("endpoint unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint protocol error: {0}")]
    Protocol(String),
    #[error("cache i/o error on {path}: {source}")]
    Cache { path: String, source: std::io::Error },
    #[error("{path}:{line}: bad cache entry: {message}")]
    CacheFormat { path: String, line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
