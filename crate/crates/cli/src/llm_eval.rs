//! Evaluates a chat-completion model as a general IUL detector over the
//! labeled set, fold by fold.

use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use iul_core::experiment::NegativeSet;
use iul_core::labeling::LabelSource;
use iul_core::llm::{run_llm_eval, LlmError, LlmEvalConfig, LlmItem, PromptMode, UnparsedPolicy, VerdictCache};
use iul_core::splitting::{FoldPlan, Part};
use iul_service::{ChatEndpointConfig, OpenAiChatClient};

use crate::config::RunConfig;
use crate::data::{read_labeled, FOLD_PLAN, LABELED};
use crate::error::{Context, ErrorKind, StageError, StageResult};
use crate::manifest::{StageRun, Workspace};
use crate::models::write_reports;

/// Response cache shared by every llm-eval run in the output directory.
/// Not a stage artifact: entries carry fetch timestamps.
pub const CACHE: &str = "cache/llm_responses.jsonl";

#[derive(Serialize)]
struct LlmStageConfig<'a> {
    model: &'a str,
    mode: PromptMode,
    policy: UnparsedPolicy,
    negatives: NegativeSet,
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect()
}

fn test_fold(plan: &FoldPlan, id: &str) -> Option<usize> {
    (0..plan.folds.len()).find(|&f| plan.part_of(f, id) == Some(Part::Test))
}

pub fn run(ws: &Workspace, cfg: &RunConfig) -> StageResult<()> {
    let l = &cfg.llm;
    let base_url =
        l.base_url.as_deref().ok_or_else(|| StageError::config("no chat endpoint: set llm.base_url or pass --base-url"))?;
    let labeled_path = ws.require(LABELED, "label")?;
    let plan_path = ws.require(FOLD_PLAN, "split")?;
    let records = read_labeled(ws)?;
    let plan = FoldPlan::load(&plan_path).or_kind(ErrorKind::Data, "reading fold plan")?;

    let items: Vec<LlmItem> = records
        .iter()
        .filter(|r| r.source == LabelSource::Positive || l.negatives.includes(r.source))
        .map(|r| {
            let fold = test_fold(&plan, &r.excerpt_id).ok_or_else(|| {
                StageError::stale(format!("{} is in no test fold; rerun `iul split`", r.excerpt_id))
            })?;
            Ok(LlmItem { excerpt_id: r.excerpt_id.clone(), text: r.text.clone(), y: r.y == 1, fold })
        })
        .collect::<StageResult<_>>()?;

    let stage_cfg = LlmStageConfig { model: &l.model, mode: l.mode, policy: l.policy, negatives: l.negatives };
    let dir = Path::new("llm").join(format!(
        "{}_{}_{}",
        slug(&l.model),
        serde_json::to_value(l.mode).expect("mode serializes").as_str().expect("string"),
        l.negatives.slug()
    ));
    let mut run = StageRun::new(ws, "llm-eval", dir, &stage_cfg)?;
    run.input_file("labeled", &labeled_path)?;
    run.input_file("fold_plan", &plan_path)?;

    let chat = ChatEndpointConfig {
        timeout: Duration::from_secs(l.timeout_secs),
        ..ChatEndpointConfig::new(base_url, &l.model)
    }
    .with_token_from_env(&l.token_env);
    let client = OpenAiChatClient::new(chat);
    let cache = VerdictCache::open(ws.path(CACHE)).or_kind(ErrorKind::Io, "opening response cache")?;
    let eval_cfg = LlmEvalConfig {
        mode: l.mode,
        shots: None,
        retries: l.retries,
        retry_backoff: Duration::from_millis(l.retry_backoff_ms),
        concurrency: l.concurrency,
        policy: l.policy,
        negatives: l.negatives.as_str().to_string(),
    };
    let outcome = run_llm_eval(&items, &client, &cache, &eval_cfg).map_err(|e| match e {
        LlmError::Transport { .. } | LlmError::Protocol(_) => StageError::endpoint(e.to_string()),
        LlmError::Config(_) | LlmError::InvalidSpec(_) => StageError::config(e.to_string()),
        other => StageError::io(other.to_string()),
    })?;

    run.write("verdicts.jsonl", iul_core::jsonl::to_jsonl_string(&outcome.verdicts))?;
    write_reports(&mut run, std::slice::from_ref(&outcome.report))?;
    run.fact("unparsed", outcome.unparsed);
    run.fact("excluded", outcome.excluded);
    run.finish()?;
    print!("{}", iul_core::evaluation::render_table(std::slice::from_ref(&outcome.report)));
    println!(
        "llm-eval: {} items, {} unparsed, {} excluded, {} endpoint calls, {} cache hits",
        items.len(),
        outcome.unparsed,
        outcome.excluded,
        outcome.network_calls,
        outcome.cache_hits
    );
    Ok(())
}
