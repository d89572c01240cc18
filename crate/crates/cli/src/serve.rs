use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use iul_core::jsonl::read_jsonl;
use iul_core::review::{FlaggedPrediction, ReviewStore};
use iul_service::{router, serve_blocking, ApiState, REVIEW_TOKEN_ENV};

use crate::config::RunConfig;
use crate::error::{Context, ErrorKind, StageError, StageResult};
use crate::manifest::Workspace;

pub fn run(ws: &Workspace, cfg: &RunConfig, enqueue: &[PathBuf], serve: bool) -> StageResult<()> {
    let token = std::env::var(REVIEW_TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if serve && token.is_none() {
        return Err(StageError::config(format!("set {REVIEW_TOKEN_ENV} to the bearer token reviewers will use")));
    }
    let dir = cfg.review.store.clone().unwrap_or_else(|| ws.path("review"));
    let store = ReviewStore::open(&dir)
        .or_kind(ErrorKind::Io, "opening review store")?
        .with_audit_mode(cfg.review.audit_mode);
    for path in enqueue {
        if !path.exists() {
            return Err(StageError::missing(format!("{} does not exist; run `iul predict` first", path.display())));
        }
        let rows: Vec<FlaggedPrediction> = read_jsonl(path).or_kind(ErrorKind::Data, "reading predictions")?;
        let added = store.enqueue_flagged(&rows).or_kind(ErrorKind::Io, "enqueueing")?;
        println!("serve: enqueued {added} of {} predictions from {}", rows.len(), path.display());
    }
    let Some(token) = token.filter(|_| serve) else {
        return Ok(());
    };
    let addr: SocketAddr = cfg
        .review
        .bind
        .parse()
        .map_err(|e| StageError::config(format!("bad bind address `{}`: {e}", cfg.review.bind)))?;
    let app = router(ApiState::new(Arc::new(store), token));
    serve_blocking(addr, app, |bound| {
        println!("serve: listening on http://{bound}");
    })
    .or_kind(ErrorKind::Io, "serving")
}
