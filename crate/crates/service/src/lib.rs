//! Network side of the IUL toolkit: the review-queue REST API, a client for
//! external scorer backends, and an OpenAI-compatible chat client for the
//! prompting harness.

mod api;
mod chat;
mod scorer;
mod server;

pub use api::{router, ApiState, DecisionRequest, EnqueueRequest, EnqueueResponse, ErrorBody, API_PREFIX};
pub use chat::{ChatEndpointConfig, OpenAiChatClient, LLM_TOKEN_ENV};
pub use scorer::{HttpScorer, ScorerConfig, ScoreRequest, ScoreResponse, SCORER_TOKEN_ENV, SCORER_URL_ENV};
pub use server::{serve_blocking, BackgroundServer, REVIEW_TOKEN_ENV};
