//! Model interactions behind narrow contracts.
//!
//! Everything that talks to a language model or a learned scorer lives here:
//! prompt templates, chat transport with retries and a concurrency cap, cost
//! accounting, response parsing, and the backend traits the analysis modules
//! consume. Offline stubs in [`stubs`] satisfy every contract deterministically.

mod backends;
mod chat;
mod cost;
mod http;
mod parse;
mod prompt;
pub mod stubs;

pub use backends::{
    CommentContext, LikertRater, LlmLikertRater, LlmPairwiseJudge, LlmRewriteGenerator, PairChoice,
    PairwiseJudge, PerplexityScorer, PreferenceBackend, RewriteGenerator, SimilarityScorer,
};
pub use chat::{
    complete_with_retry, ChatBackend, ChatExchange, ChatMessage, ChatRequest, Completion, Gateway,
    RetryPolicy,
};
pub use cost::{estimate_cost, PriceSheet, UsageTotals};
pub use http::{HttpChatBackend, HttpScoreBackend, DEFAULT_API_KEY_ENV};
pub use parse::{parse_likert, parse_pairwise};
pub use prompt::{PromptTemplate, Templates};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("missing slot {0}")]
    MissingSlot(String),
    #[error("template `{template}` references undeclared slot {slot}")]
    UndeclaredSlot { template: String, slot: String },
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("retries exhausted after {attempts} attempts: {cause}")]
    Exhausted {
        attempts: usize,
        cause: Box<GatewayError>,
    },
    #[error("unparsable response: {0}")]
    Parse(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("gateway misconfigured: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Transient(_) | GatewayError::RateLimited(_)
        )
    }

    /// Errors that will recur on every request, so a batch should stop.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::Auth(_)
                | GatewayError::Config(_)
                | GatewayError::Invalid(_)
                | GatewayError::MissingSlot(_)
                | GatewayError::UndeclaredSlot { .. }
        )
    }
}
