use std::sync::Arc;
use std::time::Duration;

use super::config::RunConfig;
use super::RunError;
use crate::gateway::stubs::{
    CharCountRater, HashNoisePerplexity, LengthPreference, LexiconJudge, LexiconRewriter,
    TokenOverlapSimilarity,
};
use crate::gateway::{
    Gateway, HttpChatBackend, HttpScoreBackend, LikertRater, LlmLikertRater, LlmPairwiseJudge,
    LlmRewriteGenerator, PairwiseJudge, PerplexityScorer, PreferenceBackend, RetryPolicy,
    RewriteGenerator, SimilarityScorer, UsageTotals,
};

/// Every backend a stage may need, bound from the config.
pub struct Backends {
    pub rater: Box<dyn LikertRater>,
    pub judge: Box<dyn PairwiseJudge>,
    pub rewriter: Box<dyn RewriteGenerator>,
    pub perplexity: Box<dyn PerplexityScorer>,
    pub similarity: Box<dyn SimilarityScorer>,
    pub preference: Box<dyn PreferenceBackend>,
    gateway: Option<Arc<Gateway>>,
}

impl Backends {
    pub fn offline() -> Self {
        Backends {
            rater: Box::new(CharCountRater),
            judge: Box::new(LexiconJudge),
            rewriter: Box::new(LexiconRewriter),
            perplexity: Box::new(HashNoisePerplexity),
            similarity: Box::new(TokenOverlapSimilarity),
            preference: Box::new(LengthPreference),
            gateway: None,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self, RunError> {
        let b = &cfg.backend;
        if b.offline {
            return Ok(Backends::offline());
        }
        if std::env::var_os(&b.api_key_env).is_none() {
            return Err(RunError::Config(format!(
                "environment variable {} holds no API key; set it or run with --offline",
                b.api_key_env
            )));
        }
        let timeout = Duration::from_secs(b.timeout_secs);
        let chat = HttpChatBackend::new(&b.endpoint, &b.model, &b.api_key_env, timeout);
        let policy = RetryPolicy {
            max_retries: b.max_retries,
            ..RetryPolicy::default()
        };
        let gateway = Arc::new(Gateway::new(Arc::new(chat), policy, b.max_in_flight));
        let examples = match &b.few_shot_examples {
            Some(p) => {
                let path = cfg.resolve(p);
                Some(std::fs::read_to_string(&path).map_err(|e| {
                    RunError::Config(format!("few-shot examples {}: {e}", path.display()))
                })?)
            }
            None => None,
        };
        let score = |name: &str, endpoint: &Option<String>| {
            endpoint
                .as_ref()
                .map(|e| HttpScoreBackend::new(e, timeout))
                .ok_or_else(|| {
                    RunError::Config(format!(
                        "backend.{name}_endpoint is required when backend.offline = false"
                    ))
                })
        };
        Ok(Backends {
            rater: Box::new(LlmLikertRater::new(gateway.clone(), b.temperature)),
            judge: Box::new(LlmPairwiseJudge::new(
                gateway.clone(),
                examples,
                b.temperature,
                b.judge_votes,
            )),
            rewriter: Box::new(LlmRewriteGenerator::new(gateway.clone(), b.temperature)),
            perplexity: Box::new(score("perplexity", &b.perplexity_endpoint)?),
            similarity: Box::new(score("similarity", &b.similarity_endpoint)?),
            preference: Box::new(score("preference", &b.preference_endpoint)?),
            gateway: Some(gateway),
        })
    }

    /// Chat usage so far; zero for the stubs.
    pub fn usage(&self) -> UsageTotals {
        self.gateway.as_ref().map(|g| g.usage()).unwrap_or_default()
    }
}
