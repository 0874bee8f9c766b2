use std::time::Duration;

use serde_json::{json, Value};

use super::backends::{PerplexityScorer, PreferenceBackend, SimilarityScorer};
use super::{ChatBackend, ChatExchange, ChatRequest, GatewayError};

/// Environment variable holding the API key unless configured otherwise.
pub const DEFAULT_API_KEY_ENV: &str = "VALUESCOPE_API_KEY";

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn classify(err: ureq::Error) -> GatewayError {
    match err {
        ureq::Error::StatusCode(401 | 403) => GatewayError::Auth(err.to_string()),
        ureq::Error::StatusCode(429) => GatewayError::RateLimited(err.to_string()),
        ureq::Error::StatusCode(code) if code >= 500 => GatewayError::Transient(err.to_string()),
        ureq::Error::StatusCode(_) => GatewayError::Backend(err.to_string()),
        other => GatewayError::Transient(other.to_string()),
    }
}

/// Chat-completion endpoint speaking the common message-list JSON protocol.
///
/// The key is read from `api_key_env` at call time and sent as a bearer
/// token; it never appears in configuration files.
pub struct HttpChatBackend {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key_env: impl Into<String>,
        timeout: Duration,
    ) -> Self {
        HttpChatBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: api_key_env.into(),
            agent: agent(timeout),
        }
    }

    fn payload(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        let key = std::env::var(&self.api_key_env).map_err(|_| {
            GatewayError::Auth(format!(
                "environment variable {} is not set",
                self.api_key_env
            ))
        })?;
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .content_type("application/json")
            .send(self.payload(request).to_string())
            .map_err(classify)?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::Transient(format!("malformed response body: {e}")))?;
        let text = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                GatewayError::Backend("response lacks choices[0].message.content".into())
            })?
            .to_owned();
        let usage = (
            body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            body.pointer("/usage/completion_tokens")
                .and_then(Value::as_u64),
        );
        Ok(match usage {
            (Some(input_tokens), Some(output_tokens)) => ChatExchange {
                request: request.clone(),
                response: text,
                input_tokens,
                output_tokens,
                approximate_tokens: false,
            },
            _ => ChatExchange::approximate(request.clone(), text),
        })
    }
}

/// A scoring service reached over HTTP: posts `{"text": ...}` (or
/// `{"reference": ..., "candidate": ...}` for similarity) and reads
/// `{"score": <number>}`. This is the drop-in point for externally hosted
/// perplexity, similarity and preference models.
pub struct HttpScoreBackend {
    pub endpoint: String,
    agent: ureq::Agent,
}

impl HttpScoreBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpScoreBackend {
            endpoint: endpoint.into(),
            agent: agent(timeout),
        }
    }

    fn score(&self, payload: Value) -> Result<f64, GatewayError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .content_type("application/json")
            .send(payload.to_string())
            .map_err(classify)?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::Transient(format!("malformed response body: {e}")))?;
        body.get("score")
            .and_then(Value::as_f64)
            .filter(|s| s.is_finite())
            .ok_or_else(|| GatewayError::Backend("response lacks a finite `score`".into()))
    }
}

impl PerplexityScorer for HttpScoreBackend {
    fn perplexity(&self, text: &str) -> Result<f64, GatewayError> {
        let p = self.score(json!({ "text": text }))?;
        if p > 0.0 {
            Ok(p)
        } else {
            Err(GatewayError::Backend(format!(
                "non-positive perplexity {p}"
            )))
        }
    }
}

impl SimilarityScorer for HttpScoreBackend {
    fn similarity(&self, reference: &str, candidate: &str) -> Result<f64, GatewayError> {
        Ok(self
            .score(json!({ "reference": reference, "candidate": candidate }))?
            .clamp(-1.0, 1.0))
    }
}

impl PreferenceBackend for HttpScoreBackend {
    fn score(&self, input: &str) -> Result<f64, GatewayError> {
        HttpScoreBackend::score(self, json!({ "text": input }))
    }
}
