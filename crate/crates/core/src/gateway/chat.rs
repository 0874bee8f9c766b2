use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GatewayError, UsageTotals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, temperature: f64) -> Self {
        ChatRequest {
            messages,
            temperature,
        }
    }
}

/// One request/response round trip with its token accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when token counts come from the whitespace proxy instead of the endpoint.
    pub approximate_tokens: bool,
}

impl ChatExchange {
    /// Builds an exchange whose token counts are whitespace-token proxies.
    pub fn approximate(request: ChatRequest, response: String) -> Self {
        let input_tokens = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count() as u64)
            .sum();
        let output_tokens = response.split_whitespace().count() as u64;
        ChatExchange {
            request,
            response,
            input_tokens,
            output_tokens,
            approximate_tokens: true,
        }
    }
}

/// A chat-completion transport. Implementations must be idempotent reads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError>;

    /// Remote backends are not reproducible run to run.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Exponential backoff: `initial * multiplier^k`, capped at `max_delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    #[serde(with = "millis")]
    pub initial_delay: Duration,
    pub multiplier: f64,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            initial_delay: Duration::from_millis(500),
            multiplier: 2.0,
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: usize) -> Self {
        RetryPolicy {
            max_retries,
            initial_delay: Duration::ZERO,
            multiplier: 2.0,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: usize) -> Duration {
        let factor = self.multiplier.powi(retry.saturating_sub(1) as i32);
        self.initial_delay.mul_f64(factor).min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub exchange: ChatExchange,
    pub attempts: usize,
}

/// Sends `request`, retrying transient failures with backoff.
///
/// Non-retryable errors return immediately. After `max_retries` retries the
/// last cause is wrapped in [`GatewayError::Exhausted`].
pub fn complete_with_retry(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<Completion, GatewayError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.complete(request) {
            Ok(exchange) => return Ok(Completion { exchange, attempts }),
            Err(e) if !e.is_retryable() => return Err(e),
            Err(e) if attempts > policy.max_retries => {
                return Err(GatewayError::Exhausted {
                    attempts,
                    cause: Box::new(e),
                })
            }
            Err(_) => std::thread::sleep(policy.delay(attempts)),
        }
    }
}

struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// A shareable chat client: retry policy, in-flight cap and usage ledger.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    policy: RetryPolicy,
    limiter: Limiter,
    usage: Mutex<UsageTotals>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, policy: RetryPolicy, max_in_flight: usize) -> Self {
        Gateway {
            backend,
            policy,
            limiter: Limiter {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                cap: max_in_flight.max(1),
            },
            usage: Mutex::new(UsageTotals::default()),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        let completion = {
            let _permit = self.limiter.acquire();
            complete_with_retry(self.backend.as_ref(), request, &self.policy)?
        };
        let ex = &completion.exchange;
        let mut usage = self.usage.lock().expect("usage poisoned");
        usage.requests += 1;
        usage.input_tokens += ex.input_tokens;
        usage.output_tokens += ex.output_tokens;
        usage.approximate |= ex.approximate_tokens;
        Ok(completion.exchange)
    }

    pub fn usage(&self) -> UsageTotals {
        self.usage.lock().expect("usage poisoned").clone()
    }

    pub fn is_deterministic(&self) -> bool {
        self.backend.is_deterministic()
    }
}
