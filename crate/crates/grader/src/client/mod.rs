//! Chat-completion client: request construction with deterministic
//! parameters, retry with exponential backoff, a concurrency limiter,
//! usage accounting, and cost estimation.
//!
//! Transports are pluggable: [`HttpTransport`] speaks the de facto
//! chat-completion wire shape over HTTPS, [`MockTransport`] replays scripted
//! responses keyed by a stable hash of the rendered prompt.

mod transport;

pub use transport::{prompt_hash, request_hash, HttpTransport, MockTransport, ScriptEntry};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::config::Config;
use crate::core::TokenUsage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport exhausted after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("context overflow: {0}")]
    ContextOverflow(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no scripted response for prompt hash {hash} (prompt starts {preview:?})")]
    UnscriptedPrompt { hash: String, preview: String },
    #[error("mock script {path}: {detail}")]
    BadScript { path: String, detail: String },
    #[error("invalid cost meter: {0}")]
    InvalidMeter(String),
}

/// One failed transport attempt: transient failures are retried with
/// backoff, fatal ones surface immediately.
#[derive(Debug)]
pub enum TransportFailure {
    Transient(String),
    Fatal(ClientError),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure>;
}

impl Transport for Box<dyn Transport> {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Message {
        Message { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn new(
        model_id: impl Into<String>,
        messages: Vec<Message>,
        temperature: f64,
        top_p: f64,
        max_output_tokens: u32,
    ) -> Result<ChatRequest, ClientError> {
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(ClientError::InvalidRequest("temperature must be >= 0".to_string()));
        }
        if !top_p.is_finite() || top_p <= 0.0 || top_p > 1.0 {
            return Err(ClientError::InvalidRequest("top_p must be in (0, 1]".to_string()));
        }
        if max_output_tokens == 0 {
            return Err(ClientError::InvalidRequest("max_output_tokens must be positive".to_string()));
        }
        if messages.is_empty() {
            return Err(ClientError::InvalidRequest("at least one message required".to_string()));
        }
        Ok(ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature,
            top_p,
            max_output_tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenUsage,
    pub finish_reason: FinishReason,
}

/// Retry and concurrency policy for [`Client::complete`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub max_concurrency: usize,
}

impl RetryPolicy {
    pub fn new(
        max_attempts: u32,
        base_backoff: Duration,
        max_concurrency: usize,
    ) -> Result<RetryPolicy, ClientError> {
        if max_attempts == 0 {
            return Err(ClientError::InvalidRequest("max_attempts must be at least 1".to_string()));
        }
        if max_concurrency == 0 {
            return Err(ClientError::InvalidRequest("max_concurrency must be at least 1".to_string()));
        }
        Ok(RetryPolicy { max_attempts, base_backoff, max_concurrency })
    }

    pub fn from_config(config: &Config) -> RetryPolicy {
        RetryPolicy {
            max_attempts: config.max_attempts.max(1),
            base_backoff: Duration::from_millis(config.base_backoff_ms),
            max_concurrency: config.max_concurrency.max(1),
        }
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            max_concurrency: 4,
        }
    }
}

/// Builds a quiz grading request: a single user message with the defaults
/// (or overrides) from the config; 200 output tokens by default.
pub fn quiz_request(prompt: &str, config: &Config) -> Result<ChatRequest, ClientError> {
    single_user_request(prompt, config, config.max_tokens_quiz)
}

/// Builds a report grading request; 1500 output tokens by default.
pub fn report_request(prompt: &str, config: &Config) -> Result<ChatRequest, ClientError> {
    single_user_request(prompt, config, config.max_tokens_report)
}

fn single_user_request(
    prompt: &str,
    config: &Config,
    max_output_tokens: u32,
) -> Result<ChatRequest, ClientError> {
    if prompt.trim().is_empty() {
        return Err(ClientError::EmptyPrompt);
    }
    ChatRequest::new(
        config.model_id.clone(),
        vec![Message::user(prompt)],
        config.temperature,
        config.top_p,
        max_output_tokens,
    )
}

/// Heuristic tokenizer: one token per four characters, rounded up. Used only
/// to gate over-long reports; never for billing-grade counts.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Monotone token totals priced at per-million-token rates, with an optional
/// cached-input discount. Safe for concurrent recording.
#[derive(Debug)]
pub struct CostMeter {
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
    calls: AtomicU64,
    input_rate: f64,
    output_rate: f64,
    cached_input_fraction: f64,
}

impl CostMeter {
    pub fn new(
        input_rate: f64,
        output_rate: f64,
        cached_input_fraction: f64,
    ) -> Result<CostMeter, ClientError> {
        if input_rate < 0.0 || output_rate < 0.0 {
            return Err(ClientError::InvalidMeter("rates must be non-negative".to_string()));
        }
        if !(0.0..=1.0).contains(&cached_input_fraction) {
            return Err(ClientError::InvalidMeter(
                "cached_input_fraction must be in [0, 1]".to_string(),
            ));
        }
        Ok(CostMeter {
            input_tokens: AtomicU64::new(0),
            output_tokens: AtomicU64::new(0),
            calls: AtomicU64::new(0),
            input_rate,
            output_rate,
            cached_input_fraction,
        })
    }

    pub fn from_config(config: &Config) -> Result<CostMeter, ClientError> {
        CostMeter::new(config.input_rate, config.output_rate, config.cached_input_fraction)
    }

    /// Records the usage of one completed call.
    pub fn record(&self, usage: TokenUsage) {
        self.input_tokens.fetch_add(usage.input_tokens, Ordering::Relaxed);
        self.output_tokens.fetch_add(usage.output_tokens, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens.load(Ordering::Relaxed),
            output_tokens: self.output_tokens.load(Ordering::Relaxed),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn input_rate(&self) -> f64 {
        self.input_rate
    }

    pub fn output_rate(&self) -> f64 {
        self.output_rate
    }

    pub fn cached_input_fraction(&self) -> f64 {
        self.cached_input_fraction
    }
}

/// Estimated dollar cost of the metered usage.
///
/// Cached input tokens are billed at half the input rate — an estimate knob,
/// not a provider guarantee:
///
/// `cost = (in·(1-f)·rate_in + in·f·rate_in/2 + out·rate_out) / 1e6`
pub fn estimate_cost(meter: &CostMeter) -> f64 {
    let usage = meter.usage();
    let cached_rate = meter.input_rate / 2.0;
    let fraction = meter.cached_input_fraction;
    let input = usage.input_tokens as f64;
    let output = usage.output_tokens as f64;
    (input * (1.0 - fraction) * meter.input_rate
        + input * fraction * cached_rate
        + output * meter.output_rate)
        / 1_000_000.0
}

/// Counting semaphore bounding in-flight completions.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Semaphore {
        Semaphore { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// A transport bound to a retry policy and a cost meter. Safe to share
/// across grading threads; `max_concurrency` is enforced internally.
pub struct Client<T: Transport> {
    transport: T,
    policy: RetryPolicy,
    meter: CostMeter,
    limiter: Semaphore,
}

/// Client over a boxed transport, chosen at runtime (live or mock).
pub type DynClient = Client<Box<dyn Transport>>;

impl<T: Transport> Client<T> {
    pub fn new(transport: T, policy: RetryPolicy, meter: CostMeter) -> Client<T> {
        let limiter = Semaphore::new(policy.max_concurrency);
        Client { transport, policy, meter, limiter }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Sends the request, retrying transient failures (rate limits, 5xx,
    /// timeouts) up to `max_attempts` with exponential backoff and ±20%
    /// jitter. Auth and context-overflow failures are never retried.
    /// Successful usage is recorded into the cost meter.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let _permit = self.limiter.acquire();
        let mut last = String::new();
        for attempt in 1..=self.policy.max_attempts {
            match self.transport.send(request) {
                Ok(response) => {
                    self.meter.record(response.usage);
                    return Ok(response);
                }
                Err(TransportFailure::Fatal(error)) => return Err(error),
                Err(TransportFailure::Transient(message)) => {
                    last = message;
                    if attempt < self.policy.max_attempts {
                        std::thread::sleep(backoff_delay(self.policy.base_backoff, attempt));
                    }
                }
            }
        }
        Err(ClientError::Transport { attempts: self.policy.max_attempts, last })
    }

    pub fn meter(&self) -> &CostMeter {
        &self.meter
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }
}

/// `base · 2^(attempt-1)`, jittered by ±20%, capped at 60 s.
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = base.as_secs_f64() * 2f64.powi(attempt.saturating_sub(1) as i32);
    let jitter = rand::thread_rng().gen_range(0.8..=1.2);
    Duration::from_secs_f64((exp * jitter).min(60.0))
}
