//! Live HTTPS transport and the scripted mock transport.
//!
//! The wire shape is the de facto chat-completion JSON: a request body with
//! `model`, `messages[]`, `temperature`, `top_p`, and `max_tokens`; the
//! response is read from the first choice's message content plus the usage
//! counts. Any compatible endpoint (or a local stub server) works.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, ClientError, FinishReason, Transport, TransportFailure};
use crate::config::Config;
use crate::core::TokenUsage;

/// Stable key for scripted responses: SHA-256 of the rendered prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Hash of a request's message contents, matching [`prompt_hash`] for the
/// single-user-message requests this toolkit sends.
pub fn request_hash(request: &ChatRequest) -> String {
    let joined: Vec<&str> = request.messages.iter().map(|m| m.content.as_str()).collect();
    prompt_hash(&joined.join("\n"))
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn wire_request(request: &ChatRequest) -> WireRequest<'_> {
    WireRequest {
        model: &request.model_id,
        messages: request
            .messages
            .iter()
            .map(|m| WireMessage { role: m.role.as_str(), content: &m.content })
            .collect(),
        temperature: request.temperature,
        top_p: request.top_p,
        max_tokens: request.max_output_tokens,
    }
}

/// Maps an HTTP status to retryable vs fatal. Transient: 408, 429, and 5xx.
/// Fatal: auth failures, context overflow, and other 4xx.
fn classify_status(status: u16, body: &str) -> TransportFailure {
    match status {
        401 | 403 => TransportFailure::Fatal(ClientError::Auth(format!("HTTP {status}"))),
        408 | 429 | 500..=599 => TransportFailure::Transient(format!("HTTP {status}")),
        413 => TransportFailure::Fatal(ClientError::ContextOverflow(format!("HTTP {status}"))),
        400 if body.contains("context_length") || body.contains("maximum context") => {
            TransportFailure::Fatal(ClientError::ContextOverflow(format!("HTTP {status}: {body}")))
        }
        _ => TransportFailure::Fatal(ClientError::InvalidRequest(format!("HTTP {status}: {body}"))),
    }
}

fn parse_response_body(body: &str) -> Result<ChatResponse, TransportFailure> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| {
        TransportFailure::Fatal(ClientError::InvalidRequest(format!("unparseable response: {e}")))
    })?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| {
        TransportFailure::Fatal(ClientError::InvalidRequest("response has no choices".to_string()))
    })?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Other,
    };
    let usage = wire
        .usage
        .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
        .unwrap_or_default();
    Ok(ChatResponse {
        content: choice.message.content.unwrap_or_default(),
        usage,
        finish_reason,
    })
}

/// Live chat-completion transport over HTTPS.
pub struct HttpTransport {
    endpoint_url: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpTransport {
    /// Reads the API key from the env var named in the config.
    pub fn from_config(config: &Config) -> Result<HttpTransport, ClientError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ClientError::Auth(format!("environment variable {} is not set", config.api_key_env))
        })?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpTransport { endpoint_url: config.endpoint_url.clone(), api_key, http })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure> {
        let response = self
            .http
            .post(&self.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&wire_request(request))
            .send()
            .map_err(|e| {
                // Connection-level failures are worth retrying.
                TransportFailure::Transient(format!("request failed: {e}"))
            })?;
        let status = response.status().as_u16();
        let body = response.text().unwrap_or_default();
        if (200..300).contains(&status) {
            parse_response_body(&body)
        } else {
            Err(classify_status(status, &body))
        }
    }
}

/// One scripted response, keyed by prompt hash. `fail_count` transient
/// failures are served before the response, for retry testing. The hash
/// `"*"` marks a catch-all default entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt_hash: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default)]
    pub fail_count: u32,
}

pub const SCRIPT_DEFAULT_HASH: &str = "*";

/// Deterministic scripted stand-in for the chat-completion endpoint.
pub struct MockTransport {
    entries: HashMap<String, ScriptEntry>,
    default_entry: Option<ScriptEntry>,
    failures_left: Mutex<HashMap<String, u32>>,
    attempts: AtomicU64,
}

impl MockTransport {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> MockTransport {
        let mut map = HashMap::new();
        let mut default_entry = None;
        let mut failures_left = HashMap::new();
        for entry in entries {
            if entry.fail_count > 0 {
                failures_left.insert(entry.prompt_hash.clone(), entry.fail_count);
            }
            if entry.prompt_hash == SCRIPT_DEFAULT_HASH {
                default_entry = Some(entry);
            } else {
                map.insert(entry.prompt_hash.clone(), entry);
            }
        }
        MockTransport {
            entries: map,
            default_entry,
            failures_left: Mutex::new(failures_left),
            attempts: AtomicU64::new(0),
        }
    }

    /// Loads a JSON script file: a list of entries.
    pub fn load(path: &Path) -> Result<MockTransport, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::BadScript {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(&text).map_err(|e| ClientError::BadScript {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        Ok(MockTransport::from_entries(entries))
    }

    /// Total send attempts, including scripted failures.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let hash = request_hash(request);
        let entry = match self.entries.get(&hash) {
            Some(entry) => entry,
            None => self.default_entry.as_ref().ok_or_else(|| {
                let preview: String = request
                    .messages
                    .first()
                    .map(|m| m.content.chars().take(60).collect())
                    .unwrap_or_default();
                TransportFailure::Fatal(ClientError::UnscriptedPrompt { hash: hash.clone(), preview })
            })?,
        };
        let mut failures = self.failures_left.lock().unwrap();
        if let Some(remaining) = failures.get_mut(&entry.prompt_hash) {
            if *remaining > 0 {
                *remaining -= 1;
                return Err(TransportFailure::Transient("scripted transient failure".to_string()));
            }
        }
        Ok(ChatResponse {
            content: entry.response_text.clone(),
            usage: TokenUsage::new(entry.input_tokens, entry.output_tokens),
            finish_reason: FinishReason::Stop,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{quiz_request, Message, Role};

    #[test]
    fn wire_request_shape() {
        let request = ChatRequest::new(
            "gpt-4o",
            vec![Message { role: Role::User, content: "grade it".to_string() }],
            0.0,
            1.0,
            200,
        )
        .unwrap();
        let json = serde_json::to_value(wire_request(&request)).unwrap();
        assert_eq!(json["model"], "gpt-4o");
        assert_eq!(json["temperature"], 0.0);
        assert_eq!(json["top_p"], 1.0);
        assert_eq!(json["max_tokens"], 200);
        assert_eq!(json["messages"][0]["role"], "user");
        assert_eq!(json["messages"][0]["content"], "grade it");
    }

    #[test]
    fn response_body_parsing() {
        let body = r#"{
            "choices": [{"message": {"content": "Grade: 0.2"}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 450, "completion_tokens": 4}
        }"#;
        let response = parse_response_body(body).unwrap();
        assert_eq!(response.content, "Grade: 0.2");
        assert_eq!(response.usage, TokenUsage::new(450, 4));
        assert_eq!(response.finish_reason, FinishReason::Stop);

        let truncated = r#"{"choices": [{"message": {"content": "x"}, "finish_reason": "length"}]}"#;
        let response = parse_response_body(truncated).unwrap();
        assert_eq!(response.finish_reason, FinishReason::Length);
        assert_eq!(response.usage, TokenUsage::default());

        assert!(parse_response_body(r#"{"choices": []}"#).is_err());
        assert!(parse_response_body("not json").is_err());
    }

    #[test]
    fn status_classification() {
        assert!(matches!(classify_status(429, ""), TransportFailure::Transient(_)));
        assert!(matches!(classify_status(500, ""), TransportFailure::Transient(_)));
        assert!(matches!(classify_status(503, ""), TransportFailure::Transient(_)));
        assert!(matches!(
            classify_status(401, ""),
            TransportFailure::Fatal(ClientError::Auth(_))
        ));
        assert!(matches!(
            classify_status(400, r#"{"error": {"code": "context_length_exceeded"}}"#),
            TransportFailure::Fatal(ClientError::ContextOverflow(_))
        ));
        assert!(matches!(
            classify_status(400, "bad request"),
            TransportFailure::Fatal(ClientError::InvalidRequest(_))
        ));
    }

    #[test]
    fn mock_keys_by_prompt_hash() {
        let config = Config::default();
        let entry = ScriptEntry {
            prompt_hash: prompt_hash("the prompt"),
            response_text: "Grade: 0.1\nExplanation: Partial.".to_string(),
            input_tokens: 10,
            output_tokens: 12,
            fail_count: 0,
        };
        let mock = MockTransport::from_entries(vec![entry]);
        let request = quiz_request("the prompt", &config).unwrap();
        let response = mock.send(&request).unwrap();
        assert_eq!(response.content, "Grade: 0.1\nExplanation: Partial.");

        let other = quiz_request("a different prompt", &config).unwrap();
        match mock.send(&other) {
            Err(TransportFailure::Fatal(ClientError::UnscriptedPrompt { .. })) => {}
            other => panic!("expected unscripted prompt error, got {other:?}"),
        }
    }

    #[test]
    fn mock_default_entry_catches_unmatched_prompts() {
        let mock = MockTransport::from_entries(vec![ScriptEntry {
            prompt_hash: SCRIPT_DEFAULT_HASH.to_string(),
            response_text: "Grade: 0.0\nExplanation: Default.".to_string(),
            input_tokens: 1,
            output_tokens: 1,
            fail_count: 0,
        }]);
        let request = quiz_request("anything", &Config::default()).unwrap();
        assert_eq!(mock.send(&request).unwrap().content, "Grade: 0.0\nExplanation: Default.");
    }

    #[test]
    fn script_round_trips_through_json() {
        let entries = vec![ScriptEntry {
            prompt_hash: prompt_hash("p"),
            response_text: "Grade: 0.2".to_string(),
            input_tokens: 9,
            output_tokens: 3,
            fail_count: 2,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
        let mock = MockTransport::load(&path).unwrap();
        let request = quiz_request("p", &Config::default()).unwrap();
        // Two scripted failures, then the response.
        assert!(matches!(mock.send(&request), Err(TransportFailure::Transient(_))));
        assert!(matches!(mock.send(&request), Err(TransportFailure::Transient(_))));
        assert_eq!(mock.send(&request).unwrap().content, "Grade: 0.2");
        assert_eq!(mock.attempts(), 3);
    }

    #[test]
    fn hash_is_stable_and_request_hash_matches_prompt_hash() {
        assert_eq!(prompt_hash("abc"), prompt_hash("abc"));
        assert_ne!(prompt_hash("abc"), prompt_hash("abd"));
        let request = quiz_request("the rendered prompt", &Config::default()).unwrap();
        assert_eq!(request_hash(&request), prompt_hash("the rendered prompt"));
    }
}
