//! Run configuration. Defaults follow the deterministic grading setup:
//! temperature 0.0, top_p 1.0, 200 output tokens for quizzes and 1500 for
//! reports, gpt-4o pricing of $2.50/$10.00 per million tokens.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is invalid: {detail}")]
    Schema { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Chat-completion endpoint URL.
    pub endpoint_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens_quiz: u32,
    pub max_tokens_report: u32,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub max_concurrency: usize,
    /// Dollars per 1M input tokens.
    pub input_rate: f64,
    /// Dollars per 1M output tokens.
    pub output_rate: f64,
    /// Fraction of input tokens assumed served from the provider cache.
    pub cached_input_fraction: f64,
    /// Report-length gate, in heuristic tokens (characters / 4).
    pub context_budget_tokens: u64,
    /// Significance level for analysis tables.
    pub alpha: f64,
    /// Optional replacement for the worked example in the quiz prompt.
    pub quiz_example_override: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            model_id: "gpt-4o".to_string(),
            api_key_env: "GRADER_API_KEY".to_string(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens_quiz: 200,
            max_tokens_report: 1500,
            max_attempts: 3,
            base_backoff_ms: 500,
            max_concurrency: 4,
            input_rate: 2.50,
            output_rate: 10.00,
            cached_input_fraction: 0.0,
            context_budget_tokens: 100_000,
            alpha: 0.05,
            quiz_example_override: None,
        }
    }
}

impl Config {
    /// Loads a JSON config, or the defaults when no path is given. Unknown
    /// keys are rejected so typos fail loudly.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let config = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Schema {
                    path: p.display().to_string(),
                    detail: e.to_string(),
                })?
            }
        };
        config.validate().map_err(|detail| ConfigError::Schema {
            path: path.map(|p| p.display().to_string()).unwrap_or_else(|| "<default>".to_string()),
            detail,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err("temperature must be >= 0".to_string());
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err("top_p must be in (0, 1]".to_string());
        }
        if self.max_tokens_quiz == 0 || self.max_tokens_report == 0 {
            return Err("max token limits must be positive".to_string());
        }
        if self.max_attempts == 0 {
            return Err("max_attempts must be at least 1".to_string());
        }
        if self.max_concurrency == 0 {
            return Err("max_concurrency must be at least 1".to_string());
        }
        if self.input_rate < 0.0 || self.output_rate < 0.0 {
            return Err("token rates must be non-negative".to_string());
        }
        if !(0.0..=1.0).contains(&self.cached_input_fraction) {
            return Err("cached_input_fraction must be in [0, 1]".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must be in (0, 1)".to_string());
        }
        Ok(())
    }
}
