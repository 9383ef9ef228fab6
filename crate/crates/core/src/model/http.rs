//! Chat-completions HTTP backend.
//!
//! Sends the standard wire request (`model`, `messages`, `temperature`, `n`,
//! `max_tokens`) with a bearer token read from the environment. Endpoints
//! that ignore `n` are handled by probing the batch size k from the first
//! response and issuing ceil(n/k) requests, reindexed densely.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::backend::{BackendError, GenerationBackend, SamplingConfig};
use crate::filter::ModelResponse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_request_timeout_secs")]
    pub request_timeout_secs: u64,
    /// Bound on concurrent in-flight requests.
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_request_timeout_secs() -> u64 {
    120
}

fn default_max_inflight() -> usize {
    8
}

pub struct HttpChatBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    inflight: Arc<Semaphore>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    n: usize,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

impl HttpChatBackend {
    pub fn new(cfg: &HttpBackendConfig) -> Result<Self, BackendError> {
        if cfg.endpoint.is_empty() || cfg.model_name.is_empty() {
            return Err(BackendError::InvalidConfig(
                "http backend requires endpoint and model_name".to_string(),
            ));
        }
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(HttpChatBackend {
            client,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model_name.clone(),
            api_key,
            inflight: Arc::new(Semaphore::new(cfg.max_inflight.max(1))),
        })
    }

    async fn request_batch(
        &self,
        prompt: &str,
        cfg: &SamplingConfig,
        n: usize,
    ) -> Result<Vec<String>, BackendError> {
        let _permit = self.inflight.clone().acquire_owned().await.expect("semaphore open");
        let body = WireRequest {
            model: &self.model,
            messages: vec![WireMessage { role: "user", content: prompt }],
            temperature: cfg.temperature,
            n,
            max_tokens: cfg.max_tokens,
            stop: if cfg.stop_sequences.is_empty() { None } else { Some(&cfg.stop_sequences) },
            seed: cfg.seed,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Unreachable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(BackendError::Rejected { status: status.as_u16(), body });
        }
        let parsed: WireResponse = resp
            .json()
            .await
            .map_err(|e| BackendError::Rejected { status: status.as_u16(), body: e.to_string() })?;
        if parsed.choices.is_empty() {
            return Err(BackendError::Rejected {
                status: status.as_u16(),
                body: "response carried no choices".to_string(),
            });
        }
        Ok(parsed.choices.into_iter().map(|c| c.message.content).collect())
    }
}

#[async_trait]
impl GenerationBackend for HttpChatBackend {
    async fn generate(
        &self,
        prompt: &str,
        cfg: &SamplingConfig,
    ) -> Result<Vec<ModelResponse>, BackendError> {
        cfg.validate()?;
        let mut texts = self.request_batch(prompt, cfg, cfg.n).await?;
        // Probe k from the first response; top up if the endpoint ignored n.
        let k = texts.len();
        while texts.len() < cfg.n {
            let want = (cfg.n - texts.len()).min(k);
            let more = self.request_batch(prompt, cfg, want).await?;
            if more.is_empty() {
                break;
            }
            texts.extend(more);
        }
        texts.truncate(cfg.n);
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(sample_index, raw)| ModelResponse { raw, sample_index })
            .collect())
    }
}
