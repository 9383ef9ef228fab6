//! Generation backend contract plus the deterministic scripted backend that
//! drives reproducible end-to-end tests.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::ModelResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Samples per request.
    pub n: usize,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop_sequences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        // Temperature sits inside the moderate 0.6-0.9 band; n matches the
        // whole-proof sampling rate used throughout.
        SamplingConfig {
            temperature: 0.7,
            n: 128,
            max_tokens: 2048,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }
}

impl SamplingConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.n < 1 {
            return Err(BackendError::InvalidConfig("n must be >= 1".to_string()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidConfig(
                "temperature must be finite and >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend rejected request: status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("scripted backend exhausted")]
    ScriptExhausted,
    #[error("backend request timed out")]
    Timeout,
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    /// Produce between 1 and `cfg.n` responses with dense `sample_index`.
    async fn generate(
        &self,
        prompt: &str,
        cfg: &SamplingConfig,
    ) -> Result<Vec<ModelResponse>, BackendError>;
}

/// Replays pre-recorded response batches in order. Batch pops are serialized,
/// so call order is observable and tests can pin orchestration order.
pub struct ScriptedBackend {
    batches: Mutex<VecDeque<Vec<String>>>,
}

#[derive(Deserialize)]
struct BatchRecord {
    responses: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(batches: Vec<Vec<String>>) -> Self {
        ScriptedBackend { batches: Mutex::new(batches.into()) }
    }

    /// Load from a line-delimited object stream: one `{"responses": [...]}`
    /// record per batch.
    pub fn from_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut batches = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: BatchRecord = serde_json::from_str(line)
                .map_err(|e| BackendError::InvalidConfig(format!("script line {}: {e}", i + 1)))?;
            batches.push(record.responses);
        }
        Ok(ScriptedBackend::new(batches))
    }

    pub fn from_jsonl_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn remaining_batches(&self) -> usize {
        self.batches.lock().expect("script lock").len()
    }
}

#[async_trait]
impl GenerationBackend for ScriptedBackend {
    async fn generate(
        &self,
        _prompt: &str,
        cfg: &SamplingConfig,
    ) -> Result<Vec<ModelResponse>, BackendError> {
        cfg.validate()?;
        let batch = self
            .batches
            .lock()
            .expect("script lock")
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)?;
        Ok(batch
            .into_iter()
            .take(cfg.n)
            .enumerate()
            .map(|(sample_index, raw)| ModelResponse { raw, sample_index })
            .collect())
    }
}
