//! Uniform checking contract over two backends: a TCP client for the
//! Isabelle server and a deterministic mock oracle, plus hammer probing.
//!
//! A `Checker` owns a pool of prover sessions; `check` blocks until a session
//! is free, enforces the watchdog bound, and always returns exactly one
//! verdict. Cancelling an in-flight check releases its session.

mod isabelle;
mod mock;
mod wrap;

pub use isabelle::{IsabelleBackend, IsabelleConfig};
pub use mock::{DefaultVerdict, MockOracle};
pub use wrap::wrap_theory;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::model::{TacticCandidate, TacticSource};
use crate::sketch::{parse_subgoals, ProofSketch};
use crate::syntax::TheoremDecl;

#[derive(Debug, Clone)]
pub struct CheckRequest {
    pub theory_text: String,
    pub timeout: Duration,
}

impl CheckRequest {
    /// `theory_text` must be a full document: starts with `theory`, ends
    /// with `end`.
    pub fn new(theory_text: String, timeout: Duration) -> Result<Self, CheckerError> {
        let trimmed = theory_text.trim();
        if !trimmed.starts_with("theory") || !trimmed.ends_with("end") {
            return Err(CheckerError::MalformedTheory);
        }
        if timeout.is_zero() {
            return Err(CheckerError::MalformedTheory);
        }
        Ok(CheckRequest { theory_text, timeout })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerdictStatus {
    Valid,
    Invalid {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
    },
    Timeout,
    CheckerError {
        detail: String,
    },
}

impl VerdictStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, VerdictStatus::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub status: VerdictStatus,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CheckerError {
    #[error(
        "theory document must start with `theory` and end with `end`, with a positive timeout"
    )]
    MalformedTheory,
    #[error("checker protocol failure: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone)]
pub struct CheckerConfig {
    /// Width of the session pool.
    pub pool: usize,
    /// Slack added to the caller-side watchdog on top of the request timeout.
    pub grace: Duration,
    /// Default hammer probe budget.
    pub hammer_timeout: Duration,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            pool: 64,
            grace: Duration::from_secs(5),
            hammer_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HammerRequest {
    pub theory_text: String,
    /// Normalized goal text of the probed hole, for backends that resolve
    /// suggestions without running a prover.
    pub goal: String,
    pub timeout: Duration,
}

#[async_trait]
pub trait CheckBackend: Send + Sync {
    async fn run_check(&self, req: &CheckRequest) -> Result<VerdictStatus, CheckerError>;

    async fn run_hammer(&self, req: &HammerRequest) -> Result<Vec<String>, CheckerError>;

    /// Tear down and re-establish prover state after a protocol failure.
    async fn restart(&self) -> Result<(), CheckerError> {
        Ok(())
    }
}

pub struct Checker {
    backend: Arc<dyn CheckBackend>,
    sessions: Arc<Semaphore>,
    cfg: CheckerConfig,
}

impl Checker {
    pub fn new(backend: Arc<dyn CheckBackend>, cfg: CheckerConfig) -> Self {
        let sessions = Arc::new(Semaphore::new(cfg.pool.max(1)));
        Checker { backend, sessions, cfg }
    }

    pub fn config(&self) -> &CheckerConfig {
        &self.cfg
    }

    /// Check one theory document. Total: every call returns exactly one
    /// verdict, with elapsed bounded by `timeout + grace`.
    pub async fn check(&self, req: CheckRequest) -> Verdict {
        let _session = self.sessions.clone().acquire_owned().await.expect("pool open");
        let start = Instant::now();
        let budget = req.timeout + self.cfg.grace;
        let status = match tokio::time::timeout(budget, self.backend.run_check(&req)).await {
            Ok(Ok(status)) => status,
            Ok(Err(e)) => VerdictStatus::CheckerError { detail: e.to_string() },
            Err(_) => VerdictStatus::Timeout,
        };
        Verdict { status, elapsed: start.elapsed().min(budget) }
    }

    /// Probe the hammer at hole `hole_id` of a sketch. Timeouts yield an
    /// empty suggestion list, not an error; unparsable suggestions are
    /// dropped.
    pub async fn sledgehammer_probe(
        &self,
        theorem: &TheoremDecl,
        sketch: &ProofSketch,
        hole_id: usize,
        wrapper: &wrap::WrapperConfig,
        timeout: Duration,
    ) -> Result<Vec<TacticCandidate>, CheckerError> {
        if hole_id >= sketch.holes.len() {
            return Err(CheckerError::Protocol(format!("no hole with id {hole_id}")));
        }
        let theory_text = wrap::wrap_theory_with_hammer(theorem, sketch, hole_id, wrapper)?;
        let subgoals = parse_subgoals(sketch, Some(theorem));
        let goal = crate::syntax::normalize_ws(&subgoals[hole_id].goal_prop);
        let req = HammerRequest { theory_text, goal, timeout };

        let _session = self.sessions.clone().acquire_owned().await.expect("pool open");
        let budget = timeout + self.cfg.grace;
        let texts = match tokio::time::timeout(budget, self.backend.run_hammer(&req)).await {
            Ok(Ok(texts)) => texts,
            Ok(Err(e)) => return Err(e),
            Err(_) => Vec::new(),
        };
        Ok(texts
            .iter()
            .filter_map(|t| TacticCandidate::new(t, TacticSource::Sledgehammer).ok())
            .collect())
    }

    pub async fn restart(&self) -> Result<(), CheckerError> {
        self.backend.restart().await
    }
}

pub use wrap::WrapperConfig;
