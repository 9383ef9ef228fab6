//! pass@k computation, the evaluation harness, and report types.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::checker::Checker;
use crate::model::GenerationBackend;
use crate::orchestrator::{Pipeline, PipelineError, ProveStatus};
use crate::syntax::TheoremDecl;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("theorem `{name}` has {have} sample outcomes, fewer than k = {k}")]
    InsufficientSamples { name: String, have: usize, k: usize },
}

/// Ordered per-sample outcomes for one theorem: `true` means the sample's
/// whole-proof check passed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub name: String,
    pub outcomes: Vec<bool>,
}

/// Fraction of theorems with at least one pass among their first k samples.
pub fn compute_pass_at_k(records: &[SampleRecord], k: usize) -> Result<f64, EvalError> {
    assert!(k >= 1, "k must be positive");
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut passed = 0usize;
    for r in records {
        if r.outcomes.len() < k {
            return Err(EvalError::InsufficientSamples {
                name: r.name.clone(),
                have: r.outcomes.len(),
                k,
            });
        }
        if r.outcomes[..k].iter().any(|&b| b) {
            passed += 1;
        }
    }
    Ok(passed as f64 / records.len() as f64)
}

/// The unbiased combinatorial estimator 1 - C(n-c, k)/C(n, k), for
/// comparability with the program-synthesis literature.
pub fn pass_at_k_estimator(n: usize, c: usize, k: usize) -> f64 {
    if n.saturating_sub(c) < k {
        return 1.0;
    }
    let mut acc = 1.0f64;
    for i in (n - c + 1)..=n {
        acc *= 1.0 - k as f64 / i as f64;
    }
    1.0 - acc
}

pub fn compute_pass_at_k_estimator(records: &[SampleRecord], k: usize) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    for r in records {
        let n = r.outcomes.len();
        if n < k {
            return Err(EvalError::InsufficientSamples { name: r.name.clone(), have: n, k });
        }
        let c = r.outcomes.iter().filter(|&&b| b).count();
        total += pass_at_k_estimator(n, c, k);
    }
    Ok(total / records.len() as f64)
}

/// Doubling k values 1, 2, 4, ... capped at and including n.
pub fn default_k_values(n: usize) -> Vec<usize> {
    let mut ks = Vec::new();
    let mut k = 1usize;
    while k < n {
        ks.push(k);
        k *= 2;
    }
    if n >= 1 {
        ks.push(n);
    }
    ks.dedup();
    ks
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremRecord {
    pub theorem_name: String,
    pub status: ProveStatus,
    pub stats: crate::orchestrator::StageStats,
    pub elapsed_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_proof: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub total: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub solved_whole: usize,
    pub solved_refined: usize,
    pub unsolved: usize,
    /// pass@k by k, computed from whole-proof sample outcomes.
    pub pass_at_k: BTreeMap<usize, f64>,
    /// Closed-form bound on prover calls per theorem under the active config.
    pub max_prover_calls_per_theorem: u64,
    pub wall_time_ms: u64,
    pub cpu_time_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_theorem: Vec<TheoremRecord>,
    pub aggregate: Aggregate,
    /// The fully-resolved run configuration, echoed for reproducibility.
    pub config: serde_json::Value,
}

/// One evaluation input: a named theorem to prove.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCase {
    pub name: String,
    pub theorem: TheoremDecl,
}

/// Run the pipeline over a theorem set. Theorems run in parallel up to
/// `pipeline.cfg.workers`, sharing the checker's session pool; records are
/// collected in completion order and post-sorted by theorem name. The
/// whole-proof stage runs exhaustively so pass@k is well defined.
pub async fn run_eval(
    pipeline: Arc<Pipeline>,
    cases: Vec<EvalCase>,
    whole: Arc<dyn GenerationBackend>,
    step: Arc<dyn GenerationBackend>,
    checker: Arc<Checker>,
    use_estimator: bool,
    config_echo: serde_json::Value,
) -> Result<EvalReport, PipelineError> {
    let started = Instant::now();
    let pool = Arc::new(Semaphore::new(pipeline.cfg.workers));
    let mut join = JoinSet::new();
    for case in cases {
        let pipeline = pipeline.clone();
        let whole = whole.clone();
        let step = step.clone();
        let checker = checker.clone();
        let pool = pool.clone();
        join.spawn(async move {
            let _permit = pool.acquire_owned().await.expect("pool open");
            let case_started = Instant::now();
            let outcome = pipeline.prove_recording(&case.theorem, whole, step, checker).await;
            (case, outcome, case_started.elapsed())
        });
    }

    let mut per_theorem = Vec::new();
    let mut samples = Vec::new();
    while let Some(joined) = join.join_next().await {
        let Ok((case, outcome, elapsed)) = joined else { continue };
        let (result, outcomes) = outcome?;
        samples.push(SampleRecord {
            name: case.name.clone(),
            outcomes: outcomes.iter().map(|o| o.passed()).collect(),
        });
        per_theorem.push(TheoremRecord {
            theorem_name: case.name,
            status: result.status,
            stats: result.stats,
            elapsed_ms: elapsed.as_millis() as u64,
            final_proof: result.proof.map(|p| p.render()),
        });
    }
    per_theorem.sort_by(|a, b| a.theorem_name.cmp(&b.theorem_name));
    samples.sort_by(|a, b| a.name.cmp(&b.name));

    let total = per_theorem.len();
    let solved_whole = per_theorem.iter().filter(|r| r.status == ProveStatus::SolvedWhole).count();
    let solved_refined =
        per_theorem.iter().filter(|r| r.status == ProveStatus::SolvedRefined).count();
    let solved = solved_whole + solved_refined;

    let min_outcomes = samples.iter().map(|s| s.outcomes.len()).min().unwrap_or(0);
    let mut pass_at_k = BTreeMap::new();
    for k in default_k_values(min_outcomes) {
        let rate = if use_estimator {
            compute_pass_at_k_estimator(&samples, k)
        } else {
            compute_pass_at_k(&samples, k)
        }
        .expect("k bounded by the shortest outcome vector");
        pass_at_k.insert(k, rate);
    }

    Ok(EvalReport {
        aggregate: Aggregate {
            total,
            solved,
            success_rate: if total > 0 { solved as f64 / total as f64 } else { 0.0 },
            solved_whole,
            solved_refined,
            unsolved: total - solved,
            pass_at_k,
            max_prover_calls_per_theorem: pipeline.cfg.max_prover_calls(),
            wall_time_ms: started.elapsed().as_millis() as u64,
            cpu_time_ms: process_cpu_time().as_millis() as u64,
        },
        per_theorem,
        config: config_echo,
    })
}

/// Process CPU time (user + system), for the report's resource accounting.
pub fn process_cpu_time() -> Duration {
    // SAFETY: getrusage with a zeroed out-param is the documented usage.
    unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut usage) == 0 {
            let user =
                Duration::new(usage.ru_utime.tv_sec as u64, (usage.ru_utime.tv_usec as u32) * 1000);
            let sys =
                Duration::new(usage.ru_stime.tv_sec as u64, (usage.ru_stime.tv_usec as u32) * 1000);
            user + sys
        } else {
            Duration::ZERO
        }
    }
}
