//! End-to-end pipeline: generate whole-proof candidates, filter, check in
//! parallel with first-success cancellation, sketch the failures, and refine
//! valid sketches hole by hole until the checker accepts a complete proof.
//!
//! The pipeline state machine itself is single-threaded; all parallelism is
//! expressed as independent check tasks bounded by one worker pool.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::checker::{CheckRequest, Checker, Verdict, VerdictStatus, WrapperConfig};
use crate::filter::{extract_envelope, filter_response, FilterConfig, ModelResponse};
use crate::model::{
    build_tactic_prompt, build_whole_proof_prompt, heuristic_tactics, BackendError,
    GenerationBackend, PromptTemplate, SamplingConfig, TacticCandidate, TacticSource,
};
use crate::sketch::{
    build_sketch_with, parse_subgoals, partial_fill, substitute, HoleAssignment, ProofSketch,
    SketchConfig,
};
use crate::syntax::{normalize_ws, parse_proof_with, token_texts, ProofScript, TheoremDecl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub whole_sampling: SamplingConfig,
    pub step_sampling: SamplingConfig,
    /// Worker pool width shared across stages.
    pub workers: usize,
    pub check_timeout: Duration,
    /// Cap on refinement checks (hole-wise and full submissions) per sketch.
    pub refine_budget: usize,
    /// Max sketches carried into refinement.
    pub sketch_limit: usize,
    /// Deduplicate whole-proof candidates by normalized render before
    /// checking.
    pub dedup: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            whole_sampling: SamplingConfig::default(),
            step_sampling: SamplingConfig::default().with_n(32),
            workers: 64,
            check_timeout: Duration::from_secs(30),
            refine_budget: 64,
            sketch_limit: 16,
            dedup: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers < 1 {
            return Err(PipelineError::Internal("workers must be >= 1".into()));
        }
        if self.refine_budget < 1 || self.sketch_limit < 1 {
            return Err(PipelineError::Internal("budgets must be >= 1".into()));
        }
        Ok(())
    }

    /// Closed-form bound on prover calls for one theorem: every candidate
    /// checked once, every carried sketch validated once, and each sketch
    /// refined within its budget.
    pub fn max_prover_calls(&self) -> u64 {
        self.whole_sampling.n as u64
            + self.sketch_limit as u64
            + (self.sketch_limit as u64) * (self.refine_budget as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProveStatus {
    SolvedWhole,
    SolvedRefined,
    Unsolved,
}

/// Counter block for one prove run. Equality compares counters only; wall
/// times are informational.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub candidates_generated: usize,
    pub candidates_filtered: usize,
    pub candidates_checked: usize,
    pub sketches_built: usize,
    pub sketches_valid: usize,
    pub holes_total: usize,
    pub refinement_checks: usize,
    pub wall_time_ms: StageTimings,
}

impl PartialEq for StageStats {
    fn eq(&self, other: &Self) -> bool {
        self.candidates_generated == other.candidates_generated
            && self.candidates_filtered == other.candidates_filtered
            && self.candidates_checked == other.candidates_checked
            && self.sketches_built == other.sketches_built
            && self.sketches_valid == other.sketches_valid
            && self.holes_total == other.holes_total
            && self.refinement_checks == other.refinement_checks
    }
}
impl Eq for StageStats {}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub generation: u64,
    pub filtering: u64,
    pub whole_check: u64,
    pub sketch_validation: u64,
    pub refinement: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProveResult {
    pub status: ProveStatus,
    /// The final proof when solved; re-verified valid in this run and free of
    /// `sorry`/`oops`.
    pub proof: Option<ProofScript>,
    pub stats: StageStats,
}

/// Per-sample whole-proof outcome, recorded in exhaustive (evaluation) mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOutcome {
    FilteredOut,
    Invalid,
    Timeout,
    CheckerError,
    Valid,
}

impl SampleOutcome {
    pub fn passed(self) -> bool {
        self == SampleOutcome::Valid
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("checker failed after session restart: {0}")]
    Checker(String),
    #[error("pipeline invariant violated: {0}")]
    Internal(String),
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub template: PromptTemplate,
    pub wrapper: WrapperConfig,
    pub filter: FilterConfig,
    pub sketch_cfg: SketchConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline {
            cfg,
            template: PromptTemplate::default(),
            wrapper: WrapperConfig::default(),
            filter: FilterConfig::default(),
            sketch_cfg: SketchConfig::default(),
        }
    }
}

#[derive(Clone)]
struct Candidate {
    sample_index: usize,
    script: ProofScript,
    normalized: String,
}

enum WholeStageMode {
    FirstSuccess,
    Exhaustive,
}

impl Pipeline {
    /// Run the full workflow for one theorem.
    pub async fn prove(
        &self,
        theorem: &TheoremDecl,
        whole: Arc<dyn GenerationBackend>,
        step: Arc<dyn GenerationBackend>,
        checker: Arc<Checker>,
    ) -> Result<ProveResult, PipelineError> {
        let (result, _) =
            self.run(theorem, whole, step, checker, WholeStageMode::FirstSuccess).await?;
        Ok(result)
    }

    /// Run the full workflow, checking every filtered candidate (no
    /// first-success cancellation) and recording per-sample outcomes for
    /// pass@k evaluation.
    pub async fn prove_recording(
        &self,
        theorem: &TheoremDecl,
        whole: Arc<dyn GenerationBackend>,
        step: Arc<dyn GenerationBackend>,
        checker: Arc<Checker>,
    ) -> Result<(ProveResult, Vec<SampleOutcome>), PipelineError> {
        self.run(theorem, whole, step, checker, WholeStageMode::Exhaustive).await
    }

    async fn run(
        &self,
        theorem: &TheoremDecl,
        whole: Arc<dyn GenerationBackend>,
        step: Arc<dyn GenerationBackend>,
        checker: Arc<Checker>,
        mode: WholeStageMode,
    ) -> Result<(ProveResult, Vec<SampleOutcome>), PipelineError> {
        self.cfg.validate()?;
        let mut stats = StageStats::default();
        let run_start = Instant::now();

        // Step 1: whole-proof candidate synthesis.
        let stage = Instant::now();
        let prompt = build_whole_proof_prompt(theorem, &self.template);
        let responses = whole.generate(&prompt, &self.cfg.whole_sampling).await?;
        stats.candidates_generated = responses.len();
        stats.wall_time_ms.generation = stage.elapsed().as_millis() as u64;

        // Step 2a: proof filter.
        let stage = Instant::now();
        let filtered = self.filter_candidates(&responses);
        stats.candidates_filtered = filtered.len();
        let mut outcomes = vec![SampleOutcome::FilteredOut; responses.len()];
        stats.wall_time_ms.filtering = stage.elapsed().as_millis() as u64;

        // Step 2b: parallel whole-proof checking.
        let stage = Instant::now();
        let to_check: Vec<Candidate> = if self.cfg.dedup {
            let mut seen = HashSet::new();
            filtered.iter().filter(|c| seen.insert(c.normalized.clone())).cloned().collect()
        } else {
            filtered.clone()
        };
        let (winner, checked, statuses) =
            self.whole_stage(&to_check, theorem, checker.clone(), &mode).await?;
        stats.candidates_checked = checked;
        // Every filtered sample inherits the verdict of its representative.
        let status_by_text: HashMap<&str, &VerdictStatus> = to_check
            .iter()
            .filter_map(|c| statuses.get(&c.sample_index).map(|s| (c.normalized.as_str(), s)))
            .collect();
        for cand in &filtered {
            if let Some(status) = status_by_text.get(cand.normalized.as_str()) {
                outcomes[cand.sample_index] = match status {
                    VerdictStatus::Valid => SampleOutcome::Valid,
                    VerdictStatus::Invalid { .. } => SampleOutcome::Invalid,
                    VerdictStatus::Timeout => SampleOutcome::Timeout,
                    VerdictStatus::CheckerError { .. } => SampleOutcome::CheckerError,
                };
            }
        }
        stats.wall_time_ms.whole_check = stage.elapsed().as_millis() as u64;

        if let Some(idx) = winner {
            let proof = to_check
                .iter()
                .find(|c| c.sample_index == idx)
                .expect("winner is a checked candidate")
                .script
                .clone();
            self.assert_closed(&proof)?;
            stats.wall_time_ms.total = run_start.elapsed().as_millis() as u64;
            return Ok((
                ProveResult { status: ProveStatus::SolvedWhole, proof: Some(proof), stats },
                outcomes,
            ));
        }

        // Step 3: build sketches from all filtered candidates, deduplicate,
        // validate the all-sorry skeletons.
        let stage = Instant::now();
        let mut sketches: Vec<(ProofSketch, usize)> = Vec::new();
        let mut seen = HashSet::new();
        for cand in &filtered {
            let sketch = build_sketch_with(&cand.script, self.sketch_cfg);
            if seen.insert(sketch.skeleton.render_oneline()) {
                sketches.push((sketch, cand.sample_index));
            }
        }
        // Fewer holes first; ties by earliest generating sample.
        sketches.sort_by_key(|(s, idx)| (s.holes.len(), *idx));
        sketches.truncate(self.cfg.sketch_limit);
        stats.sketches_built = sketches.len();

        let valid_sketches = self.validate_sketches(&sketches, theorem, checker.clone()).await?;
        stats.sketches_valid = valid_sketches.len();
        stats.holes_total = valid_sketches.iter().map(|s| s.holes.len()).sum();
        stats.wall_time_ms.sketch_validation = stage.elapsed().as_millis() as u64;

        // Steps 4 & 5: tactic-based refinement, first success wins.
        let stage = Instant::now();
        for sketch in &valid_sketches {
            let mut used = 0usize;
            let refined = self
                .refine_sketch_inner(sketch, theorem, step.clone(), checker.clone(), &mut used)
                .await;
            stats.refinement_checks += used;
            if let Some(proof) = refined? {
                self.assert_closed(&proof)?;
                stats.wall_time_ms.refinement = stage.elapsed().as_millis() as u64;
                stats.wall_time_ms.total = run_start.elapsed().as_millis() as u64;
                return Ok((
                    ProveResult { status: ProveStatus::SolvedRefined, proof: Some(proof), stats },
                    outcomes,
                ));
            }
        }
        stats.wall_time_ms.refinement = stage.elapsed().as_millis() as u64;
        stats.wall_time_ms.total = run_start.elapsed().as_millis() as u64;
        Ok((ProveResult { status: ProveStatus::Unsolved, proof: None, stats }, outcomes))
    }

    fn filter_candidates(&self, responses: &[ModelResponse]) -> Vec<Candidate> {
        let mut out = Vec::new();
        for response in responses {
            let verdict = filter_response(response, &self.filter);
            let Some(text) = verdict.proof_text() else { continue };
            // The gate guarantees this parses.
            let Ok(script) = parse_proof_with(text, &self.filter.parser) else { continue };
            let normalized = script.render_oneline();
            out.push(Candidate { sample_index: response.sample_index, script, normalized });
        }
        out
    }

    fn request_for(
        &self,
        theorem: &TheoremDecl,
        proof: &ProofScript,
    ) -> Result<CheckRequest, PipelineError> {
        let doc = crate::checker::wrap_theory(theorem, proof, &self.wrapper);
        CheckRequest::new(doc, self.cfg.check_timeout)
            .map_err(|e| PipelineError::Internal(format!("wrapped theory rejected: {e}")))
    }

    /// Check candidates concurrently up to `workers`. In first-success mode
    /// the first valid verdict stops the stage: the winning task raises the
    /// stop flag before releasing its worker slot, so no new check is issued
    /// once a valid verdict exists; in-flight checks are cancelled.
    async fn whole_stage(
        &self,
        candidates: &[Candidate],
        theorem: &TheoremDecl,
        checker: Arc<Checker>,
        mode: &WholeStageMode,
    ) -> Result<(Option<usize>, usize, HashMap<usize, VerdictStatus>), PipelineError> {
        if candidates.is_empty() {
            return Ok((None, 0, HashMap::new()));
        }
        let first_success = matches!(mode, WholeStageMode::FirstSuccess);
        let pool = Arc::new(Semaphore::new(self.cfg.workers));
        let counter = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let mut join = JoinSet::new();
        for cand in candidates {
            let req = self.request_for(theorem, &cand.script)?;
            let checker = checker.clone();
            let pool = pool.clone();
            let counter = counter.clone();
            let stop = stop.clone();
            let sample_index = cand.sample_index;
            join.spawn(async move {
                let _permit = pool.acquire_owned().await.expect("pool open");
                if first_success && stop.load(Ordering::SeqCst) {
                    return (sample_index, Ok(None));
                }
                let verdict = check_with_retry(&checker, req).await;
                if let Ok(v) = &verdict {
                    counter.fetch_add(1, Ordering::SeqCst);
                    if first_success && v.status.is_valid() {
                        stop.store(true, Ordering::SeqCst);
                    }
                }
                (sample_index, verdict.map(Some))
            });
        }

        let mut winner: Option<usize> = None;
        let mut statuses = HashMap::new();
        let mut failure: Option<PipelineError> = None;
        while let Some(joined) = join.join_next().await {
            let Ok((idx, verdict)) = joined else { continue };
            match verdict {
                Err(e) => {
                    failure = Some(e);
                    join.abort_all();
                }
                Ok(None) => {}
                Ok(Some(v)) => {
                    let valid = v.status.is_valid();
                    statuses.insert(idx, v.status);
                    if valid {
                        match mode {
                            WholeStageMode::FirstSuccess => {
                                winner = Some(winner.unwrap_or(idx));
                                join.abort_all();
                            }
                            WholeStageMode::Exhaustive => {
                                winner = Some(winner.map_or(idx, |w| w.min(idx)));
                            }
                        }
                    }
                }
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((winner, counter.load(Ordering::SeqCst), statuses))
    }

    /// Validate all-sorry skeletons in parallel; returns the valid sketches
    /// in their carried order.
    async fn validate_sketches(
        &self,
        sketches: &[(ProofSketch, usize)],
        theorem: &TheoremDecl,
        checker: Arc<Checker>,
    ) -> Result<Vec<ProofSketch>, PipelineError> {
        let pool = Arc::new(Semaphore::new(self.cfg.workers));
        let mut join = JoinSet::new();
        for (pos, (sketch, _)) in sketches.iter().enumerate() {
            let req = self.request_for(theorem, &sketch.skeleton)?;
            let checker = checker.clone();
            let pool = pool.clone();
            join.spawn(async move {
                let _permit = pool.acquire_owned().await.expect("pool open");
                let verdict = check_with_retry(&checker, req).await;
                (pos, verdict)
            });
        }
        let mut valid = vec![false; sketches.len()];
        while let Some(joined) = join.join_next().await {
            let Ok((pos, verdict)) = joined else { continue };
            valid[pos] = verdict?.status.is_valid();
        }
        Ok(sketches.iter().zip(valid).filter(|(_, ok)| *ok).map(|((s, _), _)| s.clone()).collect())
    }

    /// Check parsed candidates concurrently, returning the first valid one
    /// (any valid candidate satisfies the contract) plus the number of checks
    /// actually performed. Outstanding work is cancelled on success.
    pub async fn check_candidates_parallel(
        &self,
        candidates: &[ProofScript],
        theorem: &TheoremDecl,
        checker: Arc<Checker>,
    ) -> Result<(Option<ProofScript>, usize), PipelineError> {
        let wrapped: Vec<Candidate> = candidates
            .iter()
            .enumerate()
            .map(|(sample_index, script)| Candidate {
                sample_index,
                script: script.clone(),
                normalized: script.render_oneline(),
            })
            .collect();
        let (winner, checked, _) =
            self.whole_stage(&wrapped, theorem, checker, &WholeStageMode::FirstSuccess).await?;
        Ok((winner.map(|idx| wrapped[idx].script.clone()), checked))
    }

    /// Public entry point for refining one validated sketch.
    pub async fn refine_sketch(
        &self,
        sketch: &ProofSketch,
        theorem: &TheoremDecl,
        step: Arc<dyn GenerationBackend>,
        checker: Arc<Checker>,
    ) -> Result<(Option<ProofScript>, usize), PipelineError> {
        let mut used = 0usize;
        let refined = self.refine_sketch_inner(sketch, theorem, step, checker, &mut used).await?;
        Ok((refined, used))
    }

    /// Hole-wise first-fit search, then full submission; on a failing
    /// combination, alternate validated tactics per hole until the budget is
    /// spent.
    async fn refine_sketch_inner(
        &self,
        sketch: &ProofSketch,
        theorem: &TheoremDecl,
        step: Arc<dyn GenerationBackend>,
        checker: Arc<Checker>,
        used: &mut usize,
    ) -> Result<Option<ProofScript>, PipelineError> {
        let budget = self.cfg.refine_budget;
        let subgoals = parse_subgoals(sketch, Some(theorem));
        let mut searches: Vec<HoleSearch> = Vec::with_capacity(subgoals.len());

        for (hole_id, subgoal) in subgoals.iter().enumerate() {
            let candidates =
                self.hole_candidates(subgoal, sketch, hole_id, theorem, &step, &checker).await?;
            let mut search = HoleSearch::new(candidates);
            let found =
                self.validate_next(&mut search, sketch, hole_id, theorem, &checker, used).await?;
            if !found {
                return Ok(None); // hole exhausted, sketch fails
            }
            searches.push(search);
        }

        loop {
            if *used >= budget {
                return Ok(None);
            }
            let mut assignment = HoleAssignment::default();
            for (hole_id, search) in searches.iter().enumerate() {
                assignment.insert(hole_id, search.chosen_text());
            }
            let full = substitute(sketch, &assignment)
                .map_err(|e| PipelineError::Internal(format!("substitution failed: {e}")))?;
            let verdict = check_with_retry(&checker, self.request_for(theorem, &full)?).await?;
            *used += 1;
            if verdict.status.is_valid() {
                return Ok(Some(full));
            }
            // Extend one hole's validated list and retry with the alternate.
            let mut advanced = false;
            for (hole_id, search) in searches.iter_mut().enumerate() {
                if *used >= budget {
                    return Ok(None);
                }
                if self.validate_next(search, sketch, hole_id, theorem, &checker, used).await? {
                    search.choose_latest();
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                return Ok(None);
            }
        }
    }

    /// Validate untried candidates for one hole (other holes stay `sorry`)
    /// until one passes or the candidates/budget run out.
    async fn validate_next(
        &self,
        search: &mut HoleSearch,
        sketch: &ProofSketch,
        hole_id: usize,
        theorem: &TheoremDecl,
        checker: &Arc<Checker>,
        used: &mut usize,
    ) -> Result<bool, PipelineError> {
        while search.next_untried < search.candidates.len() {
            if *used >= self.cfg.refine_budget {
                return Ok(false);
            }
            let idx = search.next_untried;
            search.next_untried += 1;
            let script = partial_fill(sketch, hole_id, &search.candidates[idx].text)
                .map_err(|e| PipelineError::Internal(format!("partial fill failed: {e}")))?;
            let verdict = check_with_retry(checker, self.request_for(theorem, &script)?).await?;
            *used += 1;
            if verdict.status.is_valid() {
                search.validated.push(idx);
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Candidate set for one hole: step-model envelopes, hammer suggestions,
    /// then the heuristic battery — deduplicated, keeping the highest-priority
    /// source. Tactics containing `sorry`/`oops` are excluded so refined
    /// proofs are always closed. A failing step backend or hammer probe
    /// degrades to the remaining sources.
    async fn hole_candidates(
        &self,
        subgoal: &crate::sketch::Subgoal,
        sketch: &ProofSketch,
        hole_id: usize,
        theorem: &TheoremDecl,
        step: &Arc<dyn GenerationBackend>,
        checker: &Arc<Checker>,
    ) -> Result<Vec<TacticCandidate>, PipelineError> {
        let mut out: Vec<TacticCandidate> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut push = |cand: TacticCandidate, out: &mut Vec<TacticCandidate>| {
            if tactic_is_closing(&cand.text) && seen.insert(normalize_ws(&cand.text)) {
                out.push(cand);
            }
        };

        let prompt = build_tactic_prompt(subgoal);
        if let Ok(responses) = step.generate(&prompt, &self.cfg.step_sampling).await {
            for response in &responses {
                let Ok(text) = extract_envelope(&response.raw, self.filter.envelope_mode) else {
                    continue;
                };
                let Ok(cand) = TacticCandidate::new(&text, TacticSource::LlmStep) else {
                    continue;
                };
                push(cand, &mut out);
            }
        }

        let hammer_timeout = checker.config().hammer_timeout;
        if let Ok(suggestions) = checker
            .sledgehammer_probe(theorem, sketch, hole_id, &self.wrapper, hammer_timeout)
            .await
        {
            for cand in suggestions {
                push(cand, &mut out);
            }
        }

        for cand in heuristic_tactics() {
            push(cand, &mut out);
        }
        Ok(out)
    }

    fn assert_closed(&self, proof: &ProofScript) -> Result<(), PipelineError> {
        let tokens = token_texts(&proof.render())
            .map_err(|e| PipelineError::Internal(format!("final proof does not tokenize: {e}")))?;
        if tokens.iter().any(|t| t == "sorry" || t == "oops") {
            return Err(PipelineError::Internal(
                "final proof still contains a placeholder".to_string(),
            ));
        }
        Ok(())
    }
}

struct HoleSearch {
    candidates: Vec<TacticCandidate>,
    next_untried: usize,
    /// Candidate indices that passed the hole-wise check, oldest first.
    validated: Vec<usize>,
    chosen: usize,
}

impl HoleSearch {
    fn new(candidates: Vec<TacticCandidate>) -> Self {
        HoleSearch { candidates, next_untried: 0, validated: Vec::new(), chosen: 0 }
    }

    fn chosen_text(&self) -> &str {
        &self.candidates[self.validated[self.chosen]].text
    }

    fn choose_latest(&mut self) {
        self.chosen = self.validated.len() - 1;
    }
}

fn tactic_is_closing(text: &str) -> bool {
    match token_texts(text) {
        Ok(tokens) => !tokens.iter().any(|t| t == "sorry" || t == "oops"),
        Err(_) => false,
    }
}

/// One check with the session-restart retry: a `CheckerError` verdict
/// triggers a backend restart and a single retry; a second failure aborts the
/// pipeline.
async fn check_with_retry(checker: &Checker, req: CheckRequest) -> Result<Verdict, PipelineError> {
    let verdict = checker.check(req.clone()).await;
    if !matches!(verdict.status, VerdictStatus::CheckerError { .. }) {
        return Ok(verdict);
    }
    checker.restart().await.map_err(|e| PipelineError::Checker(e.to_string()))?;
    let retried = checker.check(req).await;
    if let VerdictStatus::CheckerError { detail } = &retried.status {
        return Err(PipelineError::Checker(detail.clone()));
    }
    Ok(retried)
}
