//! Orchestrator behavior beyond the happy paths: combination fallback,
//! budget caps, candidate priority, retry-after-restart, and the evaluation
//! harness.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;

use sketchprove_core::checker::{
    wrap_theory, CheckBackend, CheckRequest, Checker, CheckerConfig, CheckerError, HammerRequest,
    MockOracle, VerdictStatus,
};
use sketchprove_core::evaluation::{run_eval, EvalCase};
use sketchprove_core::model::ScriptedBackend;
use sketchprove_core::orchestrator::{
    Pipeline, PipelineConfig, PipelineError, ProveStatus, SampleOutcome,
};
use sketchprove_core::sketch::{build_sketch, substitute, HoleAssignment};
use sketchprove_core::syntax::{parse_proof, parse_theorem, TheoremDecl};

const LISTING_ISAR: &str = "proof (induction xs) case Nil then show ?case by simp next \
                            case (Cons a xs) then show ?case by simp qed";

fn envelope(proof: &str) -> String {
    serde_json::json!({ "Isabelle_proof": proof }).to_string()
}

fn list_reverse() -> TheoremDecl {
    parse_theorem("theorem list_reverse: \"rev (rev xs) = xs\"").unwrap()
}

fn serial_pipeline() -> Pipeline {
    Pipeline::new(PipelineConfig { workers: 1, ..PipelineConfig::default() })
}

fn checker_for(oracle: MockOracle) -> Arc<Checker> {
    Arc::new(Checker::new(Arc::new(oracle), CheckerConfig::default()))
}

fn wrong_isar(first: &str, second: &str) -> String {
    format!(
        "proof (induction xs) case Nil then show ?case {first} next \
         case (Cons a xs) then show ?case {second} qed"
    )
}

#[tokio::test]
async fn combination_fallback_finds_second_assignment() {
    // Hole-wise both holes accept `by simp`, but the combined document is
    // denied; the alternate validated tactic `by blast` at hole 0 closes it.
    let pipeline = serial_pipeline();
    let sketch = build_sketch(&parse_proof(LISTING_ISAR).unwrap());
    let mut denied_assignment = HoleAssignment::single(0, "by simp");
    denied_assignment.insert(1, "by simp");
    let denied_doc = wrap_theory(
        &list_reverse(),
        &substitute(&sketch, &denied_assignment).unwrap(),
        &pipeline.wrapper,
    );
    let oracle = MockOracle::new().rule("?case", &["by simp", "by blast"]).deny(&denied_doc);

    let whole = Arc::new(ScriptedBackend::new(vec![vec![envelope(&wrong_isar(
        "by presburger",
        "by presburger",
    ))]]));
    let step =
        Arc::new(ScriptedBackend::new(vec![vec![envelope("by simp")], vec![envelope("by simp")]]));
    let result = pipeline.prove(&list_reverse(), whole, step, checker_for(oracle)).await.unwrap();

    assert_eq!(result.status, ProveStatus::SolvedRefined);
    let rendered = result.proof.unwrap().render();
    assert!(rendered.contains("show ?case by blast"));
    assert!(rendered.contains("show ?case by simp"));
    // 2 hole-wise passes + denied final + failed `by auto` + passing
    // `by blast` + accepted final.
    assert_eq!(result.stats.refinement_checks, 6);
}

#[tokio::test]
async fn refine_budget_caps_checks() {
    let cfg = PipelineConfig { workers: 1, refine_budget: 2, ..PipelineConfig::default() };
    let pipeline = Pipeline::new(cfg);
    // Sketch is valid but no tactic is ever accepted: the budget stops the
    // heuristic sweep.
    let whole =
        Arc::new(ScriptedBackend::new(vec![vec![envelope(&wrong_isar("by blast", "by blast"))]]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let result =
        pipeline.prove(&list_reverse(), whole, step, checker_for(MockOracle::new())).await.unwrap();
    assert_eq!(result.status, ProveStatus::Unsolved);
    assert!(result.stats.refinement_checks <= 2);
}

#[tokio::test]
async fn hammer_outranks_heuristics_and_llm_outranks_hammer() {
    // Single-hole apply sketch; only the hammer's suggestion is accepted.
    // First-fit order must be llm (fails), hammer (passes) — the heuristic
    // battery is never reached, which the check count pins down.
    let pipeline = serial_pipeline();
    let oracle = MockOracle::new()
        .rule("rev (rev xs) = xs", &["by (metis rev_rev_ident)"])
        .hammer_rule("rev (rev xs) = xs", &["by (metis rev_rev_ident)"]);
    let whole = Arc::new(ScriptedBackend::new(vec![vec![envelope(
        "apply (induction ys) apply auto done",
    )]]));
    let step = Arc::new(ScriptedBackend::new(vec![vec![envelope("by (simp add: llm_guess)")]]));
    let result = pipeline.prove(&list_reverse(), whole, step, checker_for(oracle)).await.unwrap();
    assert_eq!(result.status, ProveStatus::SolvedRefined);
    assert_eq!(result.proof.unwrap().render(), "by (metis rev_rev_ident)");
    // llm partial (fail) + hammer partial (pass) + final.
    assert_eq!(result.stats.refinement_checks, 3);
}

#[tokio::test]
async fn step_backend_exhaustion_degrades_to_heuristics() {
    let pipeline = serial_pipeline();
    let oracle = MockOracle::new().rule("?case", &["by simp"]);
    let whole =
        Arc::new(ScriptedBackend::new(vec![vec![envelope(&wrong_isar("by blast", "by blast"))]]));
    let step = Arc::new(ScriptedBackend::new(vec![])); // exhausted immediately
    let result = pipeline.prove(&list_reverse(), whole, step, checker_for(oracle)).await.unwrap();
    // Heuristics alone close both holes: by auto fails, by simp passes, per hole.
    assert_eq!(result.status, ProveStatus::SolvedRefined);
    assert_eq!(result.stats.refinement_checks, 5);
}

#[tokio::test]
async fn placeholder_tactics_are_never_candidates() {
    // The step model proposes `sorry`, which the sorry-accepting oracle would
    // happily validate; the pipeline must not let it into a final proof.
    let pipeline = serial_pipeline();
    let whole =
        Arc::new(ScriptedBackend::new(vec![vec![envelope(&wrong_isar("by blast", "by blast"))]]));
    let step = Arc::new(ScriptedBackend::new(vec![
        vec![envelope("sorry"), envelope("apply auto sorry")],
        vec![envelope("sorry")],
    ]));
    let result =
        pipeline.prove(&list_reverse(), whole, step, checker_for(MockOracle::new())).await.unwrap();
    assert_eq!(result.status, ProveStatus::Unsolved);
}

#[tokio::test]
async fn empty_filtered_set_is_unsolved_without_sketches() {
    let pipeline = serial_pipeline();
    let whole = Arc::new(ScriptedBackend::new(vec![vec![
        "no envelope".to_string(),
        envelope("The proof is trivial."),
    ]]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let result =
        pipeline.prove(&list_reverse(), whole, step, checker_for(MockOracle::new())).await.unwrap();
    assert_eq!(result.status, ProveStatus::Unsolved);
    assert_eq!(result.stats.candidates_generated, 2);
    assert_eq!(result.stats.candidates_filtered, 0);
    assert_eq!(result.stats.candidates_checked, 0);
    assert_eq!(result.stats.sketches_built, 0);
}

#[tokio::test]
async fn dedup_collapses_identical_candidates() {
    let pipeline = serial_pipeline();
    let batch = vec![envelope("by blast"); 6];
    let whole = Arc::new(ScriptedBackend::new(vec![batch]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let result =
        pipeline.prove(&list_reverse(), whole, step, checker_for(MockOracle::new())).await.unwrap();
    assert_eq!(result.stats.candidates_filtered, 6);
    assert_eq!(result.stats.candidates_checked, 1);
    assert_eq!(result.stats.sketches_built, 1);
}

/// Fails every check until restarted, then delegates to an inner oracle.
struct FlakyBackend {
    healthy: AtomicBool,
    restarts: AtomicUsize,
    inner: MockOracle,
}

#[async_trait]
impl CheckBackend for FlakyBackend {
    async fn run_check(&self, req: &CheckRequest) -> Result<VerdictStatus, CheckerError> {
        if self.healthy.load(Ordering::SeqCst) {
            self.inner.run_check(req).await
        } else {
            Err(CheckerError::Protocol("session died".to_string()))
        }
    }

    async fn run_hammer(&self, req: &HammerRequest) -> Result<Vec<String>, CheckerError> {
        self.inner.run_hammer(req).await
    }

    async fn restart(&self) -> Result<(), CheckerError> {
        self.restarts.fetch_add(1, Ordering::SeqCst);
        self.healthy.store(true, Ordering::SeqCst);
        Ok(())
    }
}

#[tokio::test]
async fn checker_error_triggers_restart_and_retry() {
    let backend = Arc::new(FlakyBackend {
        healthy: AtomicBool::new(false),
        restarts: AtomicUsize::new(0),
        inner: MockOracle::new()
            .rule("rev (rev xs) = xs", &["apply (induction xs) apply auto done"]),
    });
    let checker = Arc::new(Checker::new(backend.clone(), CheckerConfig::default()));
    let pipeline = serial_pipeline();
    let whole = Arc::new(ScriptedBackend::new(vec![vec![envelope(
        "apply (induction xs) apply auto done",
    )]]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let result = pipeline.prove(&list_reverse(), whole, step, checker).await.unwrap();
    assert_eq!(result.status, ProveStatus::SolvedWhole);
    assert_eq!(backend.restarts.load(Ordering::SeqCst), 1);
}

/// Always fails, even after restart.
struct DeadBackend;

#[async_trait]
impl CheckBackend for DeadBackend {
    async fn run_check(&self, _req: &CheckRequest) -> Result<VerdictStatus, CheckerError> {
        Err(CheckerError::Protocol("session died".to_string()))
    }

    async fn run_hammer(&self, _req: &HammerRequest) -> Result<Vec<String>, CheckerError> {
        Err(CheckerError::Protocol("session died".to_string()))
    }
}

#[tokio::test]
async fn persistent_checker_error_propagates() {
    let checker = Arc::new(Checker::new(Arc::new(DeadBackend), CheckerConfig::default()));
    let pipeline = serial_pipeline();
    let whole = Arc::new(ScriptedBackend::new(vec![vec![envelope("by simp")]]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let err = pipeline.prove(&list_reverse(), whole, step, checker).await.unwrap_err();
    assert!(matches!(err, PipelineError::Checker(_)));
}

#[tokio::test]
async fn recording_mode_reports_per_sample_outcomes() {
    let pipeline = serial_pipeline();
    let valid = "apply (induction xs) apply auto done";
    let whole = Arc::new(ScriptedBackend::new(vec![vec![
        "garbage".to_string(),
        envelope("by blast"),
        envelope(valid),
        envelope("by fastforce"),
    ]]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let oracle = MockOracle::new().rule("rev (rev xs) = xs", &[valid]);
    let (result, outcomes) =
        pipeline.prove_recording(&list_reverse(), whole, step, checker_for(oracle)).await.unwrap();
    assert_eq!(result.status, ProveStatus::SolvedWhole);
    assert_eq!(
        outcomes,
        vec![
            SampleOutcome::FilteredOut,
            SampleOutcome::Invalid,
            SampleOutcome::Valid,
            SampleOutcome::Invalid,
        ]
    );
    // Exhaustive mode checks every distinct filtered candidate.
    assert_eq!(result.stats.candidates_checked, 3);
}

#[tokio::test]
async fn eval_report_aggregates_and_sorts() {
    let pipeline = Arc::new(serial_pipeline());
    let valid = "apply (induction xs) apply auto done";
    // Theorems run in spawn order under workers = 1: zeta first.
    let cases = vec![
        EvalCase {
            name: "zeta".to_string(),
            theorem: parse_theorem("theorem zeta: \"rev (rev xs) = xs\"").unwrap(),
        },
        EvalCase {
            name: "alpha".to_string(),
            theorem: parse_theorem("theorem alpha: \"[] @ xs = xs\"").unwrap(),
        },
    ];
    let whole = Arc::new(ScriptedBackend::new(vec![
        vec![envelope(valid), envelope("by blast")],
        vec![envelope("by blast"), envelope("by auto")],
    ]));
    let step = Arc::new(ScriptedBackend::new(vec![]));
    let oracle = MockOracle::new().rule("rev (rev xs) = xs", &[valid]);
    let report = run_eval(
        pipeline,
        cases,
        whole,
        step,
        checker_for(oracle),
        false,
        serde_json::json!({ "run": "test" }),
    )
    .await
    .unwrap();

    assert_eq!(report.aggregate.total, 2);
    assert_eq!(report.aggregate.solved, 1);
    assert_eq!(report.aggregate.solved_whole, 1);
    assert_eq!(report.aggregate.success_rate, 0.5);
    assert_eq!(report.per_theorem[0].theorem_name, "alpha");
    assert_eq!(report.per_theorem[1].theorem_name, "zeta");
    assert_eq!(report.aggregate.pass_at_k[&1], 0.5);
    assert_eq!(report.aggregate.pass_at_k[&2], 0.5);
    assert_eq!(report.config["run"], "test");
    assert!(report.aggregate.max_prover_calls_per_theorem > 0);
}

#[tokio::test]
async fn check_candidates_parallel_contract() {
    let pipeline = serial_pipeline();
    let oracle = MockOracle::new().rule("rev (rev xs) = xs", &["by (metis rev_rev_ident)"]);
    let checker = checker_for(oracle);
    let candidates: Vec<_> = ["by auto", "by simp", "by blast", "by (metis rev_rev_ident)"]
        .iter()
        .map(|t| parse_proof(t).unwrap())
        .collect();

    // Only the last candidate is valid.
    let (winner, checked) = pipeline
        .check_candidates_parallel(&candidates, &list_reverse(), checker.clone())
        .await
        .unwrap();
    assert_eq!(winner.unwrap().render(), "by (metis rev_rev_ident)");
    assert!((1..=4).contains(&checked));

    // All invalid: none, and every candidate was checked.
    let (winner, checked) = pipeline
        .check_candidates_parallel(&candidates[..3], &list_reverse(), checker)
        .await
        .unwrap();
    assert!(winner.is_none());
    assert_eq!(checked, 3);
}

#[tokio::test]
async fn solved_refined_checks_every_filtered_candidate() {
    // Stage ordering: refinement only starts after the whole stage exhausted
    // the filtered set.
    let pipeline =
        Pipeline::new(PipelineConfig { workers: 1, dedup: false, ..PipelineConfig::default() });
    let whole = Arc::new(ScriptedBackend::new(vec![vec![
        envelope(&wrong_isar("by blast", "by blast")),
        envelope(&wrong_isar("by presburger", "by simp")),
        envelope("by fastforce"),
    ]]));
    let step =
        Arc::new(ScriptedBackend::new(vec![vec![envelope("by simp")], vec![envelope("by simp")]]));
    let oracle = MockOracle::new().rule("?case", &["by simp"]);
    let result = pipeline.prove(&list_reverse(), whole, step, checker_for(oracle)).await.unwrap();
    assert_eq!(result.status, ProveStatus::SolvedRefined);
    assert_eq!(result.stats.candidates_checked, result.stats.candidates_filtered);
    // Two distinct skeletons: the Isar shape and the collapsed apply chain.
    assert_eq!(result.stats.sketches_built, 2);
}
