//! Black-box tests against the built binary: subcommand behavior and exit
//! codes (0 solved/success, 1 unsolved/rejected, 2 usage, 3 backend failure).

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_sketchprove");

fn run(args: &[&str], stdin: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(dir).stdout(Stdio::piped()).stderr(Stdio::piped());
    cmd.stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() });
    let mut child = cmd.spawn().expect("binary spawns");
    if let Some(input) = stdin {
        child.stdin.as_mut().unwrap().write_all(input.as_bytes()).unwrap();
    }
    child.wait_with_output().expect("binary exits")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).unwrap();
}

fn scripted_fixtures(dir: &Path) {
    write(dir, "theorem.thy", "theorem list_reverse: \"rev (rev xs) = xs\"\n");
    write(
        dir,
        "whole.jsonl",
        "{\"responses\": [\"{\\\"Isabelle_proof\\\": \\\"apply (induction xs) apply auto done\\\"}\", \"{\\\"Isabelle_proof\\\": \\\"by blast\\\"}\"]}\n",
    );
    write(dir, "steps.jsonl", "");
    write(
        dir,
        "oracle.json",
        "{\"rules\": {\"rev (rev xs) = xs\": [\"apply (induction xs) apply auto done\"]}}\n",
    );
}

#[test]
fn filter_accepts_envelope_and_rejects_prose() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run(&["filter"], Some("{\"Isabelle_proof\": \"by simp\"}"), dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout_of(&ok).trim()).unwrap();
    assert_eq!(v["accepted"], true);
    assert_eq!(v["proof_text"], "by simp");

    let bad = run(&["filter"], Some("The proof is trivial."), dir.path());
    assert_eq!(bad.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stdout_of(&bad).trim()).unwrap();
    assert_eq!(v["accepted"], false);

    let lenient =
        run(&["filter", "--lenient"], Some("Sure! {\"Isabelle_proof\": \"by auto\"}"), dir.path());
    assert_eq!(lenient.status.code(), Some(0));
}

#[test]
fn sketch_emits_skeleton_and_subgoal_listing() {
    let dir = tempfile::tempdir().unwrap();
    let isar = "proof (induction xs) case Nil then show ?case by simp next \
                case (Cons a xs) then show ?case by simp qed";
    let out = run(&["sketch"], Some(isar), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    assert!(text.contains("show ?case sorry"));
    assert!(!text.contains("by simp"));
    let holes: Vec<serde_json::Value> = text
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(holes.len(), 2);
    assert_eq!(holes[0]["hole_id"], 0);
    assert_eq!(holes[0]["case_name"], "Nil");
    assert_eq!(holes[1]["case_name"], "Cons a xs");
    assert_eq!(holes[1]["goal_prop"], "?case");

    let garbage = run(&["sketch"], Some("this is not a proof"), dir.path());
    assert_eq!(garbage.status.code(), Some(1));
}

#[test]
fn prove_scripted_solves_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    scripted_fixtures(dir.path());
    let out = run(
        &[
            "prove",
            "--theorem",
            "theorem.thy",
            "--backend",
            "scripted",
            "--script",
            "whole.jsonl",
            "--step-script",
            "steps.jsonl",
            "--checker",
            "mock",
            "--mock-oracle",
            "oracle.json",
            "--workers",
            "1",
        ],
        None,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_str(stdout_of(&out).trim()).unwrap();
    assert_eq!(record["theorem_name"], "list_reverse");
    assert_eq!(record["status"], "solved_whole");
    assert_eq!(record["stats"]["refinement_checks"], 0);
    assert!(record["final_proof"].as_str().unwrap().contains("apply (induction xs)"));
}

#[test]
fn prove_unsolved_exits_one_and_script_exhaustion_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    scripted_fixtures(dir.path());
    write(
        dir.path(),
        "hopeless.jsonl",
        "{\"responses\": [\"{\\\"Isabelle_proof\\\": \\\"by blast\\\"}\"]}\n",
    );
    let unsolved = run(
        &[
            "prove",
            "--theorem",
            "theorem.thy",
            "--script",
            "hopeless.jsonl",
            "--step-script",
            "steps.jsonl",
            "--mock-oracle",
            "oracle.json",
            "--workers",
            "1",
        ],
        None,
        dir.path(),
    );
    assert_eq!(unsolved.status.code(), Some(1));

    write(dir.path(), "empty.jsonl", "");
    let exhausted = run(
        &[
            "prove",
            "--theorem",
            "theorem.thy",
            "--script",
            "empty.jsonl",
            "--step-script",
            "steps.jsonl",
        ],
        None,
        dir.path(),
    );
    assert_eq!(exhausted.status.code(), Some(3));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run(&["frobnicate"], None, dir.path());
    assert_eq!(unknown.status.code(), Some(2));

    let missing_script =
        run(&["prove", "--theorem", "missing.thy", "--backend", "scripted"], None, dir.path());
    assert_eq!(missing_script.status.code(), Some(2));
}

#[test]
fn prep_splits_and_emits() {
    let dir = tempfile::tempdir().unwrap();
    let records = [
        serde_json::json!({
            "theorem": "lemma a: \"x = x\"",
            "proof": "apply auto  (* ok *)  done",
            "source_path": "A.thy",
        }),
        serde_json::json!({
            "theorem": "lemma b: \"y = y\"",
            "proof": "proof -\nhave h0: \"P0\" by simp\nhave h1: \"P1\" by simp\nhave h2: \"P2\" by simp\nshow ?thesis by simp\nqed",
            "source_path": "B.thy",
        }),
        serde_json::json!({
            "theorem": "lemma c: \"z = z\"",
            "proof": "complete nonsense",
            "source_path": "C.thy",
        }),
    ];
    let input: String = records.iter().map(|r| format!("{r}\n")).collect::<Vec<_>>().concat();
    write(dir.path(), "input.jsonl", &input);

    let out =
        run(&["prep", "--input", "input.jsonl", "--out-dir", "out", "--labels"], None, dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let apply = std::fs::read_to_string(dir.path().join("out/apply.jsonl")).unwrap();
    let isar = std::fs::read_to_string(dir.path().join("out/isar.jsonl")).unwrap();
    let rejects = std::fs::read_to_string(dir.path().join("out/rejects.jsonl")).unwrap();
    assert_eq!(apply.lines().count(), 1);
    assert_eq!(isar.lines().count(), 1);
    assert_eq!(rejects.lines().count(), 1);
    let rec: serde_json::Value = serde_json::from_str(apply.lines().next().unwrap()).unwrap();
    assert_eq!(rec["Isabelle_proof"], "apply auto done");
    assert_eq!(rec["label"], "A.thy");
    let rej: serde_json::Value = serde_json::from_str(rejects.lines().next().unwrap()).unwrap();
    assert_eq!(rej["source_path"], "C.thy");

    // Deterministic hash-based split still partitions completely.
    let split = run(
        &["prep", "--input", "input.jsonl", "--out-dir", "split", "--split", "95,1,4"],
        None,
        dir.path(),
    );
    assert_eq!(split.status.code(), Some(0));
    let mut total = 0usize;
    for style in ["isar", "apply"] {
        for bucket in ["train", "valid", "test"] {
            let path = dir.path().join(format!("split/{style}_{bucket}.jsonl"));
            total += std::fs::read_to_string(path).unwrap().lines().count();
        }
    }
    assert_eq!(total, 2);

    // A directory input consumes every .jsonl file inside it.
    std::fs::create_dir_all(dir.path().join("many")).unwrap();
    std::fs::copy(dir.path().join("input.jsonl"), dir.path().join("many/a.jsonl")).unwrap();
    let from_dir =
        run(&["prep", "--input", "many", "--out-dir", "outdir"], None, dir.path());
    assert_eq!(from_dir.status.code(), Some(0));
    assert!(dir.path().join("outdir/apply.jsonl").exists());
}

#[test]
fn eval_reports_pass_at_k_table() {
    let dir = tempfile::tempdir().unwrap();
    scripted_fixtures(dir.path());
    write(
        dir.path(),
        "dataset.jsonl",
        "{\"name\": \"list_reverse\", \"theorem\": \"theorem list_reverse: \\\"rev (rev xs) = xs\\\"\"}\n",
    );
    // 32 responses: sample 3 is the accepted proof.
    let responses: Vec<String> = (0..32)
        .map(|i| {
            if i == 3 {
                "{\\\"Isabelle_proof\\\": \\\"apply (induction xs) apply auto done\\\"}".to_string()
            } else {
                format!("{{\\\"Isabelle_proof\\\": \\\"by (simp add: f{i})\\\"}}")
            }
        })
        .map(|r| format!("\"{r}\""))
        .collect();
    write(
        dir.path(),
        "eval_whole.jsonl",
        &format!("{{\"responses\": [{}]}}\n", responses.join(", ")),
    );

    let out = run(
        &[
            "eval",
            "--dataset",
            "dataset.jsonl",
            "--k",
            "32",
            "--temperature",
            "0.9",
            "--script",
            "eval_whole.jsonl",
            "--step-script",
            "steps.jsonl",
            "--mock-oracle",
            "oracle.json",
            "--workers",
            "1",
        ],
        None,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    let last = text.lines().last().unwrap();
    let aggregate: serde_json::Value = serde_json::from_str(last).unwrap();
    // The pass@32 column exists and reflects the sample-3 success.
    assert_eq!(aggregate["aggregate"]["pass_at_k"]["32"], 1.0);
    assert_eq!(aggregate["aggregate"]["pass_at_k"]["2"], 0.0);
    assert_eq!(aggregate["aggregate"]["pass_at_k"]["4"], 1.0);
    // The resolved configuration is echoed for reproducibility.
    assert_eq!(aggregate["config"]["pipeline"]["n"], 32);
    assert_eq!(aggregate["config"]["pipeline"]["temperature"], 0.9);
}

#[test]
fn check_judges_theory_files() {
    let dir = tempfile::tempdir().unwrap();
    scripted_fixtures(dir.path());
    write(
        dir.path(),
        "good.thy",
        "theory Scratch imports Main begin\ntheorem list_reverse: \"rev (rev xs) = xs\"\napply (induction xs)\napply auto\ndone\nend\n",
    );
    write(
        dir.path(),
        "bad.thy",
        "theory Scratch imports Main begin\ntheorem list_reverse: \"rev (rev xs) = xs\"\nby blast\nend\n",
    );
    let good =
        run(&["check", "--theory", "good.thy", "--mock-oracle", "oracle.json"], None, dir.path());
    assert_eq!(good.status.code(), Some(0));
    let verdict: serde_json::Value = serde_json::from_str(stdout_of(&good).trim()).unwrap();
    assert_eq!(verdict["status"], "valid");

    let bad =
        run(&["check", "--theory", "bad.thy", "--mock-oracle", "oracle.json"], None, dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
