//! Single executable exposing the proving pipeline, its pieces, and the
//! evaluation harness.
//!
//! Exit codes: 0 success/solved, 1 unsolved/rejected, 2 usage or
//! configuration error, 3 backend failure.

mod config;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sketchprove_core::checker::CheckRequest;
use sketchprove_core::dataprep::{
    emit_records, filter_by_steps, purify, read_records, split_by_style, split_records,
    CorpusRecord, PrepConfig,
};
use sketchprove_core::evaluation::{run_eval, EvalCase, TheoremRecord};
use sketchprove_core::filter::{extract_envelope, syntactic_gate, EnvelopeMode, FilterVerdict};
use sketchprove_core::orchestrator::{PipelineError, ProveStatus};
use sketchprove_core::sketch::{build_sketch_with, parse_subgoals, SketchConfig};
use sketchprove_core::syntax::{parse_proof, split_theorem_proof, ProofStyle, TheoremDecl};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "sketchprove",
    version,
    about = "Proof synthesis by whole-proof sampling and sketch refinement for Isabelle/HOL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one theorem file.
    Prove {
        /// File holding the theorem declaration.
        #[arg(long)]
        theorem: PathBuf,
        /// Write the result record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build a proof sketch and its subgoal listing.
    Sketch {
        /// Proof file; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Theorem file giving collapsed apply chains their goal.
        #[arg(long)]
        theorem: Option<PathBuf>,
        /// Collapse nested blocks into single holes.
        #[arg(long)]
        collapse_nested: bool,
    },
    /// Judge one model response from stdin: envelope plus syntactic gate.
    Filter {
        /// Accept envelopes embedded in prose.
        #[arg(long)]
        lenient: bool,
    },
    /// Dataset optimization: purify, split by style, filter by steps, emit.
    Prep {
        /// Record file, or a directory of .jsonl files; one
        /// {"theorem", "proof", "source_path"} object per line.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Percentage split, e.g. 95,1,4 for train/valid/test.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<u8>>,
        /// Emit source-path labels.
        #[arg(long)]
        labels: bool,
        #[arg(long)]
        apply_min: Option<usize>,
        #[arg(long)]
        apply_max: Option<usize>,
        #[arg(long)]
        isar_min: Option<usize>,
        #[arg(long)]
        isar_max: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the pipeline over a theorem-set file and emit an EvalReport.
    Eval {
        /// Line-delimited {"name", "theorem"} records.
        #[arg(long)]
        dataset: PathBuf,
        /// Sampling rate: whole-proof samples per theorem (sets n).
        #[arg(long)]
        k: Option<usize>,
        /// Use the unbiased combinatorial pass@k estimator.
        #[arg(long)]
        estimator: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check one theory file directly against the configured checker.
    Check {
        /// Full theory document.
        #[arg(long)]
        theory: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

async fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Prove { theorem, out, overrides } => {
            prove(&theorem, out.as_deref(), &overrides).await
        }
        Command::Sketch { input, theorem, collapse_nested } => {
            sketch(input.as_deref(), theorem.as_deref(), collapse_nested)
        }
        Command::Filter { lenient } => filter_stdin(lenient),
        Command::Prep {
            input,
            out_dir,
            split,
            labels,
            apply_min,
            apply_max,
            isar_min,
            isar_max,
            overrides,
        } => {
            let mut cfg = RunConfig::resolved(None, &overrides)?.prep;
            if labels {
                cfg.emit_labels = true;
            }
            if let Some(v) = apply_min {
                cfg.apply_min = v;
            }
            if let Some(v) = apply_max {
                cfg.apply_max = v;
            }
            if let Some(v) = isar_min {
                cfg.isar_min = v;
            }
            if let Some(v) = isar_max {
                cfg.isar_max = v;
            }
            prep(&input, &out_dir, split.as_deref(), &cfg)
        }
        Command::Eval { dataset, k, estimator, out, overrides } => {
            eval(&dataset, k, estimator, out.as_deref(), &overrides).await
        }
        Command::Check { theory, overrides } => check(&theory, &overrides).await,
    }
}

fn read_theorem(path: &Path) -> Result<TheoremDecl> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // Theorem files may carry a reference proof after the declaration.
    let (decl, _) = split_theorem_proof(text.trim())
        .map_err(|e| anyhow::anyhow!("parsing theorem {}: {e}", path.display()))?;
    Ok(decl)
}

fn write_output(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn backend_exit(e: &PipelineError) -> i32 {
    eprintln!("backend failure: {e}");
    3
}

async fn prove(theorem_path: &Path, out: Option<&Path>, overrides: &Overrides) -> Result<i32> {
    let cfg = RunConfig::resolved(None, overrides)?;
    let theorem = read_theorem(theorem_path)?;
    let pipeline = cfg.build_pipeline();
    let whole = cfg.build_backend(&cfg.whole_backend)?;
    let step = cfg.build_backend(&cfg.step_backend)?;
    let checker = cfg.build_checker()?;

    let started = Instant::now();
    let result = match pipeline.prove(&theorem, whole, step, checker).await {
        Ok(r) => r,
        Err(e) => return Ok(backend_exit(&e)),
    };
    let record = TheoremRecord {
        theorem_name: theorem.name.clone().unwrap_or_else(|| theorem_path.display().to_string()),
        status: result.status,
        stats: result.stats,
        elapsed_ms: started.elapsed().as_millis() as u64,
        final_proof: result.proof.as_ref().map(|p| p.render()),
    };
    let mut line = serde_json::to_string(&record)?;
    line.push('\n');
    write_output(out, &line)?;
    Ok(if result.status == ProveStatus::Unsolved { 1 } else { 0 })
}

fn sketch(input: Option<&Path>, theorem: Option<&Path>, collapse_nested: bool) -> Result<i32> {
    let text = match input {
        Some(path) => {
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf).context("reading stdin")?;
            buf
        }
    };
    let theorem = theorem.map(read_theorem).transpose()?;
    let proof = match parse_proof(text.trim()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Ok(1);
        }
    };
    let sketch = build_sketch_with(&proof, SketchConfig { collapse_nested });
    println!("{}", sketch.skeleton.render());
    println!();
    for subgoal in parse_subgoals(&sketch, theorem.as_ref()) {
        println!(
            "{}",
            serde_json::json!({
                "hole_id": subgoal.hole_id,
                "case_name": subgoal.case_name,
                "goal_prop": subgoal.goal_prop,
            })
        );
    }
    Ok(0)
}

fn filter_stdin(lenient: bool) -> Result<i32> {
    let mut raw = String::new();
    std::io::stdin().read_to_string(&mut raw).context("reading stdin")?;
    let mode = if lenient { EnvelopeMode::Lenient } else { EnvelopeMode::Strict };
    let verdict = match extract_envelope(&raw, mode) {
        Ok(text) => syntactic_gate(&text, &sketchprove_core::filter::FilterConfig::default()),
        Err(reason) => FilterVerdict::Rejected { reason },
    };
    match &verdict {
        FilterVerdict::Accepted { proof_text } => {
            println!("{}", serde_json::json!({ "accepted": true, "proof_text": proof_text }));
            Ok(0)
        }
        FilterVerdict::Rejected { reason } => {
            println!("{}", serde_json::json!({ "accepted": false, "reason": reason }));
            Ok(1)
        }
    }
}

fn prep(input: &Path, out_dir: &Path, split: Option<&[u8]>, cfg: &PrepConfig) -> Result<i32> {
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    // A directory means every .jsonl file in it, in name order.
    let mut text = String::new();
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            bail!("no .jsonl files under {}", input.display());
        }
        for path in paths {
            text.push_str(
                &std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?,
            );
        }
    } else {
        text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
    }
    let records = read_records(&text).context("parsing input records")?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let purified: Vec<CorpusRecord> = records
        .into_iter()
        .map(|mut r| -> Result<CorpusRecord> {
            r.theorem = purify(&r.theorem, cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            r.proof = purify(&r.proof, cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let total = purified.len();
    let (isar, apply, rejects) = split_by_style(purified);
    let isar = filter_by_steps(isar, ProofStyle::Isar, cfg);
    let apply = filter_by_steps(apply, ProofStyle::ApplyStyle, cfg);

    let mut rejects_file = std::fs::File::create(out_dir.join("rejects.jsonl"))?;
    for r in &rejects {
        writeln!(rejects_file, "{}", serde_json::to_string(r)?)?;
    }

    let emit = |name: &str, records: &[CorpusRecord]| -> Result<()> {
        emit_records(records, &out_dir.join(name), cfg).map_err(|e| anyhow::anyhow!("{e}"))
    };

    match split {
        None => {
            emit("isar.jsonl", &isar)?;
            emit("apply.jsonl", &apply)?;
        }
        Some(percents) => {
            if percents.len() != 3 || percents.iter().map(|p| *p as u32).sum::<u32>() != 100 {
                bail!("--split expects three percentages summing to 100, e.g. 95,1,4");
            }
            let names = ["train", "valid", "test"];
            for (style, records) in [("isar", &isar), ("apply", &apply)] {
                for (bucket, members) in split_records(records, percents, &names) {
                    let owned: Vec<CorpusRecord> = members.into_iter().cloned().collect();
                    emit(&format!("{style}_{bucket}.jsonl"), &owned)?;
                }
            }
        }
    }
    eprintln!(
        "prep: {total} records -> {} isar, {} apply, {} rejected",
        isar.len(),
        apply.len(),
        rejects.len()
    );
    Ok(0)
}

async fn eval(
    dataset: &Path,
    k: Option<usize>,
    estimator: bool,
    out: Option<&Path>,
    overrides: &Overrides,
) -> Result<i32> {
    let mut cfg = RunConfig::resolved(None, overrides)?;
    if let Some(k) = k {
        cfg.pipeline.n = k;
    }
    let text = std::fs::read_to_string(dataset)
        .with_context(|| format!("reading {}", dataset.display()))?;
    let mut cases = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("dataset line {}", i + 1))?;
        let name = v["name"].as_str().context("dataset record needs `name`")?.to_string();
        let theorem_text = v["theorem"].as_str().context("dataset record needs `theorem`")?;
        let (theorem, _) = split_theorem_proof(theorem_text)
            .map_err(|e| anyhow::anyhow!("dataset theorem `{name}`: {e}"))?;
        cases.push(EvalCase { name, theorem });
    }

    let pipeline = Arc::new(cfg.build_pipeline());
    let whole = cfg.build_backend(&cfg.whole_backend)?;
    let step = cfg.build_backend(&cfg.step_backend)?;
    let checker = cfg.build_checker()?;
    let report = match run_eval(pipeline, cases, whole, step, checker, estimator, cfg.echo()).await
    {
        Ok(r) => r,
        Err(e) => return Ok(backend_exit(&e)),
    };

    let mut buf = String::new();
    for record in &report.per_theorem {
        buf.push_str(&serde_json::to_string(record)?);
        buf.push('\n');
    }
    buf.push_str(&serde_json::to_string(&serde_json::json!({
        "aggregate": report.aggregate,
        "config": report.config,
    }))?);
    buf.push('\n');
    write_output(out, &buf)?;
    Ok(0)
}

async fn check(theory: &Path, overrides: &Overrides) -> Result<i32> {
    let cfg = RunConfig::resolved(None, overrides)?;
    let text =
        std::fs::read_to_string(theory).with_context(|| format!("reading {}", theory.display()))?;
    let checker = cfg.build_checker()?;
    let request = CheckRequest::new(text, cfg.pipeline_config().check_timeout)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let verdict = checker.check(request).await;
    println!("{}", serde_json::to_string(&verdict)?);
    use sketchprove_core::checker::VerdictStatus;
    Ok(match verdict.status {
        VerdictStatus::Valid => 0,
        VerdictStatus::Invalid { .. } | VerdictStatus::Timeout => 1,
        VerdictStatus::CheckerError { .. } => 3,
    })
}
