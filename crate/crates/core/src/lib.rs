//! Orchestration engine for LLM-driven Isabelle proof synthesis: generate
//! whole-proof candidates, filter and check them, abstract failures into
//! proof sketches, and refine sketch holes with tactic candidates, heuristic
//! tactics, and hammer probes until the prover accepts a complete proof.

pub mod checker;
pub mod dataprep;
pub mod evaluation;
pub mod filter;
pub mod model;
pub mod orchestrator;
pub mod sketch;
pub mod syntax;
