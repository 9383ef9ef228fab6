//! Prompt construction and pluggable generation backends for both model
//! roles: whole-proof synthesis and per-subgoal tactic generation, plus the
//! fixed heuristic tactic battery.

mod backend;
mod heuristics;
mod http;
mod prompt;

pub use backend::{BackendError, GenerationBackend, SamplingConfig, ScriptedBackend};
pub use heuristics::{heuristic_tactics, HEURISTIC_TACTICS};
pub use http::{HttpBackendConfig, HttpChatBackend};
pub use prompt::{
    build_tactic_prompt, build_whole_proof_prompt, standard_few_shot, FewShotExample,
    PromptTemplate, INPUT_THEOREM_MARKER, STANDARD_INSTRUCTION,
};

use serde::{Deserialize, Serialize};

use crate::syntax::{parse_justification, ParseError};

/// Where a tactic candidate came from; refinement orders candidates by
/// source priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacticSource {
    LlmStep,
    Heuristic,
    Sledgehammer,
}

/// A candidate tactic for one sketch hole. Construction validates that the
/// text parses as a justification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacticCandidate {
    pub text: String,
    pub source: TacticSource,
}

impl TacticCandidate {
    pub fn new(text: &str, source: TacticSource) -> Result<Self, ParseError> {
        parse_justification(text)?;
        Ok(TacticCandidate { text: text.to_string(), source })
    }
}
