//! Deterministic mock oracle.
//!
//! Rules map normalized goal text to the set of tactic texts accepted for
//! that goal. A submitted document is split into theorem and proof, the proof
//! is re-sketched, and every hole is judged against its goal's rule: `sorry`
//! holes pass in sorry-accepting mode, everything else falls back to the
//! default verdict. `deny_texts` rejects specific full documents outright,
//! which lets tests build combination-sensitive oracles.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::sketch::{build_sketch, parse_subgoals};
use crate::syntax::{
    normalize_ws, parse_proof, render_justification, split_theorem_proof, tokenize, Justification,
    TokenKind,
};

use super::{CheckBackend, CheckRequest, CheckerError, HammerRequest, VerdictStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultVerdict {
    #[default]
    Invalid,
    Valid,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockOracle {
    /// Normalized goal text -> accepted tactic texts (normalized).
    #[serde(default)]
    pub rules: BTreeMap<String, BTreeSet<String>>,
    /// Normalized goal text -> hammer suggestions.
    #[serde(default)]
    pub hammer: BTreeMap<String, Vec<String>>,
    /// Verdict for goals without a rule.
    #[serde(default)]
    pub default_verdict: DefaultVerdict,
    /// Accept `sorry` holes, mirroring the prover's sketch-checking mode.
    #[serde(default = "default_true")]
    pub accept_sorry: bool,
    /// Fully-normalized documents rejected regardless of rules.
    #[serde(default)]
    pub deny_texts: BTreeSet<String>,
    /// Artificial per-check latency in milliseconds, for concurrency tests.
    #[serde(default)]
    pub delay_ms: u64,
}

fn default_true() -> bool {
    true
}

impl MockOracle {
    pub fn new() -> Self {
        MockOracle { accept_sorry: true, ..MockOracle::default() }
    }

    pub fn rule(mut self, goal: &str, tactics: &[&str]) -> Self {
        self.rules
            .entry(normalize_goal(goal))
            .or_default()
            .extend(tactics.iter().map(|t| normalize_ws(t)));
        self
    }

    pub fn hammer_rule(mut self, goal: &str, suggestions: &[&str]) -> Self {
        self.hammer
            .insert(normalize_goal(goal), suggestions.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn deny(mut self, document: &str) -> Self {
        self.deny_texts.insert(normalize_ws(document));
        self
    }

    pub fn with_default(mut self, v: DefaultVerdict) -> Self {
        self.default_verdict = v;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay_ms = delay.as_millis() as u64;
        self
    }

    /// Re-normalize keys and tactic texts, for oracles deserialized from
    /// hand-written files.
    pub fn into_normalized(self) -> Self {
        let mut out = MockOracle {
            default_verdict: self.default_verdict,
            accept_sorry: self.accept_sorry,
            delay_ms: self.delay_ms,
            ..MockOracle::default()
        };
        for (goal, tactics) in self.rules {
            out.rules
                .entry(normalize_goal(&goal))
                .or_default()
                .extend(tactics.iter().map(|t| normalize_ws(t)));
        }
        for (goal, suggestions) in self.hammer {
            out.hammer.insert(normalize_goal(&goal), suggestions);
        }
        out.deny_texts = self.deny_texts.iter().map(|d| normalize_ws(d)).collect();
        out
    }

    fn judge(&self, theory_text: &str) -> VerdictStatus {
        if self.deny_texts.contains(&normalize_ws(theory_text)) {
            return VerdictStatus::Invalid {
                message: "document is denied by oracle configuration".to_string(),
                position: None,
            };
        }
        let body = match theory_body(theory_text) {
            Ok(b) => b,
            Err(msg) => return VerdictStatus::Invalid { message: msg, position: None },
        };
        let (theorem, proof_src) = match split_theorem_proof(&body) {
            Ok((t, Some(p))) => (t, p),
            Ok((_, None)) => {
                return VerdictStatus::Invalid {
                    message: "theory contains no proof".to_string(),
                    position: None,
                }
            }
            Err(e) => return VerdictStatus::Invalid { message: e.to_string(), position: None },
        };
        let proof = match parse_proof(&proof_src) {
            Ok(p) => p,
            Err(e) => {
                return VerdictStatus::Invalid {
                    message: format!("syntax error: {e}"),
                    position: e.span().map(|s| s.start_offset),
                }
            }
        };

        let sketch = build_sketch(&proof);
        let subgoals = parse_subgoals(&sketch, Some(&theorem));
        for (hole, subgoal) in sketch.holes.iter().zip(&subgoals) {
            match &hole.original {
                Justification::Sorry => {
                    if self.accept_sorry {
                        continue;
                    }
                    return VerdictStatus::Invalid {
                        message: format!("sorry is not accepted (goal {})", subgoal.goal_prop),
                        position: None,
                    };
                }
                Justification::Oops => {
                    return VerdictStatus::Invalid {
                        message: "oops aborts the proof".to_string(),
                        position: None,
                    }
                }
                original => {
                    let tactic = normalize_ws(&render_justification(original));
                    let goal = normalize_goal(&subgoal.goal_prop);
                    let ok = match self.rules.get(&goal) {
                        Some(accepted) => accepted.contains(&tactic),
                        None => self.default_verdict == DefaultVerdict::Valid,
                    };
                    if !ok {
                        return VerdictStatus::Invalid {
                            message: format!(
                                "tactic `{tactic}` fails on goal `{}`",
                                subgoal.goal_prop
                            ),
                            position: None,
                        };
                    }
                }
            }
        }
        VerdictStatus::Valid
    }
}

/// Strip one layer of surrounding quotes and collapse whitespace, so rule
/// keys can be written as plain goal text.
fn normalize_goal(goal: &str) -> String {
    let g = normalize_ws(goal);
    let trimmed = g.trim();
    if trimmed.len() >= 2 && trimmed.starts_with('"') && trimmed.ends_with('"') {
        normalize_ws(&trimmed[1..trimmed.len() - 1])
    } else {
        g
    }
}

/// The text between the header's `begin` and the final `end`.
fn theory_body(theory_text: &str) -> Result<String, String> {
    let tokens = tokenize(theory_text).map_err(|e| format!("theory does not tokenize: {e}"))?;
    let begin = tokens
        .iter()
        .position(|t| t.kind == TokenKind::Word && t.text == "begin")
        .ok_or_else(|| "theory has no begin".to_string())?;
    let end = tokens
        .iter()
        .rposition(|t| t.kind == TokenKind::Word && t.text == "end")
        .ok_or_else(|| "theory has no end".to_string())?;
    if begin + 1 >= end {
        return Err("theory body is empty".to_string());
    }
    let start = tokens[begin + 1].span.start_offset;
    let stop = tokens[end - 1].span.end_offset;
    Ok(theory_text[start..stop].to_string())
}

#[async_trait]
impl CheckBackend for MockOracle {
    async fn run_check(&self, req: &CheckRequest) -> Result<VerdictStatus, CheckerError> {
        if self.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.delay_ms)).await;
        }
        Ok(self.judge(&req.theory_text))
    }

    async fn run_hammer(&self, req: &HammerRequest) -> Result<Vec<String>, CheckerError> {
        if self.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.delay_ms)).await;
        }
        Ok(self.hammer.get(&normalize_goal(&req.goal)).cloned().unwrap_or_default())
    }
}
