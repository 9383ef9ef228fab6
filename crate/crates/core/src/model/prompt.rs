//! Prompt construction for both model roles. Construction is pure: the same
//! inputs always produce byte-identical prompts.

use crate::sketch::Subgoal;
use crate::syntax::TheoremDecl;

pub const STANDARD_INSTRUCTION: &str = "Generate proof code in Isabelle/HOL based on the input \
Isabelle/HOL theorem. Make sure that the generated proof can be verified by Isabelle/HOL. Do not \
generate extra natural language descriptions.";

pub const INPUT_THEOREM_MARKER: &str = "**Input theorem:**";

const STEP_INSTRUCTION: &str = "Generate a single Isabelle/HOL proof step that closes the subgoal \
below. Respond with {\"Isabelle_proof\": \"<proof step>\"} and no extra natural language.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub theorem: String,
    pub envelope: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub instruction: String,
    pub few_shot: Vec<FewShotExample>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate { instruction: STANDARD_INSTRUCTION.to_string(), few_shot: Vec::new() }
    }
}

impl PromptTemplate {
    pub fn with_few_shot(mut self, examples: Vec<FewShotExample>) -> Self {
        self.few_shot = examples;
        self
    }
}

fn envelope(proof: &str) -> String {
    serde_json::json!({ "Isabelle_proof": proof }).to_string()
}

/// The three stock few-shot examples: a one-tactic proof, an apply-style
/// induction, and a structured Isar induction.
pub fn standard_few_shot() -> Vec<FewShotExample> {
    vec![
        FewShotExample {
            theorem: "theorem app_Nil: \"[] @ xs = (xs :: 'a list)\"".to_string(),
            envelope: envelope("by simp"),
        },
        FewShotExample {
            theorem: "theorem list_reverse: \"rev (rev xs) = xs\"".to_string(),
            envelope: envelope("apply (induct xs) apply simp apply simp done"),
        },
        FewShotExample {
            theorem: "theorem append_assoc: \"(xs @ ys) @ zs = xs @ (ys @ zs)\"".to_string(),
            envelope: envelope(
                "proof (induct xs) case Nil then show ?case by simp next \
                 case (Cons x xs) then show ?case by simp qed",
            ),
        },
    ]
}

/// Instruction, then the few-shot pairs, then the input marker and the
/// rendered theorem, in that order.
pub fn build_whole_proof_prompt(theorem: &TheoremDecl, template: &PromptTemplate) -> String {
    let mut out = String::new();
    out.push_str(&template.instruction);
    out.push('\n');
    for (i, ex) in template.few_shot.iter().enumerate() {
        out.push_str(&format!("Input theorem {n}:\n", n = i + 1));
        out.push_str(&ex.theorem);
        out.push('\n');
        out.push_str(&format!("Isabelle proof {n}:\n", n = i + 1));
        out.push_str(&ex.envelope);
        out.push('\n');
    }
    out.push_str(INPUT_THEOREM_MARKER);
    out.push('\n');
    out.push_str(&theorem.render());
    out
}

/// Prompt for one subgoal: instruction, the subgoal's context lines and case,
/// then the goal.
pub fn build_tactic_prompt(subgoal: &Subgoal) -> String {
    let mut out = String::new();
    out.push_str(STEP_INSTRUCTION);
    out.push('\n');
    if !subgoal.context_lines.is_empty() || subgoal.case_name.is_some() {
        out.push_str("**Subgoal context:**\n");
        for line in &subgoal.context_lines {
            out.push_str(line);
            out.push('\n');
        }
        if let Some(case) = &subgoal.case_name {
            out.push_str(&format!("case {case}\n"));
        }
    }
    out.push_str("**Goal:**\n");
    out.push_str(&subgoal.goal_prop);
    out
}
