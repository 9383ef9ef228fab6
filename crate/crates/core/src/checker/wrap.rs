//! Theory document construction around a theorem and its proof.

use serde::{Deserialize, Serialize};

use crate::sketch::ProofSketch;
use crate::syntax::{ProofScript, TheoremDecl};

use super::CheckerError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperConfig {
    #[serde(default = "default_theory_name")]
    pub theory_name: String,
    #[serde(default = "default_imports")]
    pub imports: Vec<String>,
    /// Isabelle session the server loads before checking.
    #[serde(default = "default_session")]
    pub session: String,
}

fn default_theory_name() -> String {
    "Scratch".to_string()
}

fn default_imports() -> Vec<String> {
    vec!["Main".to_string()]
}

fn default_session() -> String {
    "HOL".to_string()
}

impl Default for WrapperConfig {
    fn default() -> Self {
        WrapperConfig {
            theory_name: default_theory_name(),
            imports: default_imports(),
            session: default_session(),
        }
    }
}

fn render_import(name: &str) -> String {
    // Session-qualified names need quoting.
    if name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

fn header(theory_name: &str, imports: &[String]) -> String {
    let imports = if imports.is_empty() {
        "Main".to_string()
    } else {
        imports.iter().map(|i| render_import(i)).collect::<Vec<_>>().join(" ")
    };
    format!("theory {theory_name} imports {imports} begin")
}

/// `theory <name> imports <imports> begin` + theorem + proof + `end`.
pub fn wrap_theory(theorem: &TheoremDecl, proof: &ProofScript, cfg: &WrapperConfig) -> String {
    format!(
        "{}\n{}\n{}\nend\n",
        header(&cfg.theory_name, &cfg.imports),
        theorem.render(),
        proof.render()
    )
}

/// Wrap a sketch with a `sledgehammer` command injected just before hole
/// `hole_id`'s `sorry`. Holes appear in render order, so the target is the
/// (hole_id+1)-th `sorry` line of the rendered skeleton.
pub(super) fn wrap_theory_with_hammer(
    theorem: &TheoremDecl,
    sketch: &ProofSketch,
    hole_id: usize,
    cfg: &WrapperConfig,
) -> Result<String, CheckerError> {
    let rendered = sketch.skeleton.render();
    let mut seen = 0usize;
    let mut out_lines = Vec::new();
    let mut injected = false;
    for line in rendered.lines() {
        // One statement per line; a hole's sorry terminates its line.
        if line == "sorry" || line.ends_with(" sorry") {
            if seen == hole_id {
                let head = line.strip_suffix("sorry").unwrap_or("").trim_end();
                if head.is_empty() {
                    out_lines.push("sledgehammer".to_string());
                    out_lines.push("sorry".to_string());
                } else {
                    out_lines.push(head.to_string());
                    out_lines.push("sledgehammer".to_string());
                    out_lines.push("sorry".to_string());
                }
                injected = true;
            } else {
                out_lines.push(line.to_string());
            }
            seen += 1;
        } else {
            out_lines.push(line.to_string());
        }
    }
    if !injected {
        return Err(CheckerError::Protocol(format!(
            "hole {hole_id} not found among {seen} sorry sites"
        )));
    }
    Ok(format!(
        "{}\n{}\n{}\nend\n",
        header(&cfg.theory_name, &cfg.imports),
        theorem.render(),
        out_lines.join("\n")
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::build_sketch;
    use crate::syntax::{parse_proof, parse_theorem};

    fn list_reverse() -> TheoremDecl {
        parse_theorem("theorem list_reverse: \"rev (rev xs) = xs\"").unwrap()
    }

    #[test]
    fn default_wrap_starts_with_scratch_header() {
        let proof = parse_proof("by simp").unwrap();
        let doc = wrap_theory(&list_reverse(), &proof, &WrapperConfig::default());
        assert!(doc.starts_with("theory Scratch imports Main begin"));
        assert!(doc.trim_end().ends_with("end"));
        assert!(doc.contains("theorem list_reverse: \"rev (rev xs) = xs\""));
    }

    #[test]
    fn custom_imports_appear_quoted() {
        let proof = parse_proof("by simp").unwrap();
        let cfg = WrapperConfig {
            imports: vec!["HOL-Library.Multiset".to_string()],
            ..WrapperConfig::default()
        };
        let doc = wrap_theory(&list_reverse(), &proof, &cfg);
        assert!(doc.contains("imports \"HOL-Library.Multiset\""));
    }

    #[test]
    fn nameless_theorem_uses_anonymous_lemma() {
        let thm = parse_theorem("theorem \"x = x\"").unwrap();
        let proof = parse_proof("by simp").unwrap();
        let doc = wrap_theory(&thm, &proof, &WrapperConfig::default());
        assert!(doc.contains("\nlemma \"x = x\"\n"));
    }

    #[test]
    fn hammer_injection_targets_the_right_hole() {
        let p = parse_proof(
            "proof (induction xs) case Nil then show ?case by simp next \
             case (Cons a xs) then show ?case by simp qed",
        )
        .unwrap();
        let sketch = build_sketch(&p);
        let doc = wrap_theory_with_hammer(&list_reverse(), &sketch, 1, &WrapperConfig::default())
            .unwrap();
        let nil_at = doc.find("case Nil").unwrap();
        let hammer_at = doc.find("sledgehammer").unwrap();
        let cons_at = doc.find("case (Cons a xs)").unwrap();
        assert!(nil_at < cons_at && cons_at < hammer_at);
        assert_eq!(doc.matches("sledgehammer").count(), 1);
        assert_eq!(doc.matches("sorry").count(), 2);
    }
}
