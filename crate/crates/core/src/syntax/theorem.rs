//! Theorem declarations: `theorem name [attrs]: "statement"`.
//!
//! The statement is opaque text (it may include `fixes`/`assumes`/`shows`
//! clauses); only the keyword, name and attributes are structural.

use serde::{Deserialize, Serialize};

use super::parse::ParseError;
use super::token::{join_tokens, tokenize, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremKeyword {
    Theorem,
    Lemma,
    Corollary,
}

impl TheoremKeyword {
    pub fn as_str(self) -> &'static str {
        match self {
            TheoremKeyword::Theorem => "theorem",
            TheoremKeyword::Lemma => "lemma",
            TheoremKeyword::Corollary => "corollary",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Some(match w {
            "theorem" => TheoremKeyword::Theorem,
            "lemma" => TheoremKeyword::Lemma,
            "corollary" => TheoremKeyword::Corollary,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremDecl {
    pub keyword: TheoremKeyword,
    pub name: Option<String>,
    /// Bracketed attribute text, e.g. `[simp]`.
    pub attributes: Option<String>,
    /// Statement text as written, including its quotes.
    pub statement: String,
}

impl TheoremDecl {
    pub fn new(keyword: TheoremKeyword, name: Option<&str>, statement: &str) -> Self {
        TheoremDecl {
            keyword,
            name: name.map(str::to_string),
            attributes: None,
            statement: statement.to_string(),
        }
    }

    /// Canonical declaration text. A nameless declaration is emitted in the
    /// anonymous `lemma "..."` form.
    pub fn render(&self) -> String {
        match &self.name {
            Some(name) => {
                let attrs = self.attributes.as_deref().map(|a| format!(" {a}")).unwrap_or_default();
                format!("{} {name}{attrs}: {}", self.keyword.as_str(), self.statement)
            }
            None => format!("lemma {}", self.statement),
        }
    }
}

/// Parse a theorem declaration; trailing tokens are rejected.
pub fn parse_theorem(text: &str) -> Result<TheoremDecl, ParseError> {
    let tokens = tokenize(text)?;
    let (decl, used) = theorem_from_tokens(&tokens)?;
    if used < tokens.len() {
        let t = &tokens[used];
        return Err(ParseError::UnexpectedToken {
            expected: "end of declaration".to_string(),
            found: t.text.clone(),
            span: t.span,
        });
    }
    Ok(decl)
}

/// Words that begin a proof after a theorem statement.
const PROOF_START: &[&str] =
    &["proof", "apply", "by", "using", "unfolding", "subgoal", "sorry", "oops", "done"];

/// Split `text` into a declaration and the proof source that follows it, if
/// any. Used on corpus records and wrapped theory bodies.
pub fn split_theorem_proof(text: &str) -> Result<(TheoremDecl, Option<String>), ParseError> {
    let tokens = tokenize(text)?;
    let (decl, used) = theorem_from_tokens(&tokens)?;
    if used >= tokens.len() {
        return Ok((decl, None));
    }
    let start = tokens[used].span.start_offset;
    let end = tokens.last().expect("non-empty").span.end_offset;
    Ok((decl, Some(text[start..end].to_string())))
}

fn theorem_from_tokens(tokens: &[Token]) -> Result<(TheoremDecl, usize), ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut pos = 0usize;
    let kw_tok = &tokens[pos];
    let keyword = match kw_tok.kind {
        TokenKind::Word => TheoremKeyword::from_word(&kw_tok.text),
        _ => None,
    }
    .ok_or_else(|| ParseError::UnexpectedToken {
        expected: "theorem/lemma/corollary".to_string(),
        found: kw_tok.text.clone(),
        span: kw_tok.span,
    })?;
    pos += 1;

    let mut name = None;
    let mut attributes = None;
    let mut colon_seen = false;

    // Optional `name`, `name:`, and `[attrs]` before the statement.
    while let Some(tok) = tokens.get(pos) {
        match tok.kind {
            TokenKind::Word if name.is_none() && !colon_seen => {
                let w = tok.text.as_str();
                if w == ":" {
                    colon_seen = true;
                    pos += 1;
                } else if let Some(stripped) = w.strip_suffix(':') {
                    name = Some(stripped.to_string());
                    colon_seen = true;
                    pos += 1;
                } else if w.starts_with('"') || w.starts_with('\u{2039}') {
                    break;
                } else {
                    name = Some(w.to_string());
                    pos += 1;
                }
            }
            TokenKind::Word if !colon_seen && tok.text == ":" => {
                colon_seen = true;
                pos += 1;
            }
            TokenKind::LBracket if !colon_seen => {
                let (text, next) = bracket_group(tokens, pos)?;
                attributes = Some(text);
                pos = next;
            }
            _ => break,
        }
    }

    // Statement: everything up to the first proof-start keyword at depth 0.
    let mut stmt_toks: Vec<Token> = Vec::new();
    let mut depth = 0usize;
    while let Some(tok) = tokens.get(pos) {
        match tok.kind {
            TokenKind::LParen | TokenKind::LBracket => depth += 1,
            TokenKind::RParen | TokenKind::RBracket => depth = depth.saturating_sub(1),
            TokenKind::Word if depth == 0 && PROOF_START.contains(&tok.text.as_str()) => break,
            _ => {}
        }
        stmt_toks.push(tok.clone());
        pos += 1;
    }
    if stmt_toks.is_empty() {
        return Err(match tokens.get(pos) {
            Some(t) => ParseError::UnexpectedToken {
                expected: "a theorem statement".to_string(),
                found: t.text.clone(),
                span: t.span,
            },
            None => ParseError::UnexpectedEnd { expected: "a theorem statement".to_string() },
        });
    }
    let statement = join_tokens(&stmt_toks);
    Ok((TheoremDecl { keyword, name, attributes, statement }, pos))
}

fn bracket_group(tokens: &[Token], start: usize) -> Result<(String, usize), ParseError> {
    let mut depth = 0usize;
    let mut pos = start;
    let mut toks = Vec::new();
    while let Some(tok) = tokens.get(pos) {
        match tok.kind {
            TokenKind::LBracket => depth += 1,
            TokenKind::RBracket => {
                depth -= 1;
                if depth == 0 {
                    toks.push(tok.clone());
                    return Ok((join_tokens(&toks), pos + 1));
                }
            }
            _ => {}
        }
        toks.push(tok.clone());
        pos += 1;
    }
    Err(ParseError::UnexpectedEnd { expected: "`]`".to_string() })
}
