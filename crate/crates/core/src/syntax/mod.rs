//! Tokenizer, parser, classifier, step counter, and renderer for a pragmatic
//! subset of Isabelle proof scripts. Every other module operates on this AST.
//!
//! All operations are pure; values are immutable after construction and safe
//! to share across tasks.

mod ast;
mod parse;
mod theorem;
mod token;

pub use ast::{
    ApplyChain, ApplyTerminator, ChainKeyword, IsarBlock, IsarStatement, Justification, ProofBody,
    ProofScript, ProofStyle, SourceSpan, StatementKind,
};
pub use parse::{
    parse_justification, parse_justification_with, parse_proof, parse_proof_with, ParseError,
    ParserConfig, DEFAULT_KEYWORDS,
};
pub use theorem::{parse_theorem, split_theorem_proof, TheoremDecl, TheoremKeyword};
pub use token::{join_tokens, token_texts, tokenize, Token, TokenKind};

pub(crate) use ast::{render_justification, render_statement};

/// Collapse all whitespace runs to single spaces. The normalization applied
/// to oracle rule keys and dedup keys.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Free-function form of [`ProofScript::style`].
pub fn classify_style(p: &ProofScript) -> ProofStyle {
    p.style()
}

/// Free-function form of [`ProofScript::count_steps`].
pub fn count_steps(p: &ProofScript) -> usize {
    p.count_steps()
}

/// Free-function form of [`ProofScript::render`].
pub fn render(p: &ProofScript) -> String {
    p.render()
}
