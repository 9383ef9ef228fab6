//! Recursive-descent parser for the proof-script subset.
//!
//! Statement granularity: command keywords are structural, everything else
//! (propositions, method arguments, fact names) is captured as opaque text.
//! Chain commands (`then`, `moreover`, `from x`, ...) are statements of their
//! own; `next` separates sections inside a block and is not a statement.

use std::collections::BTreeSet;

use thiserror::Error;

use super::ast::*;
use super::token::{join_tokens, tokenize, Token, TokenKind};

/// Command keywords recognized by the parser. Data-driven so the gate can
/// evolve without code changes; tokens at command position outside this set
/// report `UnknownCommand`.
pub const DEFAULT_KEYWORDS: &[&str] = &[
    "theorem",
    "lemma",
    "corollary",
    "proof",
    "qed",
    "next",
    "case",
    "show",
    "have",
    "hence",
    "thus",
    "then",
    "from",
    "with",
    "using",
    "fix",
    "assume",
    "obtain",
    "where",
    "let",
    "also",
    "finally",
    "moreover",
    "ultimately",
    "by",
    "apply",
    "unfolding",
    "subgoal",
    "done",
    "sorry",
    "oops",
];

/// Words that end an opaque text run (propositions, method arguments).
/// `using`, `unfolding` and `where` are absorbed: they refine the statement
/// they follow rather than starting a new one.
const TEXT_STOP: &[&str] = &[
    "by",
    "proof",
    "apply",
    "sorry",
    "done",
    "oops",
    "qed",
    "next",
    "case",
    "show",
    "have",
    "fix",
    "assume",
    "obtain",
    "let",
    "then",
    "thus",
    "hence",
    "moreover",
    "ultimately",
    "also",
    "finally",
    "from",
    "with",
];

/// Words that end an apply-chain command argument.
const CHAIN_STOP: &[&str] =
    &["apply", "using", "unfolding", "subgoal", "by", "done", "sorry", "oops"];

#[derive(Debug, Clone)]
pub struct ParserConfig {
    pub keywords: BTreeSet<String>,
    /// Maximum depth of nested `proof ... qed` blocks; exceeding it reports
    /// `UnbalancedBlock`.
    pub max_depth: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            max_depth: 64,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced proof block (line {})", span.line)]
    UnbalancedBlock { span: SourceSpan },
    #[error("unknown command `{word}` (line {})", span.line)]
    UnknownCommand { word: String, span: SourceSpan },
    #[error("expected {expected}, found `{found}` (line {})", span.line)]
    UnexpectedToken { expected: String, found: String, span: SourceSpan },
    #[error("unexpected end of input, expected {expected}")]
    UnexpectedEnd { expected: String },
    #[error("unterminated {what}")]
    UnterminatedDelimiter { what: &'static str, span: SourceSpan },
}

impl ParseError {
    pub fn span(&self) -> Option<SourceSpan> {
        match self {
            ParseError::EmptyInput => None,
            ParseError::UnbalancedBlock { span }
            | ParseError::UnknownCommand { span, .. }
            | ParseError::UnexpectedToken { span, .. }
            | ParseError::UnterminatedDelimiter { span, .. } => Some(*span),
            ParseError::UnexpectedEnd { .. } => None,
        }
    }
}

/// Parse a complete proof script with the default configuration.
pub fn parse_proof(text: &str) -> Result<ProofScript, ParseError> {
    parse_proof_with(text, &ParserConfig::default())
}

pub fn parse_proof_with(text: &str, cfg: &ParserConfig) -> Result<ProofScript, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut parser = Parser { tokens: &tokens, pos: 0, cfg, depth: 0 };
    let script = parser.proof_script()?;
    parser.expect_end()?;
    Ok(script)
}

/// Parse a bare justification (`by simp`, `sorry`, a nested `proof ... qed`,
/// or an apply sequence). This is the entry point used to validate tactic
/// candidates before substitution.
pub fn parse_justification(text: &str) -> Result<Justification, ParseError> {
    parse_justification_with(text, &ParserConfig::default())
}

pub fn parse_justification_with(
    text: &str,
    cfg: &ParserConfig,
) -> Result<Justification, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let mut parser = Parser { tokens: &tokens, pos: 0, cfg, depth: 0 };
    let j = parser.justification()?;
    parser.expect_end()?;
    Ok(j)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    cfg: &'a ParserConfig,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_word(&self) -> Option<&'a str> {
        self.peek().filter(|t| t.kind == TokenKind::Word).map(|t| t.text.as_str())
    }

    fn bump(&mut self) -> &'a Token {
        let t = &self.tokens[self.pos];
        self.pos += 1;
        t
    }

    fn last_span(&self) -> SourceSpan {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(ParseError::UnexpectedToken {
                expected: "end of input".to_string(),
                found: t.text.clone(),
                span: t.span,
            }),
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::UnexpectedToken {
                expected: expected.to_string(),
                found: t.text.clone(),
                span: t.span,
            },
            None => ParseError::UnexpectedEnd { expected: expected.to_string() },
        }
    }

    fn check_known(&self, word: &str, span: SourceSpan) -> Result<(), ParseError> {
        if self.cfg.keywords.contains(word) {
            Ok(())
        } else {
            Err(ParseError::UnknownCommand { word: word.to_string(), span })
        }
    }

    fn proof_script(&mut self) -> Result<ProofScript, ParseError> {
        let tok = self.peek().expect("caller checked non-empty");
        match tok.kind {
            TokenKind::Word => {}
            _ => return Err(self.unexpected("a proof command")),
        }
        let word = tok.text.as_str();
        self.check_known(word, tok.span)?;
        let body = match word {
            "proof" => {
                self.bump();
                ProofBody::Isar(self.isar_block(tok.span)?)
            }
            "apply" | "using" | "unfolding" | "subgoal" | "by" | "sorry" | "oops" => {
                ProofBody::Apply(self.apply_chain()?)
            }
            _ => return Err(self.unexpected("a proof command (proof/apply/by/...)")),
        };
        Ok(ProofScript { body })
    }

    /// A linear apply chain; the leading token has not been consumed.
    fn apply_chain(&mut self) -> Result<ApplyChain, ParseError> {
        let mut commands = Vec::new();
        loop {
            let Some(tok) = self.peek() else {
                return Err(ParseError::UnexpectedEnd {
                    expected: "a chain terminator (done/by/sorry/oops)".to_string(),
                });
            };
            if tok.kind != TokenKind::Word {
                return Err(self.unexpected("an apply command or terminator"));
            }
            let word = tok.text.as_str();
            self.check_known(word, tok.span)?;
            match word {
                "apply" => {
                    self.bump();
                    let method = self.method_text("apply")?;
                    commands.push(format!("apply {method}"));
                }
                "using" | "unfolding" | "subgoal" => {
                    self.bump();
                    let args = self.opaque_text(CHAIN_STOP);
                    if args.is_empty() && word != "subgoal" {
                        return Err(self.unexpected("facts"));
                    } else if args.is_empty() {
                        commands.push(word.to_string());
                    } else {
                        commands.push(format!("{word} {args}"));
                    }
                }
                "by" => {
                    self.bump();
                    let method = self.method_text("by")?;
                    return Ok(ApplyChain {
                        commands,
                        terminator: ApplyTerminator::ByTactic(method),
                    });
                }
                "done" => {
                    if commands.is_empty() {
                        return Err(self.unexpected("an apply command before `done`"));
                    }
                    self.bump();
                    return Ok(ApplyChain { commands, terminator: ApplyTerminator::Done });
                }
                "sorry" => {
                    self.bump();
                    return Ok(ApplyChain { commands, terminator: ApplyTerminator::Sorry });
                }
                "oops" => {
                    self.bump();
                    return Ok(ApplyChain { commands, terminator: ApplyTerminator::Oops });
                }
                _ => return Err(self.unexpected("an apply command or terminator")),
            }
        }
    }

    /// `proof` has been consumed; `open_span` is its span.
    fn isar_block(&mut self, open_span: SourceSpan) -> Result<IsarBlock, ParseError> {
        self.depth += 1;
        if self.depth > self.cfg.max_depth {
            return Err(ParseError::UnbalancedBlock { span: open_span });
        }
        let opening_method = self.opening_method();
        let mut sections = vec![Vec::new()];
        loop {
            let Some(tok) = self.peek() else {
                return Err(ParseError::UnbalancedBlock { span: open_span });
            };
            if tok.kind != TokenKind::Word {
                return Err(self.unexpected("a statement keyword"));
            }
            let word = tok.text.as_str();
            self.check_known(word, tok.span)?;
            match word {
                "qed" => {
                    let end = self.bump().span;
                    self.depth -= 1;
                    return Ok(IsarBlock {
                        opening_method,
                        sections,
                        span: SourceSpan::new(
                            open_span.start_offset,
                            end.end_offset,
                            open_span.line,
                        ),
                    });
                }
                "next" => {
                    self.bump();
                    sections.push(Vec::new());
                }
                _ => {
                    let stmt = self.statement()?;
                    sections.last_mut().expect("at least one section").push(stmt);
                }
            }
        }
    }

    /// The optional method after `proof`: `-`, one or more parenthesized
    /// groups, or a bare method name. Absent when the next token starts a
    /// statement or closes the block.
    fn opening_method(&mut self) -> Option<String> {
        let tok = self.peek()?;
        match tok.kind {
            TokenKind::Word => {
                let w = tok.text.as_str();
                if w == "-" {
                    self.bump();
                    Some("-".to_string())
                } else if TEXT_STOP.contains(&w)
                    || w == "next"
                    || ChainKeyword::from_word(w).is_some()
                {
                    None
                } else {
                    let text = self.opaque_text(TEXT_STOP);
                    if text.is_empty() {
                        None
                    } else {
                        Some(text)
                    }
                }
            }
            TokenKind::LParen => {
                let text = self.opaque_text(TEXT_STOP);
                Some(text)
            }
            _ => None,
        }
    }

    fn statement(&mut self) -> Result<IsarStatement, ParseError> {
        let tok = self.peek().expect("caller checked");
        let start = tok.span;
        let word = tok.text.as_str();
        if let Some(keyword) = ChainKeyword::from_word(word) {
            self.bump();
            return self.chain_statement(keyword, start);
        }
        let kind = match word {
            "case" => {
                self.bump();
                self.case_statement()?
            }
            "show" => {
                self.bump();
                let prop = self.required_text("a goal proposition")?;
                let justification = self.justification()?;
                StatementKind::Show { prop, justification }
            }
            "have" => {
                self.bump();
                let label = self.optional_label();
                let prop = self.required_text("a proposition")?;
                let justification = self.justification()?;
                StatementKind::Have { label, prop, justification }
            }
            "fix" => {
                self.bump();
                let vars = self.required_text("variables")?;
                StatementKind::Fix { vars }
            }
            "assume" => {
                self.bump();
                let label = self.optional_label();
                let prop = self.required_text("an assumption")?;
                StatementKind::Assume { label, prop }
            }
            "obtain" => {
                self.bump();
                let vars = self.obtain_vars()?;
                let prop = self.required_text("a proposition")?;
                let justification = self.justification()?;
                StatementKind::Obtain { vars, prop, justification }
            }
            "let" => {
                self.bump();
                let binding = self.required_text("a binding")?;
                StatementKind::Let { binding }
            }
            _ => return Err(self.unexpected("a statement keyword")),
        };
        Ok(IsarStatement { kind, span: self.span_from(start) })
    }

    fn chain_statement(
        &mut self,
        keyword: ChainKeyword,
        start: SourceSpan,
    ) -> Result<IsarStatement, ParseError> {
        let kind = match keyword {
            // Goal-carrying chains: `thus ?case by simp`.
            ChainKeyword::Thus | ChainKeyword::Hence => {
                let prop = self.required_text("a goal proposition")?;
                let justification = self.justification()?;
                StatementKind::Chain {
                    keyword,
                    prop: Some(prop),
                    justification: Some(justification),
                }
            }
            // Fact-carrying chains: `from a b`, `with assms`, `using xs`.
            ChainKeyword::From | ChainKeyword::With | ChainKeyword::Using => {
                let prop = self.required_text("fact names")?;
                let justification =
                    if self.at_justification_start() { Some(self.justification()?) } else { None };
                StatementKind::Chain { keyword, prop: Some(prop), justification }
            }
            // Bare chains: `then`, `moreover`, `ultimately`, `also`, `finally`.
            _ => StatementKind::Chain { keyword, prop: None, justification: None },
        };
        Ok(IsarStatement { kind, span: self.span_from(start) })
    }

    fn case_statement(&mut self) -> Result<StatementKind, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::LParen => {
                self.bump();
                let mut parts = Vec::new();
                loop {
                    let Some(t) = self.peek() else {
                        return Err(ParseError::UnexpectedEnd { expected: "`)`".to_string() });
                    };
                    match t.kind {
                        TokenKind::RParen => {
                            self.bump();
                            break;
                        }
                        TokenKind::Word | TokenKind::Quoted => parts.push(self.bump().text.clone()),
                        _ => return Err(self.unexpected("a case binder")),
                    }
                }
                if parts.is_empty() {
                    return Err(self.unexpected("a case name"));
                }
                let name = parts.remove(0);
                Ok(StatementKind::Case { name, binders: parts })
            }
            Some(t) if t.kind == TokenKind::Word => {
                let name = self.bump().text.clone();
                Ok(StatementKind::Case { name, binders: Vec::new() })
            }
            _ => Err(self.unexpected("a case name")),
        }
    }

    fn obtain_vars(&mut self) -> Result<String, ParseError> {
        let mut toks = Vec::new();
        loop {
            match self.peek() {
                Some(t) if t.is_word("where") => {
                    self.bump();
                    if toks.is_empty() {
                        return Err(self.unexpected("obtained variables"));
                    }
                    return Ok(join_tokens(&toks));
                }
                Some(t) if t.kind == TokenKind::Word && TEXT_STOP.contains(&t.text.as_str()) => {
                    return Err(self.unexpected("`where`"));
                }
                Some(_) => toks.push(self.bump().clone()),
                None => return Err(ParseError::UnexpectedEnd { expected: "`where`".to_string() }),
            }
        }
    }

    fn at_justification_start(&self) -> bool {
        matches!(
            self.peek_word(),
            Some("by")
                | Some("proof")
                | Some("sorry")
                | Some("apply")
                | Some("done")
                | Some("oops")
        )
    }

    fn justification(&mut self) -> Result<Justification, ParseError> {
        let Some(tok) = self.peek() else {
            return Err(ParseError::UnexpectedEnd {
                expected: "a justification (by/proof/sorry/apply)".to_string(),
            });
        };
        if tok.kind != TokenKind::Word {
            return Err(self.unexpected("a justification (by/proof/sorry/apply)"));
        }
        match tok.text.as_str() {
            "by" => {
                self.bump();
                let method = self.method_text("by")?;
                Ok(Justification::ByTactic(method))
            }
            "proof" => {
                let span = self.bump().span;
                Ok(Justification::NestedProof(Box::new(self.isar_block(span)?)))
            }
            "sorry" => {
                self.bump();
                Ok(Justification::Sorry)
            }
            "done" => {
                self.bump();
                Ok(Justification::Done)
            }
            "oops" => {
                self.bump();
                Ok(Justification::Oops)
            }
            "apply" => {
                let chain = self.apply_chain()?;
                Ok(Justification::ApplySeq {
                    commands: chain.commands,
                    terminator: chain.terminator,
                })
            }
            _ => Err(self.unexpected("a justification (by/proof/sorry/apply)")),
        }
    }

    /// Method text after `by`/`apply`: parenthesized groups and bare words up
    /// to the next structural keyword. Must be non-empty.
    fn method_text(&mut self, after: &str) -> Result<String, ParseError> {
        let text = self.opaque_text(TEXT_STOP);
        if text.is_empty() {
            return Err(self.unexpected(&format!("a method after `{after}`")));
        }
        Ok(text)
    }

    fn required_text(&mut self, expected: &str) -> Result<String, ParseError> {
        let text = self.opaque_text(TEXT_STOP);
        if text.is_empty() {
            return Err(self.unexpected(expected));
        }
        Ok(text)
    }

    /// `have foo:` / `assume h:` — a word token ending in `:` right before the
    /// proposition.
    fn optional_label(&mut self) -> Option<String> {
        let t = self.peek()?;
        if t.kind == TokenKind::Word && t.text.len() > 1 && t.text.ends_with(':') {
            let label = t.text[..t.text.len() - 1].to_string();
            self.bump();
            Some(label)
        } else {
            None
        }
    }

    /// Consume tokens up to (not including) the next stop word at bracket
    /// depth zero, balancing parentheses and brackets.
    fn opaque_text(&mut self, stop: &[&str]) -> String {
        let mut toks: Vec<Token> = Vec::new();
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            match t.kind {
                TokenKind::LParen | TokenKind::LBracket => depth += 1,
                TokenKind::RParen | TokenKind::RBracket => {
                    if depth == 0 {
                        break; // closing delimiter owned by an outer context
                    }
                    depth -= 1;
                }
                TokenKind::Word if depth == 0 && stop.contains(&t.text.as_str()) => break,
                _ => {}
            }
            toks.push(self.bump().clone());
        }
        join_tokens(&toks)
    }

    fn span_from(&self, start: SourceSpan) -> SourceSpan {
        let end = self.last_span();
        SourceSpan::new(start.start_offset, end.end_offset, start.line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_APPLY: &str = "apply (induction xs) apply auto done";
    const LISTING_ISAR: &str = "proof (induction xs) case Nil then show ?case by simp next \
                                case (Cons a xs) then show ?case by simp qed";

    #[test]
    fn listing_apply_chain() {
        let p = parse_proof(LISTING_APPLY).unwrap();
        let ProofBody::Apply(chain) = &p.body else { panic!("expected apply chain") };
        assert_eq!(chain.commands, vec!["apply (induction xs)", "apply auto"]);
        assert_eq!(chain.terminator, ApplyTerminator::Done);
        assert_eq!(p.style(), ProofStyle::ApplyStyle);
        assert_eq!(p.count_steps(), 2);
    }

    #[test]
    fn listing_isar_block() {
        let p = parse_proof(LISTING_ISAR).unwrap();
        let ProofBody::Isar(block) = &p.body else { panic!("expected isar block") };
        assert_eq!(block.opening_method.as_deref(), Some("(induction xs)"));
        assert_eq!(block.sections.len(), 2);
        assert_eq!(block.statement_count(), 6);
        assert_eq!(p.style(), ProofStyle::Isar);
        assert_eq!(p.count_steps(), 7);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_proof(""), Err(ParseError::EmptyInput));
        assert_eq!(parse_proof("  (* just a comment *)  "), Err(ParseError::EmptyInput));
    }

    #[test]
    fn proof_without_qed_is_unbalanced() {
        let err = parse_proof("proof (induction xs) case Nil then show ?case by simp").unwrap_err();
        assert!(matches!(err, ParseError::UnbalancedBlock { .. }));
    }

    #[test]
    fn extra_qed_is_rejected() {
        let err = parse_proof("proof (induction xs) case Nil qed qed").unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedToken { .. }));
    }

    #[test]
    fn unknown_command() {
        let err = parse_proof("frobnicate xs").unwrap_err();
        assert!(matches!(err, ParseError::UnknownCommand { ref word, .. } if word == "frobnicate"));
    }

    #[test]
    fn bare_done_is_rejected() {
        assert!(parse_proof("done").is_err());
    }

    #[test]
    fn bare_sorry_parses() {
        let p = parse_proof("sorry").unwrap();
        let ProofBody::Apply(chain) = &p.body else { panic!() };
        assert!(chain.commands.is_empty());
        assert_eq!(chain.terminator, ApplyTerminator::Sorry);
    }

    #[test]
    fn render_roundtrip_listing() {
        for src in [LISTING_APPLY, LISTING_ISAR] {
            let p1 = parse_proof(src).unwrap();
            let p2 = parse_proof(&p1.render()).unwrap();
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn nested_proof_depth_cap() {
        let mut src = String::new();
        for _ in 0..5 {
            src.push_str("proof - show ?thesis ");
        }
        src.push_str("sorry");
        for _ in 0..5 {
            src.push_str(" qed");
        }
        assert!(parse_proof(&src).is_ok());
        let cfg = ParserConfig { max_depth: 3, ..ParserConfig::default() };
        let err = parse_proof_with(&src, &cfg).unwrap_err();
        assert!(matches!(err, ParseError::UnbalancedBlock { .. }));
    }

    #[test]
    fn justification_entry_point() {
        assert!(
            matches!(parse_justification("by simp"), Ok(Justification::ByTactic(m)) if m == "simp")
        );
        assert!(matches!(parse_justification("sorry"), Ok(Justification::Sorry)));
        assert!(matches!(
            parse_justification("apply simp apply auto done"),
            Ok(Justification::ApplySeq { .. })
        ));
        assert!(parse_justification("qed qed").is_err());
        assert!(parse_justification("by").is_err());
    }

    #[test]
    fn chain_statements_keep_their_facts() {
        let p = parse_proof("proof - assume a: \"P x\" from a show ?thesis by simp qed").unwrap();
        let ProofBody::Isar(block) = &p.body else { panic!() };
        let stmts: Vec<_> = block.statements().collect();
        assert_eq!(stmts.len(), 3);
        assert!(matches!(
            &stmts[1].kind,
            StatementKind::Chain { keyword: ChainKeyword::From, prop: Some(p), .. } if p == "a"
        ));
    }

    #[test]
    fn show_absorbs_using_into_prop() {
        let p = parse_proof("proof - show ?thesis using assms by auto qed").unwrap();
        let ProofBody::Isar(block) = &p.body else { panic!() };
        let stmt = block.statements().next().unwrap();
        assert!(matches!(
            &stmt.kind,
            StatementKind::Show { prop, .. } if prop == "?thesis using assms"
        ));
    }

    #[test]
    fn sibling_spans_do_not_overlap() {
        let p = parse_proof(LISTING_ISAR).unwrap();
        let ProofBody::Isar(block) = &p.body else { panic!() };
        let spans: Vec<_> = block.statements().map(|s| s.span).collect();
        for pair in spans.windows(2) {
            assert!(pair[0].end_offset <= pair[1].start_offset);
            assert!(pair[0].start_offset <= pair[0].end_offset);
        }
    }
}
