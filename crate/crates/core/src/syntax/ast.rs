//! AST for the proof-script subset.
//!
//! Proposition payloads (quoted terms, cartouches) are opaque strings: the
//! parser balances their delimiters but never looks inside. Structural
//! equality ignores source spans, so a reparse of rendered output compares
//! equal to the original.

use serde::{Deserialize, Serialize};

/// Byte range of a node in the original source, with the 1-based line of its
/// first token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start_offset: usize,
    pub end_offset: usize,
    pub line: u32,
}

impl SourceSpan {
    pub fn new(start_offset: usize, end_offset: usize, line: u32) -> Self {
        debug_assert!(start_offset <= end_offset);
        SourceSpan { start_offset, end_offset, line }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofStyle {
    Isar,
    ApplyStyle,
}

/// A parsed proof script: either a structured Isar block or a linear apply
/// chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofScript {
    pub body: ProofBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofBody {
    Isar(IsarBlock),
    Apply(ApplyChain),
}

/// `proof [method] ... qed`, with statements grouped into sections separated
/// by `next` in the source. The section structure is what makes "the previous
/// `next`" a well-defined scope boundary for subgoal extraction.
#[derive(Debug, Clone)]
pub struct IsarBlock {
    pub opening_method: Option<String>,
    pub sections: Vec<Vec<IsarStatement>>,
    pub span: SourceSpan,
}

impl PartialEq for IsarBlock {
    fn eq(&self, other: &Self) -> bool {
        self.opening_method == other.opening_method && self.sections == other.sections
    }
}
impl Eq for IsarBlock {}

impl IsarBlock {
    /// All statements in source order, flattened across sections.
    pub fn statements(&self) -> impl Iterator<Item = &IsarStatement> {
        self.sections.iter().flatten()
    }

    pub fn statement_count(&self) -> usize {
        self.sections.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct IsarStatement {
    pub kind: StatementKind,
    pub span: SourceSpan,
}

impl PartialEq for IsarStatement {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}
impl Eq for IsarStatement {}

impl IsarStatement {
    pub fn justification(&self) -> Option<&Justification> {
        match &self.kind {
            StatementKind::Show { justification, .. }
            | StatementKind::Have { justification, .. }
            | StatementKind::Obtain { justification, .. } => Some(justification),
            StatementKind::Chain { justification, .. } => justification.as_ref(),
            _ => None,
        }
    }

    pub fn justification_mut(&mut self) -> Option<&mut Justification> {
        match &mut self.kind {
            StatementKind::Show { justification, .. }
            | StatementKind::Have { justification, .. }
            | StatementKind::Obtain { justification, .. } => Some(justification),
            StatementKind::Chain { justification, .. } => justification.as_mut(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatementKind {
    Case { name: String, binders: Vec<String> },
    Show { prop: String, justification: Justification },
    Have { label: Option<String>, prop: String, justification: Justification },
    Fix { vars: String },
    Assume { label: Option<String>, prop: String },
    Obtain { vars: String, prop: String, justification: Justification },
    Chain { keyword: ChainKeyword, prop: Option<String>, justification: Option<Justification> },
    Let { binding: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainKeyword {
    Then,
    Thus,
    Hence,
    Moreover,
    Ultimately,
    Also,
    Finally,
    From,
    With,
    Using,
}

impl ChainKeyword {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainKeyword::Then => "then",
            ChainKeyword::Thus => "thus",
            ChainKeyword::Hence => "hence",
            ChainKeyword::Moreover => "moreover",
            ChainKeyword::Ultimately => "ultimately",
            ChainKeyword::Also => "also",
            ChainKeyword::Finally => "finally",
            ChainKeyword::From => "from",
            ChainKeyword::With => "with",
            ChainKeyword::Using => "using",
        }
    }

    pub fn from_word(w: &str) -> Option<Self> {
        Some(match w {
            "then" => ChainKeyword::Then,
            "thus" => ChainKeyword::Thus,
            "hence" => ChainKeyword::Hence,
            "moreover" => ChainKeyword::Moreover,
            "ultimately" => ChainKeyword::Ultimately,
            "also" => ChainKeyword::Also,
            "finally" => ChainKeyword::Finally,
            "from" => ChainKeyword::From,
            "with" => ChainKeyword::With,
            "using" => ChainKeyword::Using,
            _ => return None,
        })
    }
}

/// How a goal statement is discharged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Justification {
    /// `by <method text>`; the text excludes the leading `by`.
    ByTactic(String),
    NestedProof(Box<IsarBlock>),
    ApplySeq {
        commands: Vec<String>,
        terminator: ApplyTerminator,
    },
    Sorry,
    Done,
    Oops,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApplyTerminator {
    Done,
    ByTactic(String),
    Sorry,
    Oops,
}

/// A linear apply-style proof: command texts plus a terminator. Commands may
/// be empty when the terminator alone forms the proof (`by simp`, or the
/// degenerate all-`sorry` skeleton produced by sketching).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyChain {
    pub commands: Vec<String>,
    pub terminator: ApplyTerminator,
}

impl ProofScript {
    /// Isar iff an Isar block appears anywhere; mixed scripts are Isar.
    pub fn style(&self) -> ProofStyle {
        match self.body {
            ProofBody::Isar(_) => ProofStyle::Isar,
            ProofBody::Apply(_) => ProofStyle::ApplyStyle,
        }
    }

    /// Step count. Apply style: one per command, plus one when the terminator
    /// is a `by` tactic. Isar: one per statement across all nested blocks,
    /// plus one per block opening.
    pub fn count_steps(&self) -> usize {
        match &self.body {
            ProofBody::Apply(chain) => {
                chain.commands.len()
                    + usize::from(matches!(chain.terminator, ApplyTerminator::ByTactic(_)))
            }
            ProofBody::Isar(block) => block_steps(block),
        }
    }

    /// Normalized text: one statement per line, single spaces, canonical
    /// keyword spelling. Reparsing the result yields a structurally equal AST.
    pub fn render(&self) -> String {
        match &self.body {
            ProofBody::Isar(block) => render_block(block),
            ProofBody::Apply(chain) => render_chain(chain),
        }
    }

    /// Render flattened onto a single line; the key used for deduplication
    /// and oracle rules.
    pub fn render_oneline(&self) -> String {
        self.render().replace('\n', " ")
    }
}

fn block_steps(block: &IsarBlock) -> usize {
    let mut n = 1; // the block opening
    for stmt in block.statements() {
        n += 1;
        if let Some(Justification::NestedProof(inner)) = stmt.justification() {
            n += block_steps(inner);
        }
    }
    n
}

fn render_block(block: &IsarBlock) -> String {
    let mut lines = Vec::new();
    match &block.opening_method {
        Some(m) => lines.push(format!("proof {m}")),
        None => lines.push("proof".to_string()),
    }
    for (i, section) in block.sections.iter().enumerate() {
        if i > 0 {
            lines.push("next".to_string());
        }
        for stmt in section {
            lines.push(render_statement(stmt));
        }
    }
    lines.push("qed".to_string());
    lines.join("\n")
}

fn render_chain(chain: &ApplyChain) -> String {
    let mut lines: Vec<String> = chain.commands.clone();
    lines.push(render_terminator(&chain.terminator));
    lines.join("\n")
}

fn render_terminator(t: &ApplyTerminator) -> String {
    match t {
        ApplyTerminator::Done => "done".to_string(),
        ApplyTerminator::ByTactic(m) => format!("by {m}"),
        ApplyTerminator::Sorry => "sorry".to_string(),
        ApplyTerminator::Oops => "oops".to_string(),
    }
}

pub(crate) fn render_statement(stmt: &IsarStatement) -> String {
    match &stmt.kind {
        StatementKind::Case { name, binders } => {
            if binders.is_empty() {
                format!("case {name}")
            } else {
                format!("case ({name} {})", binders.join(" "))
            }
        }
        StatementKind::Show { prop, justification } => {
            format!("show {prop} {}", render_justification(justification))
        }
        StatementKind::Have { label, prop, justification } => {
            let head = match label {
                Some(l) => format!("have {l}: {prop}"),
                None => format!("have {prop}"),
            };
            format!("{head} {}", render_justification(justification))
        }
        StatementKind::Fix { vars } => format!("fix {vars}"),
        StatementKind::Assume { label, prop } => match label {
            Some(l) => format!("assume {l}: {prop}"),
            None => format!("assume {prop}"),
        },
        StatementKind::Obtain { vars, prop, justification } => {
            format!("obtain {vars} where {prop} {}", render_justification(justification))
        }
        StatementKind::Chain { keyword, prop, justification } => {
            let mut s = keyword.as_str().to_string();
            if let Some(p) = prop {
                s.push(' ');
                s.push_str(p);
            }
            if let Some(j) = justification {
                s.push(' ');
                s.push_str(&render_justification(j));
            }
            s
        }
        StatementKind::Let { binding } => format!("let {binding}"),
    }
}

pub(crate) fn render_justification(j: &Justification) -> String {
    match j {
        Justification::ByTactic(m) => format!("by {m}"),
        Justification::NestedProof(block) => render_block(block),
        Justification::ApplySeq { commands, terminator } => {
            let mut parts = commands.clone();
            parts.push(render_terminator(terminator));
            parts.join(" ")
        }
        Justification::Sorry => "sorry".to_string(),
        Justification::Done => "done".to_string(),
        Justification::Oops => "oops".to_string(),
    }
}
