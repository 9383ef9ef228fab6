//! Dataset optimization: purification, style split, step-count filtering,
//! and structured-record emission.
//!
//! Input records are pre-extracted theorem/proof pairs; mining raw sources is
//! out of scope here.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::syntax::{parse_proof, ProofStyle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub theorem: String,
    pub proof: String,
    pub source_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<ProofStyle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub theorem: String,
    pub proof: String,
    pub source_path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub apply_min: usize,
    pub apply_max: usize,
    pub isar_min: usize,
    pub isar_max: usize,
    /// Ordered (from, to) rewrites applied after whitespace cleanup.
    pub symbol_rewrites: Vec<(String, String)>,
    pub emit_labels: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            apply_min: 1,
            apply_max: 5,
            isar_min: 5,
            isar_max: 50,
            symbol_rewrites: vec![
                ("\\<open>".to_string(), "\u{2039}".to_string()),
                ("\\<close>".to_string(), "\u{203a}".to_string()),
            ],
            emit_labels: false,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        if self.apply_min > self.apply_max || self.isar_min > self.isar_max {
            return Err(PrepError::InvalidConfig("step bounds must satisfy min <= max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("unterminated comment at byte {offset}")]
    UnterminatedComment { offset: usize },
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid prep configuration: {0}")]
    InvalidConfig(String),
}

/// Remove comments (nested), collapse blank/tab runs, trim line ends, drop
/// empty lines, then apply the symbol rewrites in order. Content inside
/// string and cartouche literals is never altered by comment removal or
/// whitespace collapsing. Idempotent.
pub fn purify(text: &str, cfg: &PrepConfig) -> Result<String, PrepError> {
    let stripped = strip_comments(text)?;
    let collapsed = collapse_ws(&stripped);
    let mut out = collapsed;
    for (from, to) in &cfg.symbol_rewrites {
        out = out.replace(from, to);
    }
    Ok(out)
}

#[derive(PartialEq)]
enum ScanState {
    Normal,
    Str { escaped: bool },
    Cart(usize),
}

/// Replace each top-level comment with a single space; comments inside
/// string/cartouche literals are content, delimiters inside comments are not.
fn strip_comments(text: &str) -> Result<String, PrepError> {
    let mut out = String::with_capacity(text.len());
    let mut state = ScanState::Normal;
    let mut pos = 0usize;
    while pos < text.len() {
        let rest = &text[pos..];
        let c = rest.chars().next().expect("char boundary");
        match &mut state {
            ScanState::Normal => {
                if rest.starts_with("(*") {
                    let mut depth = 0usize;
                    let open_at = pos;
                    let mut inner = pos;
                    let mut closed = false;
                    while inner < text.len() {
                        let r = &text[inner..];
                        if r.starts_with("(*") {
                            depth += 1;
                            inner += 2;
                        } else if r.starts_with("*)") {
                            depth -= 1;
                            inner += 2;
                            if depth == 0 {
                                closed = true;
                                break;
                            }
                        } else {
                            inner += r.chars().next().expect("char boundary").len_utf8();
                        }
                    }
                    if !closed {
                        return Err(PrepError::UnterminatedComment { offset: open_at });
                    }
                    out.push(' ');
                    pos = inner;
                    continue;
                }
                if c == '"' {
                    state = ScanState::Str { escaped: false };
                } else if c == '\u{2039}' {
                    state = ScanState::Cart(1);
                } else if rest.starts_with("\\<open>") {
                    state = ScanState::Cart(1);
                    out.push_str("\\<open>");
                    pos += "\\<open>".len();
                    continue;
                }
                out.push(c);
                pos += c.len_utf8();
            }
            ScanState::Str { escaped } => {
                if *escaped {
                    *escaped = false;
                } else if c == '\\' {
                    *escaped = true;
                } else if c == '"' {
                    state = ScanState::Normal;
                }
                out.push(c);
                pos += c.len_utf8();
            }
            ScanState::Cart(depth) => {
                if rest.starts_with("\\<open>") {
                    *depth += 1;
                    out.push_str("\\<open>");
                    pos += "\\<open>".len();
                    continue;
                }
                if rest.starts_with("\\<close>") {
                    *depth -= 1;
                    if *depth == 0 {
                        state = ScanState::Normal;
                    }
                    out.push_str("\\<close>");
                    pos += "\\<close>".len();
                    continue;
                }
                if c == '\u{2039}' {
                    *depth += 1;
                } else if c == '\u{203a}' {
                    *depth -= 1;
                    if *depth == 0 {
                        state = ScanState::Normal;
                    }
                }
                out.push(c);
                pos += c.len_utf8();
            }
        }
    }
    Ok(out)
}

/// Collapse space/tab runs outside literals, trim line ends, drop lines that
/// end up empty.
fn collapse_ws(text: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    let mut line = String::new();
    let mut state = ScanState::Normal;
    let mut pos = 0usize;
    while pos < text.len() {
        let rest = &text[pos..];
        let c = rest.chars().next().expect("char boundary");
        match &mut state {
            ScanState::Normal => {
                if c == '\n' {
                    flush_line(&mut lines, &mut line);
                    pos += 1;
                    continue;
                }
                if c == ' ' || c == '\t' {
                    if !line.is_empty() && !line.ends_with(' ') {
                        line.push(' ');
                    }
                    pos += c.len_utf8();
                    continue;
                }
                if c == '"' {
                    state = ScanState::Str { escaped: false };
                } else if c == '\u{2039}' {
                    state = ScanState::Cart(1);
                } else if rest.starts_with("\\<open>") {
                    state = ScanState::Cart(1);
                    line.push_str("\\<open>");
                    pos += "\\<open>".len();
                    continue;
                }
                line.push(c);
                pos += c.len_utf8();
            }
            ScanState::Str { escaped } => {
                if *escaped {
                    *escaped = false;
                } else if c == '\\' {
                    *escaped = true;
                } else if c == '"' {
                    state = ScanState::Normal;
                }
                line.push(c);
                pos += c.len_utf8();
            }
            ScanState::Cart(depth) => {
                if rest.starts_with("\\<open>") {
                    *depth += 1;
                    line.push_str("\\<open>");
                    pos += "\\<open>".len();
                    continue;
                }
                if rest.starts_with("\\<close>") {
                    *depth -= 1;
                    if *depth == 0 {
                        state = ScanState::Normal;
                    }
                    line.push_str("\\<close>");
                    pos += "\\<close>".len();
                    continue;
                }
                if c == '\u{2039}' {
                    *depth += 1;
                } else if c == '\u{203a}' {
                    *depth -= 1;
                    if *depth == 0 {
                        state = ScanState::Normal;
                    }
                }
                line.push(c);
                pos += c.len_utf8();
            }
        }
    }
    flush_line(&mut lines, &mut line);
    lines.join("\n")
}

fn flush_line(lines: &mut Vec<String>, line: &mut String) {
    let trimmed = line.trim_end();
    if !trimmed.is_empty() {
        lines.push(trimmed.to_string());
    }
    line.clear();
}

/// Partition purified records by proof style. Unparseable proofs are routed
/// to the rejects stream with their reason, never silently dropped.
pub fn split_by_style(
    records: Vec<CorpusRecord>,
) -> (Vec<CorpusRecord>, Vec<CorpusRecord>, Vec<RejectedRecord>) {
    let mut isar = Vec::new();
    let mut apply = Vec::new();
    let mut rejects = Vec::new();
    for mut record in records {
        match parse_proof(&record.proof) {
            Ok(script) => {
                record.style = Some(script.style());
                record.steps = Some(script.count_steps());
                match script.style() {
                    ProofStyle::Isar => isar.push(record),
                    ProofStyle::ApplyStyle => apply.push(record),
                }
            }
            Err(e) => rejects.push(RejectedRecord {
                theorem: record.theorem,
                proof: record.proof,
                source_path: record.source_path,
                reason: e.to_string(),
            }),
        }
    }
    (isar, apply, rejects)
}

/// Keep records whose step count lies inside the style's inclusive bounds.
pub fn filter_by_steps(
    records: Vec<CorpusRecord>,
    style: ProofStyle,
    cfg: &PrepConfig,
) -> Vec<CorpusRecord> {
    let (min, max) = match style {
        ProofStyle::ApplyStyle => (cfg.apply_min, cfg.apply_max),
        ProofStyle::Isar => (cfg.isar_min, cfg.isar_max),
    };
    records.into_iter().filter(|r| r.steps.map(|s| s >= min && s <= max).unwrap_or(false)).collect()
}

#[derive(Serialize)]
struct EmitRecord<'a> {
    theorem: &'a str,
    #[serde(rename = "Isabelle_proof")]
    isabelle_proof: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
}

/// Serialize records one object per line, ordered by source path then input
/// order.
pub fn emit_records(
    records: &[CorpusRecord],
    path: &Path,
    cfg: &PrepConfig,
) -> Result<(), PrepError> {
    let mut file = std::fs::File::create(path)?;
    write_records(records, &mut file, cfg)?;
    Ok(())
}

pub fn write_records(
    records: &[CorpusRecord],
    out: &mut dyn Write,
    cfg: &PrepConfig,
) -> Result<(), PrepError> {
    let mut ordered: Vec<&CorpusRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.source_path.cmp(&b.source_path)); // stable: input order breaks ties
    for record in ordered {
        let line = serde_json::to_string(&EmitRecord {
            theorem: &record.theorem,
            isabelle_proof: &record.proof,
            label: cfg.emit_labels.then_some(record.source_path.as_str()),
        })
        .expect("record serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Deterministic hash-based split assignment over percentage buckets (e.g.
/// 95/1/4). Keys hash with SHA-256 so assignment is stable across runs and
/// platforms.
pub fn split_assign(key: &str, percents: &[u8]) -> usize {
    debug_assert_eq!(percents.iter().map(|p| *p as u32).sum::<u32>(), 100);
    let digest = Sha256::digest(key.as_bytes());
    let mut val = [0u8; 8];
    val.copy_from_slice(&digest[..8]);
    let bucket = (u64::from_be_bytes(val) % 100) as u32;
    let mut acc = 0u32;
    for (i, p) in percents.iter().enumerate() {
        acc += *p as u32;
        if bucket < acc {
            return i;
        }
    }
    percents.len() - 1
}

/// Parse input records from a line-delimited object stream.
pub fn read_records(text: &str) -> Result<Vec<CorpusRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Group records by split bucket name.
pub fn split_records<'a>(
    records: &'a [CorpusRecord],
    percents: &[u8],
    names: &[&'static str],
) -> BTreeMap<&'static str, Vec<&'a CorpusRecord>> {
    let mut out: BTreeMap<&'static str, Vec<&CorpusRecord>> = BTreeMap::new();
    for name in names {
        out.entry(name).or_default();
    }
    for r in records {
        let bucket = split_assign(&format!("{}\u{0}{}", r.source_path, r.theorem), percents);
        out.entry(names[bucket.min(names.len() - 1)]).or_default().push(r);
    }
    out
}
