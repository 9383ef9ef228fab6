//! Proof filter: parse the model's structured response envelope and reject
//! syntactically hopeless candidates before any prover time is spent.
//!
//! The wire format is a single JSON object `{"Isabelle_proof": "<proof>"}` —
//! the field name is bit-exact. Rejections are values, not faults.

use serde::{Deserialize, Serialize};

use crate::syntax::{parse_proof_with, ParserConfig};

/// One raw model response within a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelResponse {
    /// Full response text, byte-exact.
    pub raw: String,
    /// 0-based index within the batch.
    pub sample_index: usize,
}

pub const ENVELOPE_FIELD: &str = "Isabelle_proof";

/// Proof-leading keywords accepted by the syntactic gate.
pub const DEFAULT_LEADING_KEYWORDS: &[&str] = &[
    "proof",
    "apply",
    "by",
    "using",
    "unfolding",
    "case",
    "have",
    "show",
    "fix",
    "assume",
    "obtain",
    "then",
    "subgoal",
    "sorry",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    /// The response must be exactly one envelope object.
    #[default]
    Strict,
    /// Additionally scan for the first balanced envelope embedded in prose.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub leading_keywords: Vec<String>,
    pub envelope_mode: EnvelopeMode,
    pub parser: ParserConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            leading_keywords: DEFAULT_LEADING_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            envelope_mode: EnvelopeMode::Strict,
            parser: ParserConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotStructured,
    BadLeadingKeyword,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterVerdict {
    Accepted { proof_text: String },
    Rejected { reason: RejectReason },
}

impl FilterVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, FilterVerdict::Accepted { .. })
    }

    pub fn proof_text(&self) -> Option<&str> {
        match self {
            FilterVerdict::Accepted { proof_text } => Some(proof_text),
            FilterVerdict::Rejected { .. } => None,
        }
    }
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(rename = "Isabelle_proof")]
    isabelle_proof: String,
}

/// Extract the proof text from a response envelope. Strict mode requires the
/// whole input to be exactly one single-field object; lenient mode also scans
/// for the first balanced such object embedded in prose. Escapes inside the
/// string value are unescaped by standard JSON string rules.
pub fn extract_envelope(raw: &str, mode: EnvelopeMode) -> Result<String, RejectReason> {
    if let Some(proof) = parse_exact(raw.trim()) {
        return Ok(proof);
    }
    if mode == EnvelopeMode::Lenient {
        if let Some(proof) = scan_embedded(raw) {
            return Ok(proof);
        }
    }
    Err(RejectReason::NotStructured)
}

fn parse_exact(text: &str) -> Option<String> {
    // Reject objects with extra fields: the format is a single field.
    let value: serde_json::Value = serde_json::from_str(text).ok()?;
    let obj = value.as_object()?;
    if obj.len() != 1 {
        return None;
    }
    let env: Envelope = serde_json::from_value(value).ok()?;
    Some(env.isabelle_proof)
}

/// Scan for the first balanced `{...}` that parses as an envelope.
fn scan_embedded(raw: &str) -> Option<String> {
    let bytes = raw.as_bytes();
    for (start, _) in raw.char_indices().filter(|(_, c)| *c == '{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut i = start;
        while i < bytes.len() {
            let c = bytes[i];
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == b'\\' {
                    escaped = true;
                } else if c == b'"' {
                    in_string = false;
                }
            } else {
                match c {
                    b'"' => in_string = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            if let Some(p) = parse_exact(&raw[start..=i]) {
                                return Some(p);
                            }
                            break;
                        }
                    }
                    _ => {}
                }
            }
            i += 1;
        }
    }
    None
}

/// Accept iff the first token is a configured proof-leading keyword and the
/// text parses as a proof script.
pub fn syntactic_gate(proof_text: &str, cfg: &FilterConfig) -> FilterVerdict {
    let Some(first) = first_word(proof_text) else {
        return FilterVerdict::Rejected { reason: RejectReason::BadLeadingKeyword };
    };
    if !cfg.leading_keywords.iter().any(|k| k == first) {
        return FilterVerdict::Rejected { reason: RejectReason::BadLeadingKeyword };
    }
    match parse_proof_with(proof_text, &cfg.parser) {
        Ok(_) => FilterVerdict::Accepted { proof_text: proof_text.to_string() },
        Err(_) => FilterVerdict::Rejected { reason: RejectReason::ParseFailure },
    }
}

fn first_word(text: &str) -> Option<&str> {
    text.split_whitespace().next()
}

/// Envelope extraction followed by the syntactic gate: Algorithm line 2's
/// per-response proof filter.
pub fn filter_response(response: &ModelResponse, cfg: &FilterConfig) -> FilterVerdict {
    match extract_envelope(&response.raw, cfg.envelope_mode) {
        Ok(proof_text) => syntactic_gate(&proof_text, cfg),
        Err(reason) => FilterVerdict::Rejected { reason },
    }
}

/// Filter a batch element-wise, order-preserving.
pub fn filter_batch(responses: &[ModelResponse], cfg: &FilterConfig) -> Vec<FilterVerdict> {
    responses.iter().map(|r| filter_response(r, cfg)).collect()
}
