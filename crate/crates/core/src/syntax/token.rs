//! Tokenizer for the proof-script subset.
//!
//! Produces a flat token stream: words, quoted strings, cartouches, and the
//! four grouping delimiters. Comments `(* ... *)` (nested) are trivia and are
//! skipped. Quoted strings and cartouches are kept as single opaque tokens so
//! that proposition payloads are never inspected.

use super::parse::ParseError;
use super::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Quoted,
    Cartouche,
    LParen,
    RParen,
    LBracket,
    RBracket,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: SourceSpan,
}

impl Token {
    pub fn is_word(&self, w: &str) -> bool {
        self.kind == TokenKind::Word && self.text == w
    }
}

const OPEN_CART: &str = "\\<open>";
const CLOSE_CART: &str = "\\<close>";

/// Tokenize `src`, skipping whitespace and comments.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut line = 1u32;
    let bytes = src.as_bytes();

    while pos < src.len() {
        let rest = &src[pos..];
        let c = rest.chars().next().expect("pos at char boundary");

        if c == '\n' {
            line += 1;
            pos += 1;
            continue;
        }
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        if rest.starts_with("(*") {
            let (next, nl) = skip_comment(src, pos)?;
            pos = next;
            line += nl;
            continue;
        }
        match c {
            '(' | ')' | '[' | ']' => {
                let kind = match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '[' => TokenKind::LBracket,
                    _ => TokenKind::RBracket,
                };
                out.push(Token {
                    kind,
                    text: c.to_string(),
                    span: SourceSpan::new(pos, pos + 1, line),
                });
                pos += 1;
            }
            '"' => {
                let (next, nl) = scan_quoted(src, pos)?;
                out.push(Token {
                    kind: TokenKind::Quoted,
                    text: src[pos..next].to_string(),
                    span: SourceSpan::new(pos, next, line),
                });
                pos = next;
                line += nl;
            }
            _ if c == '\u{2039}' || rest.starts_with(OPEN_CART) => {
                let (next, nl) = scan_cartouche(src, pos)?;
                out.push(Token {
                    kind: TokenKind::Cartouche,
                    text: src[pos..next].to_string(),
                    span: SourceSpan::new(pos, next, line),
                });
                pos = next;
                line += nl;
            }
            '\u{203a}' => {
                return Err(ParseError::UnterminatedDelimiter {
                    what: "cartouche",
                    span: SourceSpan::new(pos, pos + c.len_utf8(), line),
                });
            }
            _ => {
                let start = pos;
                let mut end = pos;
                while end < src.len() {
                    let r = &src[end..];
                    let ch = r.chars().next().expect("char boundary");
                    if ch.is_whitespace()
                        || matches!(ch, '(' | ')' | '[' | ']' | '"' | '\u{2039}' | '\u{203a}')
                        || r.starts_with(OPEN_CART)
                        || r.starts_with(CLOSE_CART)
                    {
                        break;
                    }
                    end += ch.len_utf8();
                }
                debug_assert!(end > start, "word scan must make progress");
                out.push(Token {
                    kind: TokenKind::Word,
                    text: src[start..end].to_string(),
                    span: SourceSpan::new(start, end, line),
                });
                pos = end;
            }
        }
        let _ = bytes;
    }
    Ok(out)
}

/// Token texts of `src`; the normalized form used for token-equivalence checks.
pub fn token_texts(src: &str) -> Result<Vec<String>, ParseError> {
    Ok(tokenize(src)?.into_iter().map(|t| t.text).collect())
}

fn skip_comment(src: &str, start: usize) -> Result<(usize, u32), ParseError> {
    let mut depth = 0usize;
    let mut pos = start;
    let mut lines = 0u32;
    let start_line = 0; // span line filled by caller context; keep offset only
    let _ = start_line;
    while pos < src.len() {
        let rest = &src[pos..];
        if rest.starts_with("(*") {
            depth += 1;
            pos += 2;
        } else if rest.starts_with("*)") {
            depth -= 1;
            pos += 2;
            if depth == 0 {
                return Ok((pos, lines));
            }
        } else {
            let c = rest.chars().next().expect("char boundary");
            if c == '\n' {
                lines += 1;
            }
            pos += c.len_utf8();
        }
    }
    Err(ParseError::UnterminatedDelimiter {
        what: "comment",
        span: SourceSpan::new(start, src.len(), 1),
    })
}

fn scan_quoted(src: &str, start: usize) -> Result<(usize, u32), ParseError> {
    let mut pos = start + 1;
    let mut lines = 0u32;
    let mut escaped = false;
    while pos < src.len() {
        let c = src[pos..].chars().next().expect("char boundary");
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            return Ok((pos + 1, lines));
        } else if c == '\n' {
            lines += 1;
        }
        pos += c.len_utf8();
    }
    Err(ParseError::UnterminatedDelimiter {
        what: "string literal",
        span: SourceSpan::new(start, src.len(), 1),
    })
}

fn scan_cartouche(src: &str, start: usize) -> Result<(usize, u32), ParseError> {
    let mut depth = 0usize;
    let mut pos = start;
    let mut lines = 0u32;
    while pos < src.len() {
        let rest = &src[pos..];
        if rest.starts_with(OPEN_CART) {
            depth += 1;
            pos += OPEN_CART.len();
        } else if rest.starts_with(CLOSE_CART) {
            depth -= 1;
            pos += CLOSE_CART.len();
            if depth == 0 {
                return Ok((pos, lines));
            }
        } else {
            let c = rest.chars().next().expect("char boundary");
            if c == '\u{2039}' {
                depth += 1;
            } else if c == '\u{203a}' {
                depth -= 1;
                if depth == 0 {
                    return Ok((pos + c.len_utf8(), lines));
                }
            } else if c == '\n' {
                lines += 1;
            }
            pos += c.len_utf8();
        }
    }
    Err(ParseError::UnterminatedDelimiter {
        what: "cartouche",
        span: SourceSpan::new(start, src.len(), 1),
    })
}

/// Join token texts with single spaces, omitting the space after opening and
/// before closing delimiters so that `( induction xs )` prints as
/// `(induction xs)`.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let glue = !out.is_empty()
            && !out.ends_with(['(', '['])
            && !matches!(tok.kind, TokenKind::RParen | TokenKind::RBracket);
        if glue {
            out.push(' ');
        }
        out.push_str(&tok.text);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_and_groups() {
        let toks = token_texts("apply (induction xs)").unwrap();
        assert_eq!(toks, vec!["apply", "(", "induction", "xs", ")"]);
    }

    #[test]
    fn quoted_is_one_token() {
        let toks = token_texts("show \"rev (rev xs) = xs\"").unwrap();
        assert_eq!(toks, vec!["show", "\"rev (rev xs) = xs\""]);
    }

    #[test]
    fn comments_are_trivia() {
        let toks = token_texts("by simp (* trivial (* nested *) *)").unwrap();
        assert_eq!(toks, vec!["by", "simp"]);
    }

    #[test]
    fn cartouche_forms() {
        let toks = token_texts("have \u{2039}x = x\u{203a}").unwrap();
        assert_eq!(toks, vec!["have", "\u{2039}x = x\u{203a}"]);
        let toks = token_texts("have \\<open>x = x\\<close>").unwrap();
        assert_eq!(toks, vec!["have", "\\<open>x = x\\<close>"]);
    }

    #[test]
    fn unterminated_quote_is_an_error() {
        assert!(tokenize("show \"oops").is_err());
    }

    #[test]
    fn join_tokens_tightens_delimiters() {
        let toks = tokenize("( rule foo [ of x ] )").unwrap();
        assert_eq!(join_tokens(&toks), "(rule foo [of x])");
    }

    #[test]
    fn line_numbers_advance() {
        let toks = tokenize("apply auto\ndone").unwrap();
        assert_eq!(toks[2].span.line, 2);
    }
}
