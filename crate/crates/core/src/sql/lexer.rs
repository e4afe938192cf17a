use crate::error::{ErrorCode, ProxyError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word; `quoted` is true for backtick identifiers.
    Ident { text: String, quoted: bool },
    /// Unsigned integer digits as written.
    Number(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Star,
    Semicolon,
    Minus,
    Dot,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset in the source.
    pub pos: usize,
}

impl Token {
    /// Case-insensitive keyword match on unquoted words.
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident { text, quoted: false } if text.eq_ignore_ascii_case(kw))
    }
}

fn syntax(pos: usize, msg: impl Into<String>) -> ProxyError {
    ProxyError::new(
        ErrorCode::SyntaxError,
        format!("{} at position {pos}", msg.into()),
    )
}

/// Splits SQL into tokens. String literals accept `''` and MySQL backslash
/// escapes; `--` and `#` comments run to end of line.
pub fn tokenize(sql: &str) -> Result<Vec<Token>, ProxyError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |kind| Token { kind, pos: start };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                tokens.push(single(TokenKind::LParen));
                i += 1;
            }
            b')' => {
                tokens.push(single(TokenKind::RParen));
                i += 1;
            }
            b',' => {
                tokens.push(single(TokenKind::Comma));
                i += 1;
            }
            b'*' => {
                tokens.push(single(TokenKind::Star));
                i += 1;
            }
            b';' => {
                tokens.push(single(TokenKind::Semicolon));
                i += 1;
            }
            b'-' => {
                tokens.push(single(TokenKind::Minus));
                i += 1;
            }
            b'.' => {
                tokens.push(single(TokenKind::Dot));
                i += 1;
            }
            b'=' => {
                tokens.push(single(TokenKind::Eq));
                i += 1;
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                tokens.push(single(TokenKind::NotEq));
                i += 2;
            }
            b'<' => {
                let (kind, len) = match bytes.get(i + 1) {
                    Some(b'=') => (TokenKind::LtEq, 2),
                    Some(b'>') => (TokenKind::NotEq, 2),
                    _ => (TokenKind::Lt, 1),
                };
                tokens.push(single(kind));
                i += len;
            }
            b'>' => {
                let (kind, len) = match bytes.get(i + 1) {
                    Some(b'=') => (TokenKind::GtEq, 2),
                    _ => (TokenKind::Gt, 1),
                };
                tokens.push(single(kind));
                i += len;
            }
            b'\'' | b'"' => {
                let quote = c;
                i += 1;
                let mut out: Vec<u8> = Vec::new();
                loop {
                    let Some(&b) = bytes.get(i) else {
                        return Err(syntax(start, "unterminated string literal"));
                    };
                    if b == quote {
                        if bytes.get(i + 1) == Some(&quote) {
                            out.push(quote);
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    if b == b'\\' {
                        let Some(&e) = bytes.get(i + 1) else {
                            return Err(syntax(start, "unterminated string literal"));
                        };
                        out.push(match e {
                            b'0' => 0,
                            b'n' => b'\n',
                            b'r' => b'\r',
                            b't' => b'\t',
                            b'Z' => 0x1A,
                            b'b' => 0x08,
                            other => other,
                        });
                        i += 2;
                        continue;
                    }
                    out.push(b);
                    i += 1;
                }
                let text = String::from_utf8(out)
                    .map_err(|_| syntax(start, "string literal is not valid UTF-8"))?;
                tokens.push(single(TokenKind::Str(text)));
            }
            b'`' => {
                i += 1;
                let mut out = String::new();
                loop {
                    let rest = &sql[i..];
                    let Some(off) = rest.find('`') else {
                        return Err(syntax(start, "unterminated quoted identifier"));
                    };
                    out.push_str(&rest[..off]);
                    i += off + 1;
                    if bytes.get(i) == Some(&b'`') {
                        out.push('`');
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(single(TokenKind::Ident {
                    text: out,
                    quoted: true,
                }));
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                    return Err(syntax(start, "malformed number"));
                }
                tokens.push(single(TokenKind::Number(sql[start..i].to_owned())));
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
                {
                    i += 1;
                }
                tokens.push(single(TokenKind::Ident {
                    text: sql[start..i].to_owned(),
                    quoted: false,
                }));
            }
            _ => {
                let ch = sql[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character {ch:?}")));
            }
        }
    }
    Ok(tokens)
}
