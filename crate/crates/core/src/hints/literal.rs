//! A restricted literal grammar: quoted strings, signed integers, bracketed
//! lists and braced maps with string keys.
//!
//! ```text
//! value  := string | int | list | map
//! list   := "[" (value ("," value)* ","?)? "]"
//! map    := "{" (string ":" value ("," string ":" value)* ","?)? "}"
//! int    := ("+" | "-")? digit+
//! string := '"' ... '"' | "'" ... "'"      (backslash escapes)
//! ```
//!
//! Whitespace and `#` line comments may appear between tokens. Nothing else is
//! accepted: no floats, booleans, tuples or expressions.

use std::fmt::{self, Write as _};

/// Nesting deeper than this is rejected instead of recursing further.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LiteralValue {
    Str(String),
    Int(i64),
    List(Vec<LiteralValue>),
    /// Entries in source order; keys are unique.
    Map(Vec<(String, LiteralValue)>),
}

impl LiteralValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            LiteralValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            LiteralValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[LiteralValue]> {
        match self {
            LiteralValue::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[(String, LiteralValue)]> {
        match self {
            LiteralValue::Map(m) => Some(m),
            _ => None,
        }
    }

    /// Map lookup by key; `None` for non-maps.
    pub fn get(&self, key: &str) -> Option<&LiteralValue> {
        self.as_map()?.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            LiteralValue::Str(_) => "string",
            LiteralValue::Int(_) => "integer",
            LiteralValue::List(_) => "list",
            LiteralValue::Map(_) => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiteralError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("duplicate map key {0:?}")]
    DuplicateKey(String),
}

fn syntax(position: usize, expected: impl Into<String>) -> LiteralError {
    LiteralError::Syntax {
        position,
        expected: expected.into(),
    }
}

pub fn parse_literal(text: &str) -> Result<LiteralValue, LiteralError> {
    let mut p = Parser {
        src: text.as_bytes(),
        text,
        pos: 0,
    };
    p.skip_trivia();
    let v = p.value(0)?;
    p.skip_trivia();
    if p.pos != p.src.len() {
        return Err(syntax(p.pos, "end of input"));
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            match c {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0c => self.pos += 1,
                b'#' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn value(&mut self, depth: usize) -> Result<LiteralValue, LiteralError> {
        if depth > MAX_DEPTH {
            return Err(syntax(self.pos, format!("nesting depth at most {MAX_DEPTH}")));
        }
        match self.peek() {
            Some(b'"') | Some(b'\'') => self.string().map(LiteralValue::Str),
            Some(b'[') => self.list(depth),
            Some(b'{') => self.map(depth),
            Some(b'-') | Some(b'+') | Some(b'0'..=b'9') => self.int(),
            _ => Err(syntax(self.pos, "string, integer, list or map")),
        }
    }

    fn list(&mut self, depth: usize) -> Result<LiteralValue, LiteralError> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_trivia();
            if self.peek() == Some(b']') {
                self.pos += 1;
                return Ok(LiteralValue::List(items));
            }
            items.push(self.value(depth + 1)?);
            self.skip_trivia();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(LiteralValue::List(items));
                }
                _ => return Err(syntax(self.pos, "',' or ']'")),
            }
        }
    }

    fn map(&mut self, depth: usize) -> Result<LiteralValue, LiteralError> {
        self.pos += 1;
        let mut entries: Vec<(String, LiteralValue)> = Vec::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(LiteralValue::Map(entries));
                }
                Some(b'"') | Some(b'\'') => {}
                _ => return Err(syntax(self.pos, "string key or '}'")),
            }
            let key = self.string()?;
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(LiteralError::DuplicateKey(key));
            }
            self.skip_trivia();
            if self.peek() != Some(b':') {
                return Err(syntax(self.pos, "':'"));
            }
            self.pos += 1;
            self.skip_trivia();
            let v = self.value(depth + 1)?;
            entries.push((key, v));
            self.skip_trivia();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(LiteralValue::Map(entries));
                }
                _ => return Err(syntax(self.pos, "',' or '}'")),
            }
        }
    }

    fn int(&mut self) -> Result<LiteralValue, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        let digits = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(syntax(self.pos, "digit"));
        }
        // reject 1.5, 1e3, 0x10, 1_000 and similar at the point of divergence
        if matches!(self.peek(), Some(c) if c == b'.' || c == b'_' || c.is_ascii_alphabetic()) {
            return Err(syntax(self.pos, "end of integer"));
        }
        self.text[start..self.pos]
            .parse::<i64>()
            .map(LiteralValue::Int)
            .map_err(|_| syntax(start, "integer within 64-bit range"))
    }

    fn hex_escape(&mut self, len: usize) -> Result<char, LiteralError> {
        let start = self.pos;
        let end = start + len;
        let digits = self
            .text
            .get(start..end)
            .filter(|d| d.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| syntax(start, format!("{len} hex digits")))?;
        let code = u32::from_str_radix(digits, 16).expect("validated hex digits");
        self.pos = end;
        char::from_u32(code).ok_or_else(|| syntax(start, "valid unicode scalar value"))
    }

    fn string(&mut self) -> Result<String, LiteralError> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let Some(c) = rest.chars().next() else {
                return Err(syntax(self.pos, "closing quote"));
            };
            match c {
                '\n' | '\r' => return Err(syntax(self.pos, "closing quote before end of line")),
                '\\' => {
                    self.pos += 1;
                    let Some(e) = self.text[self.pos..].chars().next() else {
                        return Err(syntax(self.pos, "escape sequence"));
                    };
                    self.pos += e.len_utf8();
                    match e {
                        '\\' => out.push('\\'),
                        '\'' => out.push('\''),
                        '"' => out.push('"'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'a' => out.push('\x07'),
                        'b' => out.push('\x08'),
                        'f' => out.push('\x0c'),
                        'v' => out.push('\x0b'),
                        '0' => out.push('\0'),
                        'x' => out.push(self.hex_escape(2)?),
                        'u' => out.push(self.hex_escape(4)?),
                        'U' => out.push(self.hex_escape(8)?),
                        '\n' => {}
                        other => {
                            // unrecognized escapes keep the backslash
                            out.push('\\');
                            out.push(other);
                        }
                    }
                }
                c if c as u32 == quote as u32 => {
                    self.pos += 1;
                    return Ok(out);
                }
                c => {
                    out.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }
}

/// Appends `s` as a double-quoted literal. Control characters, `<` and `>`
/// are hex-escaped so the output never contains a raw block tag.
pub fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '<' | '>' => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Compact canonical rendering: `[a, b]`, `{"k": v}`.
pub fn to_literal_string(v: &LiteralValue) -> String {
    let mut out = String::new();
    write_compact(&mut out, v);
    out
}

fn write_compact(out: &mut String, v: &LiteralValue) {
    match v {
        LiteralValue::Str(s) => write_string(out, s),
        LiteralValue::Int(i) => {
            let _ = write!(out, "{i}");
        }
        LiteralValue::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_compact(out, item);
            }
            out.push(']');
        }
        LiteralValue::Map(entries) => {
            out.push('{');
            for (i, (k, item)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(out, k);
                out.push_str(": ");
                write_compact(out, item);
            }
            out.push('}');
        }
    }
}

impl fmt::Display for LiteralValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_literal_string(self))
    }
}
