//! Forgiving JSON reader for model output.
//!
//! Accepts what strict JSON rejects but models (and copy-pasted listings)
//! produce: raw line breaks inside strings, strings cut off at end of line,
//! missing or trailing commas, unclosed containers and prose around the
//! payload. Every repair is reported as a warning.

use serde_json::{Map, Number, Value};

use super::Warning;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Array,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LenientError {
    /// No `[` or `{` anywhere in the text.
    NoPayload,
    /// The first structural character opens the other container kind.
    WrongShape { expected: Shape, found: Shape },
}

#[derive(Debug)]
pub struct Lenient {
    pub value: Value,
    /// Byte offset where the payload starts; text before it is prose.
    pub start: usize,
    pub warnings: Vec<Warning>,
}

/// Finds the first `[` or `{`, parses one value from there and reports any
/// repairs. Trailing prose after the value is ignored with a warning.
pub fn parse_lenient(text: &str, expected: Shape) -> Result<Lenient, LenientError> {
    let start = text.find(['[', '{']).ok_or(LenientError::NoPayload)?;
    let found = if text.as_bytes()[start] == b'[' { Shape::Array } else { Shape::Object };
    if found != expected {
        return Err(LenientError::WrongShape { expected, found });
    }
    let mut p = Parser {
        src: text,
        chars: text[start..].char_indices().map(|(i, c)| (i + start, c)).collect(),
        pos: 0,
        warnings: Vec::new(),
    };
    if start > 0 && !text[..start].trim().is_empty() {
        p.warn_at(start, "skipped prose before structured payload");
    }
    let value = p.value();
    p.skip_ws();
    if p.pos < p.chars.len() {
        let at = p.offset();
        p.warn_at(at, "ignored trailing text after structured payload");
    }
    Ok(Lenient {
        value,
        start,
        warnings: p.warnings,
    })
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    warnings: Vec<Warning>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map(|&(i, _)| i).unwrap_or(self.src.len())
    }

    fn line_of(&self, offset: usize) -> usize {
        self.src[..offset.min(self.src.len())].matches('\n').count() + 1
    }

    fn warn_at(&mut self, offset: usize, msg: impl Into<String>) {
        let line = self.line_of(offset);
        self.warnings.push(Warning::new(Some(line), msg));
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let at = self.offset();
        self.warn_at(at, msg);
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn next_non_ws(&self, from: usize) -> Option<char> {
        self.chars[from..].iter().map(|&(_, c)| c).find(|c| !c.is_whitespace())
    }

    fn value(&mut self) -> Value {
        self.skip_ws();
        match self.peek() {
            Some('[') => self.array(),
            Some('{') => self.object(),
            Some('"') => Value::String(self.string()),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() => self.number(),
            Some(_) => self.bare_word(),
            None => {
                self.warn("unexpected end of input; substituted null");
                Value::Null
            }
        }
    }

    fn array(&mut self) -> Value {
        self.pos += 1;
        let mut items = Vec::new();
        let mut expect_value = true;
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    self.warn("unclosed array");
                    break;
                }
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                Some(',') => {
                    if expect_value {
                        self.warn("empty array slot skipped");
                    }
                    self.pos += 1;
                    expect_value = true;
                }
                Some('}') => {
                    self.warn("stray '}' inside array skipped");
                    self.pos += 1;
                }
                Some(_) => {
                    if !expect_value {
                        self.warn("missing ',' between array items");
                    }
                    items.push(self.value());
                    expect_value = false;
                }
            }
        }
        Value::Array(items)
    }

    fn object(&mut self) -> Value {
        self.pos += 1;
        let mut map = Map::new();
        let mut expect_key = true;
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    self.warn("unclosed object");
                    break;
                }
                Some('}') => {
                    self.pos += 1;
                    break;
                }
                Some(',') => {
                    self.pos += 1;
                    expect_key = true;
                }
                Some('{') | Some(']') => {
                    // A truncated entry: the next container starts before
                    // this one closed.
                    self.warn("object closed implicitly");
                    break;
                }
                Some(c) => {
                    if !expect_key {
                        self.warn("missing ',' between object members");
                    }
                    let key = if c == '"' {
                        self.string()
                    } else {
                        self.warn("unquoted object key");
                        self.bare_key()
                    };
                    self.skip_ws();
                    if self.peek() == Some(':') {
                        self.pos += 1;
                    } else {
                        self.warn(format!("missing ':' after key {key:?}"));
                    }
                    let v = self.value();
                    if map.insert(key.clone(), v).is_some() {
                        self.warn(format!("duplicate key {key:?}; kept the last value"));
                    }
                    expect_key = false;
                }
            }
        }
        Value::Object(map)
    }

    fn bare_key(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == ':' || c == ',' || c == '}' || c.is_whitespace() {
                break;
            }
            out.push(c);
            self.pos += 1;
        }
        out
    }

    /// Reads a quoted string. Raw line breaks fold into one space together
    /// with the surrounding indentation; a line break followed by a
    /// structural character ends the string as truncated.
    fn string(&mut self) -> String {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                self.warn("unterminated string at end of input");
                return out;
            };
            match c {
                '"' => {
                    self.pos += 1;
                    return out;
                }
                '\\' => {
                    self.pos += 1;
                    self.escape(&mut out);
                }
                '\n' | '\r' => {
                    if matches!(self.next_non_ws(self.pos), Some('{' | '}' | ']') | None) {
                        self.warn("string truncated at line end; closed");
                        return out.trim_end().to_string();
                    }
                    while out.ends_with([' ', '\t']) {
                        out.pop();
                    }
                    self.skip_ws();
                    out.push(' ');
                }
                c if c.is_control() => {
                    self.pos += 1;
                    out.push(' ');
                }
                c => {
                    self.pos += 1;
                    out.push(c);
                }
            }
        }
    }

    fn escape(&mut self, out: &mut String) {
        let Some(c) = self.peek() else {
            return;
        };
        self.pos += 1;
        match c {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'b' => out.push('\u{8}'),
            'f' => out.push('\u{c}'),
            'u' => {
                let hi = self.hex4();
                match hi {
                    Some(h) if (0xD800..0xDC00).contains(&h) => {
                        let save = self.pos;
                        let lo = if self.peek() == Some('\\') {
                            self.pos += 1;
                            if self.peek() == Some('u') {
                                self.pos += 1;
                                self.hex4()
                            } else {
                                None
                            }
                        } else {
                            None
                        };
                        match lo {
                            Some(l) if (0xDC00..0xE000).contains(&l) => {
                                let cp = 0x10000 + ((h - 0xD800) << 10) + (l - 0xDC00);
                                out.push(char::from_u32(cp).unwrap_or('\u{FFFD}'));
                            }
                            _ => {
                                self.pos = save;
                                out.push('\u{FFFD}');
                            }
                        }
                    }
                    Some(h) => out.push(char::from_u32(h).unwrap_or('\u{FFFD}')),
                    None => {
                        self.warn("bad \\u escape");
                        out.push('\u{FFFD}');
                    }
                }
            }
            other => out.push(other),
        }
    }

    fn hex4(&mut self) -> Option<u32> {
        let mut v = 0u32;
        for _ in 0..4 {
            let d = self.peek()?.to_digit(16)?;
            self.pos += 1;
            v = v * 16 + d;
        }
        Some(v)
    }

    fn number(&mut self) -> Value {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || "+-.eE".contains(c)) {
            self.pos += 1;
        }
        let raw: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        let cleaned = raw.strip_prefix('+').unwrap_or(&raw);
        if let Ok(i) = cleaned.parse::<i64>() {
            return Value::Number(Number::from(i));
        }
        if let Some(n) = cleaned.parse::<f64>().ok().and_then(Number::from_f64) {
            return Value::Number(n);
        }
        self.warn(format!("unparseable number {raw:?} kept as string"));
        Value::String(raw)
    }

    fn bare_word(&mut self) -> Value {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if self.pos == start {
            let c = self.peek().unwrap_or(' ');
            self.warn(format!("unexpected character {c:?} skipped"));
            self.pos += 1;
            return Value::Null;
        }
        let word: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        match word.as_str() {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "null" => Value::Null,
            _ => {
                self.warn(format!("bare word {word:?} read as string"));
                Value::String(word)
            }
        }
    }
}
