//! Turning raw model responses into typed domain objects.
//!
//! Every parser is total: it returns a value with warnings or a typed error.
//! Lines and entries that cannot be used are reported, never fatal, as long
//! as at least one element survives.

mod graph;
pub mod json;
mod stack;
mod summary;

use std::fmt;

use thiserror::Error;

pub use graph::{parse_graph_json, parse_graph_lines, serialize_graph_json, serialize_graph_lines};
pub use stack::{parse_stack_json, parse_stack_text, render_stack_text, serialize_stack_json};
pub use summary::{parse_text_summary_json, serialize_text_summary_json};

use crate::prompt::{EOS, INST_CLOSE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    /// 1-based line (text parsers) or element index (structured parsers).
    pub position: Option<usize>,
    pub message: String,
}

impl Warning {
    pub fn new(position: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(p) => write!(f, "@{p}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
    pub rejected_lines: Vec<String>,
}

impl<T> ParseReport<T> {
    pub fn new(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
            rejected_lines: Vec::new(),
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> ParseReport<U> {
        ParseReport {
            value: f(self.value),
            warnings: self.warnings,
            rejected_lines: self.rejected_lines,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("response does not contain the [/INST] marker")]
    MarkerMissing,
    #[error("no triples found")]
    NoTriplesFound,
    #[error("expected a top-level array")]
    NotAnArray,
    #[error("expected a top-level object")]
    NotAnObject,
    #[error("object {0} is missing required keys")]
    ObjectMissingKeys(usize),
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("missing section {0:?}")]
    MissingSection(String),
    #[error("malformed trend entry at {0}")]
    MalformedTrendEntry(usize),
    #[error("no usable entries found")]
    NoEntries,
}

/// Returns the text after the first `[/INST]`, trimmed, without a trailing
/// `</s>`. An empty tail is returned with a warning rather than an error.
pub fn extract_response(full_generation: &str) -> Result<ParseReport<String>, ParseError> {
    let (_, tail) = full_generation
        .split_once(INST_CLOSE)
        .ok_or(ParseError::MarkerMissing)?;
    let mut text = tail.trim();
    if let Some(stripped) = text.strip_suffix(EOS) {
        text = stripped.trim_end();
    }
    let mut report = ParseReport::new(text.to_string());
    if text.is_empty() {
        report.warnings.push(Warning::new(None, "EmptyResponse: nothing after [/INST]"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_after_marker() {
        let r = extract_response("<s>[INST] q [/INST] hello </s>").unwrap();
        assert_eq!(r.value, "hello");
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn extract_empty_tail_warns() {
        let r = extract_response("[/INST]").unwrap();
        assert_eq!(r.value, "");
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].message.contains("EmptyResponse"));
    }

    #[test]
    fn extract_missing_marker() {
        assert_eq!(extract_response("no marker"), Err(ParseError::MarkerMissing));
    }

    #[test]
    fn extract_keeps_second_marker() {
        let r = extract_response("a [/INST] b [/INST] c").unwrap();
        assert_eq!(r.value, "b [/INST] c");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn extract_matches_split_oracle(head in "[a-z \\n]{0,20}", tail in "[a-z \\[\\]/INST\\n]{0,40}") {
                let text = format!("{head}[/INST]{tail}");
                let oracle = text.splitn(2, "[/INST]").nth(1).unwrap().trim();
                let oracle = oracle.strip_suffix("</s>").map(str::trim_end).unwrap_or(oracle);
                prop_assert_eq!(extract_response(&text).unwrap().value, oracle);
            }
        }
    }
}
