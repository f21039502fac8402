use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::json::{parse_lenient, Shape};
use super::{ParseError, ParseReport, Warning};
use crate::model::{collapse_whitespace, StackReport, StackSource, TrendEntry};

const UPWARD: &str = "Upward trend:";
const DOWNWARD: &str = "Downward trend:";
const CONTRADICTORY: &str = "Contradictory trend:";
const CONCLUSION: &str = "Conclusion:";
const LABELS: [&str; 4] = [UPWARD, DOWNWARD, CONTRADICTORY, CONCLUSION];

const JSON_TRENDS: [&str; 3] = ["upward_trend", "downward_trend", "contradictory_trend"];

/// Parses a sectioned stacking summary (`Upward trend:` ... `Conclusion:`)
/// into a level-2 report for the given channel.
///
/// Labels are matched case-sensitively at the start of a line; the first
/// occurrence of each wins. Entries within a trend section are separated by
/// `;` (or by `,` after a closing parenthesis when no `;` is present).
pub fn parse_stack_text(text: &str, source: StackSource) -> Result<ParseReport<StackReport>, ParseError> {
    let mut warnings = Vec::new();
    let mut rejected = Vec::new();

    // (label index, line number, byte offset of line start, offset of body start)
    let mut marks: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut offset = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let lead = line.len() - line.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '#').len();
        let rest = &line[lead..];
        if let Some(label) = LABELS.iter().position(|l| rest.starts_with(l)) {
            let mut body = offset + lead + LABELS[label].len();
            if text[body..].starts_with("**") {
                body += 2;
            }
            marks.push((label, idx + 1, offset, body));
        }
        offset += line.len();
    }

    let mut sections: [Option<String>; 4] = [None, None, None, None];
    for (i, &(label, line_no, _, body)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map(|m| m.2).unwrap_or(text.len());
        if sections[label].is_some() {
            warnings.push(Warning::new(
                Some(line_no),
                format!("repeated section {:?}; first occurrence kept", LABELS[label]),
            ));
            rejected.push(text[marks[i].2..end].trim_end().to_string());
            continue;
        }
        sections[label] = Some(text[body..end].to_string());
    }

    let conclusion = sections[3]
        .as_deref()
        .map(collapse_whitespace)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| ParseError::MissingSection("Conclusion".into()))?;

    let mut lists: [Vec<TrendEntry>; 3] = Default::default();
    for (slot, list) in lists.iter_mut().enumerate() {
        match &sections[slot] {
            Some(body) => *list = trend_entries(body, LABELS[slot], &mut warnings),
            None => warnings.push(Warning::new(None, format!("section {:?} absent", LABELS[slot]))),
        }
    }
    let [upward, downward, contradictory] = lists;
    let report = StackReport::new(2, source, upward, downward, contradictory, conclusion)
        .map_err(|_| ParseError::MissingSection("Conclusion".into()))?;
    Ok(ParseReport {
        value: report,
        warnings,
        rejected_lines: rejected,
    })
}

fn trend_entries(body: &str, label: &str, warnings: &mut Vec<Warning>) -> Vec<TrendEntry> {
    let body = collapse_whitespace(body);
    if body.is_empty() {
        warnings.push(Warning::new(None, format!("section {label:?} is empty")));
        return Vec::new();
    }
    if body.to_lowercase().starts_with("none") {
        return Vec::new();
    }
    let mut out = Vec::new();
    for raw in split_entries(&body) {
        let entry = raw.trim().trim_end_matches(['.', ';', ',']).trim();
        if entry.is_empty() {
            continue;
        }
        match split_entry(entry) {
            Some((entity, rationale)) => out.push(TrendEntry::new(entity, rationale)),
            None => {
                warnings.push(Warning::new(
                    None,
                    format!("{label} entry {entry:?} has no rationale separator"),
                ));
                out.push(TrendEntry::new(entry, ""));
            }
        }
    }
    out
}

/// Splits on `;` at parenthesis depth 0; without any such `;`, splits on
/// `,` that directly follows a closing parenthesis.
fn split_entries(body: &str) -> Vec<&str> {
    let mut semis = Vec::new();
    let mut paren_commas = Vec::new();
    let mut depth = 0i32;
    let mut last_sig = ' ';
    for (i, c) in body.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = (depth - 1).max(0),
            ';' if depth == 0 => semis.push(i),
            ',' if depth == 0 && last_sig == ')' => paren_commas.push(i),
            _ => {}
        }
        if !c.is_whitespace() {
            last_sig = c;
        }
    }
    let cuts = if semis.is_empty() { paren_commas } else { semis };
    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts {
        out.push(&body[start..cut]);
        start = cut + 1;
    }
    out.push(&body[start..]);
    out
}

/// Entity ends at the first depth-0 dash separator or colon; failing that,
/// at the first `(` with the parenthesised text as rationale.
fn split_entry(entry: &str) -> Option<(String, String)> {
    let mut depth = 0i32;
    let chars: Vec<(usize, char)> = entry.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        match c {
            '(' => depth += 1,
            ')' => depth = (depth - 1).max(0),
            _ if depth > 0 => {}
            ':' => return pair(&entry[..i], &entry[i + 1..]),
            '—' | '–' => return pair(&entry[..i], &entry[i + c.len_utf8()..]),
            '-' => {
                let spaced_before = k > 0 && chars[k - 1].1 == ' ';
                let spaced_after = chars.get(k + 1).is_some_and(|&(_, n)| n == ' ');
                if spaced_before && spaced_after {
                    return pair(&entry[..i], &entry[i + 1..]);
                }
            }
            _ => {}
        }
    }
    let open = entry.find('(')?;
    let inner = entry[open..].trim();
    let inner = match inner.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        Some(s) => s,
        None => inner,
    };
    pair(&entry[..open], inner)
}

fn pair(entity: &str, rationale: &str) -> Option<(String, String)> {
    let entity = collapse_whitespace(entity);
    if entity.is_empty() {
        return None;
    }
    Some((entity, rationale.trim().to_string()))
}

/// Parses the merged level-3 report object.
pub fn parse_stack_json(text: &str) -> Result<ParseReport<StackReport>, ParseError> {
    let lenient = parse_lenient(text, Shape::Object).map_err(|_| ParseError::NotAnObject)?;
    let Value::Object(map) = lenient.value else {
        return Err(ParseError::NotAnObject);
    };
    let mut warnings = lenient.warnings;

    for key in map.keys() {
        if key != "conclusion" && !JSON_TRENDS.contains(&key.as_str()) {
            warnings.push(Warning::new(None, format!("unknown key {key:?} ignored")));
        }
    }
    let conclusion = match map.get("conclusion") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        _ => return Err(ParseError::MissingKey("conclusion".into())),
    };

    let mut lists: [Vec<TrendEntry>; 3] = Default::default();
    for (slot, key) in JSON_TRENDS.iter().enumerate() {
        match map.get(*key) {
            None | Some(Value::Null) => {
                warnings.push(Warning::new(None, format!("key {key:?} absent; treated as empty")));
            }
            Some(Value::Array(items)) => {
                for (pos, item) in items.iter().enumerate() {
                    match item {
                        Value::Object(obj) if !obj.is_empty() => {
                            if obj.len() > 1 {
                                warnings.push(Warning::new(
                                    Some(pos),
                                    format!("{key} entry has {} keys; each kept as an entry", obj.len()),
                                ));
                            }
                            for (entity, rationale) in obj {
                                let entity = collapse_whitespace(entity);
                                if entity.is_empty() {
                                    warnings.push(Warning::new(Some(pos), format!("{key} entry with empty entity")));
                                    continue;
                                }
                                let rationale = match rationale {
                                    Value::String(s) => s.trim().to_string(),
                                    Value::Null => String::new(),
                                    other => other.to_string(),
                                };
                                lists[slot].push(TrendEntry::new(entity, rationale));
                            }
                        }
                        Value::String(s) if !s.trim().is_empty() => {
                            warnings.push(Warning::new(Some(pos), format!("{key} entry is a bare string")));
                            lists[slot].push(TrendEntry::new(collapse_whitespace(s), ""));
                        }
                        _ => warnings.push(Warning::new(Some(pos), format!("{key} entry skipped: not an object"))),
                    }
                }
            }
            Some(Value::String(s)) if s.trim().to_lowercase().starts_with("none") => {}
            Some(_) => return Err(ParseError::MalformedTrendEntry(slot)),
        }
    }
    let [upward, downward, contradictory] = lists;
    let report = StackReport::new(3, StackSource::Merged, upward, downward, contradictory, conclusion)
        .map_err(|_| ParseError::MissingKey("conclusion".into()))?;
    Ok(ParseReport {
        value: report,
        warnings,
        rejected_lines: Vec::new(),
    })
}

fn json_entries(list: &[TrendEntry]) -> Vec<BTreeMap<&str, &str>> {
    list.iter()
        .map(|e| BTreeMap::from([(e.entity.as_str(), e.rationale.as_str())]))
        .collect()
}

#[derive(Serialize)]
struct StackJson<'a> {
    upward_trend: Vec<BTreeMap<&'a str, &'a str>>,
    downward_trend: Vec<BTreeMap<&'a str, &'a str>>,
    contradictory_trend: Vec<BTreeMap<&'a str, &'a str>>,
    conclusion: &'a str,
}

pub fn serialize_stack_json(report: &StackReport) -> String {
    let out = StackJson {
        upward_trend: json_entries(&report.upward),
        downward_trend: json_entries(&report.downward),
        contradictory_trend: json_entries(&report.contradictory),
        conclusion: &report.conclusion,
    };
    serde_json::to_string_pretty(&out).expect("stack report serializes")
}

/// Sectioned plain-text rendering, one entity per line. Empty sections read
/// `None identified`.
pub fn render_stack_text(report: &StackReport) -> String {
    let mut out = String::new();
    for (label, list) in [
        (UPWARD, &report.upward),
        (DOWNWARD, &report.downward),
        (CONTRADICTORY, &report.contradictory),
    ] {
        out.push_str(label);
        out.push('\n');
        if list.is_empty() {
            out.push_str("None identified\n");
        }
        for (i, e) in list.iter().enumerate() {
            out.push_str(&e.entity);
            if !e.rationale.is_empty() {
                out.push_str(" - ");
                out.push_str(&e.rationale);
            }
            if i + 1 < list.len() {
                out.push(';');
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str(CONCLUSION);
    out.push('\n');
    out.push_str(&report.conclusion);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entities(list: &[TrendEntry]) -> Vec<&str> {
        list.iter().map(|e| e.entity.as_str()).collect()
    }

    #[test]
    fn minimal_document() {
        let r = parse_stack_text("Conclusion: X", StackSource::GraphList).unwrap();
        assert_eq!(r.value.conclusion, "X");
        assert!(r.value.upward.is_empty() && r.value.downward.is_empty() && r.value.contradictory.is_empty());
        assert_eq!(r.warnings.len(), 3);
    }

    #[test]
    fn conclusion_required() {
        assert_eq!(
            parse_stack_text("Upward trend: Bitcoin - up", StackSource::TextList),
            Err(ParseError::MissingSection("Conclusion".into()))
        );
        assert_eq!(
            parse_stack_text("Conclusion:   \n", StackSource::TextList),
            Err(ParseError::MissingSection("Conclusion".into()))
        );
    }

    #[test]
    fn entry_grammars() {
        let text = "Upward trend: Bitcoin (BTC) - up a lot; Ethereum (ETH): steady, strong; XRP\n\
                    Downward trend: Dogecoin (meme fatigue, outflows), Crypto in general (macro).\n\
                    Contradictory trend: None identified—nothing.\n\
                    Conclusion: fine";
        let r = parse_stack_text(text, StackSource::TextList).unwrap().value;
        assert_eq!(entities(&r.upward), ["Bitcoin (BTC)", "Ethereum (ETH)", "XRP"]);
        assert_eq!(r.upward[0].rationale, "up a lot");
        assert_eq!(r.upward[1].rationale, "steady, strong");
        assert_eq!(r.upward[2].rationale, "");
        assert_eq!(entities(&r.downward), ["Dogecoin", "Crypto in general"]);
        assert_eq!(r.downward[0].rationale, "meme fatigue, outflows");
        assert!(r.contradictory.is_empty());
    }

    #[test]
    fn markdown_labels() {
        let r = parse_stack_text("**Upward trend:** Solana - fast\n**Conclusion:** ok", StackSource::GraphList).unwrap();
        assert_eq!(entities(&r.value.upward), ["Solana"]);
        assert_eq!(r.value.conclusion, "ok");
    }

    #[test]
    fn rendered_text_reparses() {
        let report = StackReport::new(
            2,
            StackSource::GraphList,
            vec![TrendEntry::new("Bitcoin", "ETF inflows"), TrendEntry::new("Solana (SOL)", "tokenized stocks")],
            vec![],
            vec![TrendEntry::new("Ethereum", "")],
            "Mixed.",
        )
        .unwrap();
        let text = render_stack_text(&report);
        assert!(text.find("Upward trend:").unwrap() < text.find("Conclusion:").unwrap());
        assert!(text.contains("Downward trend:\nNone identified\n"));
        assert_eq!(parse_stack_text(&text, StackSource::GraphList).unwrap().value, report);
    }

    #[test]
    fn json_empty_report() {
        let r = parse_stack_json(r#"{"upward_trend":[],"downward_trend":[],"contradictory_trend":[],"conclusion":"x"}"#).unwrap();
        assert!(r.value.upward.is_empty() && r.value.downward.is_empty() && r.value.contradictory.is_empty());
        assert_eq!(r.value.level, 3);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn json_errors() {
        assert_eq!(parse_stack_json(r#"{"upward_trend":[]}"#), Err(ParseError::MissingKey("conclusion".into())));
        assert_eq!(parse_stack_json("[1]"), Err(ParseError::NotAnObject));
        assert_eq!(
            parse_stack_json(r#"{"upward_trend":42,"conclusion":"x"}"#),
            Err(ParseError::MalformedTrendEntry(0))
        );
    }

    #[test]
    fn json_unknown_keys_warn() {
        let r = parse_stack_json(r#"{"conclusion":"x","mood":"up","upward_trend":[{"A":"b","C":"d"}]}"#).unwrap();
        assert_eq!(entities(&r.value.upward), ["A", "C"]);
        assert!(r.warnings.iter().any(|w| w.message.contains("mood")));
    }
}
