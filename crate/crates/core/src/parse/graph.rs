use serde_json::Value;

use super::json::{parse_lenient, Shape};
use super::{ParseError, ParseReport, Warning};
use crate::model::{
    classify_relation, parse_sentiment_token, KnowledgeGraph, RelationType, Sentiment, Triple,
};

/// Parses `subject — relation — object` lines into a knowledge graph.
///
/// Separators may be em dash, en dash or a spaced run of hyphens. Lines
/// that do not split into three parts are rejected; duplicate triples are
/// dropped with a warning.
pub fn parse_graph_lines(text: &str) -> Result<ParseReport<KnowledgeGraph>, ParseError> {
    let mut report = ParseReport::new(KnowledgeGraph::default());
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_bullet(raw.trim());
        if line.is_empty() {
            continue;
        }
        let Some((subject, relation, object)) = split_triple(line) else {
            report.rejected_lines.push(raw.to_string());
            continue;
        };
        match build_triple(subject, relation, object, line_no, &mut report.warnings) {
            Some(triple) => insert(&mut report, triple, line_no),
            None => report.rejected_lines.push(raw.to_string()),
        }
    }
    if report.value.is_empty() {
        return Err(ParseError::NoTriplesFound);
    }
    Ok(report)
}

/// Parses a JSON array of `{"Entity 1", "Relationship", "Entity 2"}` objects.
pub fn parse_graph_json(text: &str) -> Result<ParseReport<KnowledgeGraph>, ParseError> {
    let lenient = parse_lenient(text, Shape::Array).map_err(|_| ParseError::NotAnArray)?;
    let Value::Array(items) = lenient.value else {
        return Err(ParseError::NotAnArray);
    };
    let mut report = ParseReport::new(KnowledgeGraph::default());
    report.warnings = lenient.warnings;
    let mut first_missing = None;
    for (pos, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            report.warnings.push(Warning::new(Some(pos), "array element is not an object"));
            report.rejected_lines.push(item.to_string());
            continue;
        };
        let mut fields: [Option<String>; 3] = [None, None, None];
        for (key, value) in obj {
            let slot = match key_slot(key) {
                Some(s) => s,
                None => {
                    report
                        .warnings
                        .push(Warning::new(Some(pos), format!("extraneous key {key:?} ignored")));
                    continue;
                }
            };
            fields[slot] = match value {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            };
        }
        let [Some(subject), Some(relation), Some(object)] = fields else {
            first_missing.get_or_insert(pos);
            report
                .warnings
                .push(Warning::new(Some(pos), "object is missing Entity 1, Relationship or Entity 2"));
            report.rejected_lines.push(item.to_string());
            continue;
        };
        match build_triple(&subject, &relation, &object, pos, &mut report.warnings) {
            Some(triple) => insert(&mut report, triple, pos),
            None => report.rejected_lines.push(item.to_string()),
        }
    }
    if report.value.is_empty() {
        return Err(match first_missing {
            Some(pos) => ParseError::ObjectMissingKeys(pos),
            None => ParseError::NoTriplesFound,
        });
    }
    Ok(report)
}

/// Graph JSON in the model's own layout: one compact object per line,
/// sentiment values as strings.
pub fn serialize_graph_json(graph: &KnowledgeGraph) -> String {
    if graph.is_empty() {
        return "[]".to_string();
    }
    let rows: Vec<String> = graph
        .triples()
        .iter()
        .map(|t| {
            format!(
                "  {{\"Entity 1\":{},\"Relationship\":{},\"Entity 2\":{}}}",
                json_str(&t.subject),
                json_str(t.relation.name()),
                json_str(&t.object.surface())
            )
        })
        .collect();
    format!("[\n{}\n]", rows.join(",\n"))
}

pub fn serialize_graph_lines(graph: &KnowledgeGraph) -> String {
    graph
        .triples()
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn key_slot(key: &str) -> Option<usize> {
    let k: String = key
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .flat_map(char::to_lowercase)
        .collect();
    match k.as_str() {
        "entity1" => Some(0),
        "relationship" | "relation" => Some(1),
        "entity2" => Some(2),
        _ => None,
    }
}

fn insert(report: &mut ParseReport<KnowledgeGraph>, triple: Triple, position: usize) {
    let shown = triple.to_string();
    if !report.value.insert(triple) {
        report
            .warnings
            .push(Warning::new(Some(position), format!("duplicate triple dropped: {shown}")));
    }
}

fn build_triple(
    subject: &str,
    relation: &str,
    object: &str,
    position: usize,
    warnings: &mut Vec<Warning>,
) -> Option<Triple> {
    let relation: RelationType = match classify_relation(relation) {
        Ok(r) => r,
        Err(e) => {
            warnings.push(Warning::new(Some(position), e.to_string()));
            return None;
        }
    };
    if !relation.is_core() {
        warnings.push(Warning::new(
            Some(position),
            format!("non-core relation {:?}", relation.name()),
        ));
    }
    let built = if relation.is_sentiment() {
        let Some(raw) = parse_sentiment_token(object) else {
            warnings.push(Warning::new(
                Some(position),
                format!("sentiment {object:?} is not an integer"),
            ));
            return None;
        };
        let (score, clamped) = Sentiment::clamped(raw);
        if clamped {
            warnings.push(Warning::new(
                Some(position),
                format!("RangeWarning: sentiment {raw} clamped to {score}"),
            ));
        }
        Triple::sentiment(subject, score)
    } else {
        Triple::from_parts(subject, relation, object)
    };
    match built {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(Warning::new(Some(position), e.to_string()));
            None
        }
    }
}

fn strip_bullet(line: &str) -> &str {
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(prefix) {
            return rest.trim_start();
        }
    }
    line
}

/// Splits on the first two separators of the first kind that occurs at
/// least twice: em dash, en dash, then spaced hyphen runs.
fn split_triple(line: &str) -> Option<(&str, &str, &str)> {
    for dash in ['—', '–'] {
        let mut parts = line.splitn(3, dash);
        if let (Some(s), Some(r), Some(o)) = (parts.next(), parts.next(), parts.next()) {
            return nonempty(s, r, o);
        }
    }
    let seps = spaced_hyphen_runs(line);
    if seps.len() >= 2 {
        let (a0, a1) = seps[0];
        let (b0, b1) = seps[1];
        return nonempty(&line[..a0], &line[a1..b0], &line[b1..]);
    }
    None
}

fn nonempty<'a>(s: &'a str, r: &'a str, o: &'a str) -> Option<(&'a str, &'a str, &'a str)> {
    let (s, r, o) = (s.trim(), r.trim(), o.trim());
    (!s.is_empty() && !r.is_empty() && !o.is_empty()).then_some((s, r, o))
}

/// Byte ranges of `<ws>-+<ws>` runs.
fn spaced_hyphen_runs(line: &str) -> Vec<(usize, usize)> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'-' && i > 0 && bytes[i - 1] == b' ' {
            let mut j = i;
            while j < bytes.len() && bytes[j] == b'-' {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b' ' {
                out.push((i - 1, j + 1));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectValue;

    #[test]
    fn sentiment_line() {
        let r = parse_graph_lines("Ethereum — has_sentiment_signal — 8").unwrap();
        let t = &r.value.triples()[0];
        assert_eq!(t.subject, "Ethereum");
        assert_eq!(t.relation.name(), "has_sentiment_signal");
        assert_eq!(t.object, ObjectValue::Sentiment(Sentiment::new(8).unwrap()));
    }

    #[test]
    fn free_string_object() {
        let r = parse_graph_lines("Solana — involved_in — competition with Ethereum").unwrap();
        assert_eq!(
            r.value.triples()[0].object,
            ObjectValue::Entity("competition with Ethereum".into())
        );
    }

    #[test]
    fn duplicate_line_warns_once() {
        let text = "Ethereum — has_sentiment_signal — 8\nEthereum — has_sentiment_signal — 8\n";
        let r = parse_graph_lines(text).unwrap();
        assert_eq!(r.value.len(), 1);
        assert_eq!(r.warnings.iter().filter(|w| w.message.contains("duplicate")).count(), 1);
    }

    #[test]
    fn hyphen_separators_and_negative_objects() {
        let r = parse_graph_lines("Bitcoin - has_price_change - -2.8%\nBitcoin -- has_trend -- downward trend").unwrap();
        assert_eq!(r.value.len(), 2);
        assert_eq!(r.value.triples()[0].object, ObjectValue::Literal("-2.8%".into()));
        let r = parse_graph_lines("Bitcoin – has_sentiment_signal – -6").unwrap();
        assert_eq!(r.value.triples()[0].sentiment_value().unwrap().value(), -6);
    }

    #[test]
    fn rejects_and_clamps() {
        let text = "Graph summary:\n\nBitcoin — has_sentiment_signal — 15\nBitcoin — has_sentiment_signal — very high\n";
        let r = parse_graph_lines(text).unwrap();
        assert_eq!(r.value.len(), 1);
        assert_eq!(r.value.triples()[0].sentiment_value().unwrap().value(), 10);
        assert_eq!(r.rejected_lines.len(), 2);
        assert!(r.warnings.iter().any(|w| w.message.contains("RangeWarning")));
    }

    #[test]
    fn nothing_parses() {
        assert_eq!(parse_graph_lines("no graph here\n"), Err(ParseError::NoTriplesFound));
        assert_eq!(parse_graph_lines(""), Err(ParseError::NoTriplesFound));
    }

    #[test]
    fn json_single_object() {
        let r = parse_graph_json(r#"[{"Entity 1":"Ethereum","Relationship":"has_trend","Entity 2":"upward trend"}]"#).unwrap();
        assert_eq!(r.value.len(), 1);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn json_errors() {
        assert_eq!(parse_graph_json("[]"), Err(ParseError::NoTriplesFound));
        assert_eq!(parse_graph_json("{\"a\":1}"), Err(ParseError::NotAnArray));
        assert_eq!(parse_graph_json("plain prose"), Err(ParseError::NotAnArray));
        assert_eq!(
            parse_graph_json(r#"[{"Entity 1":"A"},{"Entity 1":"B","Relationship":"x"}]"#),
            Err(ParseError::ObjectMissingKeys(0))
        );
    }

    #[test]
    fn json_extraneous_keys_and_numbers() {
        let r = parse_graph_json(
            r#"[{"Entity 1":"Bitcoin","Relationship":"has_sentiment_signal","Entity 2":-6,"note":"x"}]"#,
        )
        .unwrap();
        assert_eq!(r.value.triples()[0].sentiment_value().unwrap().value(), -6);
        assert!(r.warnings.iter().any(|w| w.message.contains("extraneous")));
    }

    #[test]
    fn serialized_json_layout() {
        let g = parse_graph_lines("Ethereum — has_sentiment_signal — 8\nEthereum — has_trend — upward trend").unwrap().value;
        assert_eq!(
            serialize_graph_json(&g),
            "[\n  {\"Entity 1\":\"Ethereum\",\"Relationship\":\"has_sentiment_signal\",\"Entity 2\":\"8\"},\n  \
             {\"Entity 1\":\"Ethereum\",\"Relationship\":\"has_trend\",\"Entity 2\":\"upward trend\"}\n]"
        );
        assert_eq!(parse_graph_lines(&serialize_graph_lines(&g)).unwrap().value, g);
    }
}
