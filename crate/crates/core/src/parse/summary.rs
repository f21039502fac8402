use serde::Serialize;
use serde_json::Value;

use super::json::{parse_lenient, Shape};
use super::{ParseError, ParseReport, Warning};
use crate::model::{collapse_whitespace, parse_sentiment_token, CoinSentiment, Sentiment, TextSummary};

const KEYS: [&str; 3] = ["Cryptocurrency", "summary", "sentiment"];

/// Parses the per-coin summary array. Sentiments may be numbers or numeric
/// strings; out-of-range values are clamped with a warning. Prose before
/// the array becomes the overall summary.
pub fn parse_text_summary_json(text: &str) -> Result<ParseReport<TextSummary>, ParseError> {
    let lenient = parse_lenient(text, Shape::Array).map_err(|_| ParseError::NotAnArray)?;
    let overall = text[..lenient.start].trim().to_string();
    let Value::Array(items) = lenient.value else {
        return Err(ParseError::NotAnArray);
    };
    let mut report = ParseReport::new(TextSummary {
        article_id: String::new(),
        overall,
        entries: Vec::new(),
    });
    report.warnings = lenient.warnings;
    let mut first_missing: Option<&str> = None;

    for (pos, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            report.warnings.push(Warning::new(Some(pos), "array element is not an object"));
            report.rejected_lines.push(item.to_string());
            continue;
        };
        let mut fields: [Option<&Value>; 3] = [None, None, None];
        for (key, value) in obj {
            match KEYS.iter().position(|k| k.eq_ignore_ascii_case(key.trim())) {
                Some(slot) => fields[slot] = Some(value),
                None => report
                    .warnings
                    .push(Warning::new(Some(pos), format!("extraneous key {key:?} ignored"))),
            }
        }
        if let Some(slot) = fields.iter().position(Option::is_none) {
            first_missing.get_or_insert(KEYS[slot]);
            report
                .warnings
                .push(Warning::new(Some(pos), format!("missing key {:?}", KEYS[slot])));
            report.rejected_lines.push(item.to_string());
            continue;
        }
        let coin = fields[0].map(value_text).map(|s| collapse_whitespace(&s)).unwrap_or_default();
        if coin.is_empty() {
            report.warnings.push(Warning::new(Some(pos), "empty cryptocurrency name"));
            report.rejected_lines.push(item.to_string());
            continue;
        }
        let summary = fields[1].map(value_text).unwrap_or_default().trim().to_string();
        let Some(raw) = fields[2].and_then(|v| sentiment_of(v, pos, &mut report.warnings)) else {
            report
                .warnings
                .push(Warning::new(Some(pos), "sentiment is not a number"));
            report.rejected_lines.push(item.to_string());
            continue;
        };
        let (sentiment, clamped) = Sentiment::clamped(raw);
        if clamped {
            report.warnings.push(Warning::new(
                Some(pos),
                format!("RangeWarning: sentiment {raw} clamped to {sentiment}"),
            ));
        }
        report.value.entries.push(CoinSentiment {
            coin,
            summary,
            sentiment,
        });
    }

    if report.value.entries.is_empty() {
        return Err(match first_missing {
            Some(k) => ParseError::MissingKey(k.to_string()),
            None => ParseError::NoEntries,
        });
    }
    Ok(report)
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn sentiment_of(v: &Value, pos: usize, warnings: &mut Vec<Warning>) -> Option<i64> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                return Some(i);
            }
            let f = n.as_f64()?;
            let r = f.round();
            if r != f {
                warnings.push(Warning::new(Some(pos), format!("sentiment {f} rounded to {r}")));
            }
            // Saturating cast; the clamp afterwards keeps it in range.
            Some(r as i64)
        }
        Value::String(s) => parse_sentiment_token(s),
        _ => None,
    }
}

#[derive(Serialize)]
struct Row<'a> {
    #[serde(rename = "Cryptocurrency")]
    coin: &'a str,
    summary: &'a str,
    sentiment: i64,
}

/// Pretty-printed array with numeric sentiments.
pub fn serialize_text_summary_json(summary: &TextSummary) -> String {
    let rows: Vec<Row<'_>> = summary
        .entries
        .iter()
        .map(|e| Row {
            coin: &e.coin,
            summary: &e.summary,
            sentiment: e.sentiment.value(),
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("rows serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_out_of_range() {
        let r = parse_text_summary_json(r#"[{"Cryptocurrency":"X","summary":"s","sentiment":15}]"#).unwrap();
        assert_eq!(r.value.entries[0].sentiment.value(), 10);
        assert!(r.warnings.iter().any(|w| w.message.starts_with("RangeWarning")));
        let r = parse_text_summary_json(r#"[{"Cryptocurrency":"X","summary":"s","sentiment":"-40"}]"#).unwrap();
        assert_eq!(r.value.entries[0].sentiment.value(), -10);
    }

    #[test]
    fn zero_is_neutral_and_strings_accepted() {
        let r = parse_text_summary_json(
            r#"[{"Cryptocurrency":"Bitcoin (BTC)","summary":"s","sentiment":0},
                {"Cryptocurrency":"Solana","summary":"s","sentiment":"+3"}]"#,
        )
        .unwrap();
        assert_eq!(r.value.entries[0].sentiment.value(), 0);
        assert_eq!(r.value.entries[1].sentiment.value(), 3);
        assert_eq!(r.value.overall, "");
    }

    #[test]
    fn prose_prefix_is_overall() {
        let r = parse_text_summary_json("Market is up.\n[{\"Cryptocurrency\":\"X\",\"summary\":\"s\",\"sentiment\":1}]").unwrap();
        assert_eq!(r.value.overall, "Market is up.");
    }

    #[test]
    fn errors() {
        assert_eq!(parse_text_summary_json("{}"), Err(ParseError::NotAnArray));
        assert_eq!(parse_text_summary_json("[]"), Err(ParseError::NoEntries));
        assert_eq!(
            parse_text_summary_json(r#"[{"Cryptocurrency":"X","summary":"s"}]"#),
            Err(ParseError::MissingKey("sentiment".into()))
        );
    }

    #[test]
    fn serialized_layout() {
        let r = parse_text_summary_json(r#"[{"Cryptocurrency":"X","summary":"s","sentiment":-2}]"#).unwrap();
        assert_eq!(
            serialize_text_summary_json(&r.value),
            "[\n  {\n    \"Cryptocurrency\": \"X\",\n    \"summary\": \"s\",\n    \"sentiment\": -2\n  }\n]"
        );
    }
}
