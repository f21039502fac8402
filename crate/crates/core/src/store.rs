//! Consolidated graph across articles, with per-entity sentiment statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    classify_relation, normalize_entity, strip_parenthetical, KnowledgeGraph, ModelError, ObjectValue,
    StackReport, TextSummary, Triple,
};
use crate::parse::Warning;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("article {0:?} was never registered")]
    UnknownArticle(String),
    #[error("store holds no triples")]
    EmptyStore,
    #[error("line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Graph,
    Text,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// An entity is contradictory once it has a score >= threshold and
    /// another <= -threshold.
    pub threshold: i64,
    pub aggregation: Aggregation,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            threshold: 3,
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub article_id: String,
    pub level: u8,
    pub score: i64,
    pub channel: Channel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendCounts {
    pub upward: usize,
    pub downward: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityStats {
    pub entity: String,
    pub observations: Vec<Observation>,
    pub aggregate_score: Option<f64>,
    pub trend_labels: TrendCounts,
    pub contradiction: bool,
}

impl EntityStats {
    fn new(entity: &str) -> Self {
        Self {
            entity: entity.to_string(),
            observations: Vec::new(),
            aggregate_score: None,
            trend_labels: TrendCounts::default(),
            contradiction: false,
        }
    }

    fn offer_display(&mut self, display: &str) {
        // Shortest surface form wins, so "Ethereum" beats "Ethereum (ETH)"
        // regardless of arrival order.
        if (display.len(), display) < (self.entity.len(), self.entity.as_str()) {
            self.entity = display.to_string();
        }
    }

    fn refresh(&mut self, config: &StoreConfig) {
        let scores: Vec<i64> = self.observations.iter().map(|o| o.score).collect();
        self.aggregate_score = aggregate(&scores, config.aggregation);
        self.contradiction = is_contradictory(&scores, config.threshold);
    }
}

/// Mean or median; `None` for no scores.
pub fn aggregate(scores: &[i64], how: Aggregation) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    match how {
        Aggregation::Mean => Some(scores.iter().sum::<i64>() as f64 / scores.len() as f64),
        Aggregation::Median => {
            let mut s = scores.to_vec();
            s.sort_unstable();
            let mid = s.len() / 2;
            Some(if s.len() % 2 == 1 {
                s[mid] as f64
            } else {
                (s[mid - 1] + s[mid]) as f64 / 2.0
            })
        }
    }
}

pub fn is_contradictory(scores: &[i64], threshold: i64) -> bool {
    scores.iter().any(|&s| s >= threshold) && scores.iter().any(|&s| s <= -threshold)
}

/// Key under which surface variants of one entity are merged: casefolded,
/// whitespace-collapsed, with a trailing ticker in parentheses removed.
pub fn entity_key(surface: &str) -> Result<String, ModelError> {
    let key = normalize_entity(surface)?.key;
    Ok(strip_parenthetical(&key).to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTriple {
    pub article_id: String,
    pub triple: Triple,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contradiction {
    pub key: String,
    pub entity: String,
    pub positive: Vec<(String, i64)>,
    pub negative: Vec<(String, i64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    TriplesJsonl,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsolidatedGraph {
    config: StoreConfig,
    articles: BTreeSet<String>,
    triples: Vec<StoredTriple>,
    seen: HashSet<(String, (String, String, String))>,
    text_seen: HashSet<(String, String, i64)>,
    stats: BTreeMap<String, EntityStats>,
}

impl ConsolidatedGraph {
    pub fn new(config: StoreConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn register_article(&mut self, article_id: &str) {
        self.articles.insert(article_id.to_string());
    }

    pub fn articles(&self) -> &BTreeSet<String> {
        &self.articles
    }

    pub fn triples(&self) -> &[StoredTriple] {
        &self.triples
    }

    pub fn entity_stats(&self) -> &BTreeMap<String, EntityStats> {
        &self.stats
    }

    pub fn stats_for(&self, entity: &str) -> Option<&EntityStats> {
        self.stats.get(&entity_key(entity).ok()?)
    }

    fn check_article(&self, article_id: &str) -> Result<(), StoreError> {
        if self.articles.contains(article_id) {
            Ok(())
        } else {
            Err(StoreError::UnknownArticle(article_id.to_string()))
        }
    }

    fn stats_entry(&mut self, display: &str) -> Option<&mut EntityStats> {
        let key = entity_key(display).ok()?;
        let stats = self.stats.entry(key).or_insert_with(|| EntityStats::new(display));
        stats.offer_display(display);
        Some(stats)
    }

    /// Adds a graph's triples under `article_id`. Triples already stored
    /// for that article are skipped and reported.
    pub fn ingest_graph(&mut self, article_id: &str, graph: &KnowledgeGraph) -> Result<Vec<Warning>, StoreError> {
        self.check_article(article_id)?;
        let mut warnings = Vec::new();
        for (pos, triple) in graph.triples().iter().enumerate() {
            if !self.insert_triple(article_id, triple.clone()) {
                warnings.push(Warning::new(Some(pos), format!("duplicate triple for {article_id}: {triple}")));
            }
        }
        Ok(warnings)
    }

    fn insert_triple(&mut self, article_id: &str, triple: Triple) -> bool {
        if !self.seen.insert((article_id.to_string(), triple.dedup_key())) {
            return false;
        }
        let config = self.config;
        let trend = trend_direction(&triple);
        let score = triple.sentiment_value().map(|s| s.value());
        if let Some(stats) = self.stats_entry(&triple.subject) {
            if let Some(score) = score {
                stats.observations.push(Observation {
                    article_id: article_id.to_string(),
                    level: 1,
                    score,
                    channel: Channel::Graph,
                });
                stats.refresh(&config);
            }
            match trend {
                Some(true) => stats.trend_labels.upward += 1,
                Some(false) => stats.trend_labels.downward += 1,
                None => {}
            }
        }
        self.triples.push(StoredTriple {
            article_id: article_id.to_string(),
            triple,
        });
        true
    }

    /// Records each coin's score from a text summary as an observation.
    pub fn ingest_text_summary(&mut self, article_id: &str, summary: &TextSummary) -> Result<Vec<Warning>, StoreError> {
        self.check_article(article_id)?;
        let config = self.config;
        let mut warnings = Vec::new();
        for (pos, entry) in summary.entries.iter().enumerate() {
            let score = entry.sentiment.value();
            let Ok(key) = entity_key(&entry.coin) else {
                continue;
            };
            if !self.text_seen.insert((article_id.to_string(), key, score)) {
                warnings.push(Warning::new(Some(pos), format!("duplicate text observation for {}", entry.coin)));
                continue;
            }
            if let Some(stats) = self.stats_entry(&entry.coin) {
                stats.observations.push(Observation {
                    article_id: article_id.to_string(),
                    level: 1,
                    score,
                    channel: Channel::Text,
                });
                stats.refresh(&config);
            }
        }
        Ok(warnings)
    }

    /// Counts trend labels named by a stacking report. Scores are untouched.
    pub fn ingest_stack_report(&mut self, report: &StackReport) {
        for (list, up) in [(&report.upward, true), (&report.downward, false)] {
            for entry in list {
                if let Some(stats) = self.stats_entry(&entry.entity) {
                    if up {
                        stats.trend_labels.upward += 1;
                    } else {
                        stats.trend_labels.downward += 1;
                    }
                }
            }
        }
    }

    pub fn aggregate_sentiment(&self, entity: &str) -> Option<f64> {
        self.stats_for(entity)?.aggregate_score
    }

    /// Entities with strong evidence both ways, strongest first.
    pub fn detect_contradictions(&self) -> Vec<Contradiction> {
        let t = self.config.threshold;
        let mut found: Vec<(i64, Contradiction)> = self
            .stats
            .iter()
            .filter(|(_, s)| s.contradiction)
            .map(|(key, s)| {
                let pick = |keep: &dyn Fn(i64) -> bool| -> Vec<(String, i64)> {
                    s.observations
                        .iter()
                        .filter(|o| keep(o.score))
                        .map(|o| (o.article_id.clone(), o.score))
                        .collect()
                };
                let max = s.observations.iter().map(|o| o.score).max().unwrap_or(0);
                let min = s.observations.iter().map(|o| o.score).min().unwrap_or(0);
                let c = Contradiction {
                    key: key.clone(),
                    entity: s.entity.clone(),
                    positive: pick(&|v| v >= t),
                    negative: pick(&|v| v <= -t),
                };
                (max.abs() + min.abs(), c)
            })
            .collect();
        found.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.key.cmp(&b.1.key)));
        found.into_iter().map(|(_, c)| c).collect()
    }

    pub fn export_graph(&self, format: GraphFormat) -> Result<String, StoreError> {
        if self.triples.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        Ok(match format {
            GraphFormat::TriplesJsonl => self.triples_jsonl(),
            GraphFormat::Dot => self.dot(),
        })
    }

    fn triples_jsonl(&self) -> String {
        let mut out = String::new();
        for st in &self.triples {
            let object = match &st.triple.object {
                ObjectValue::Sentiment(s) => Value::from(s.value()),
                other => Value::from(other.surface()),
            };
            let line = TripleLine {
                article_id: &st.article_id,
                subject: &st.triple.subject,
                relation: st.triple.relation.name(),
                object,
                core: st.triple.relation.is_core(),
            };
            out.push_str(&serde_json::to_string(&line).expect("triple line serializes"));
            out.push('\n');
        }
        out
    }

    fn dot(&self) -> String {
        let mut nodes = BTreeSet::new();
        for st in &self.triples {
            nodes.insert(st.triple.subject.clone());
            nodes.insert(st.triple.object.surface());
        }
        let mut out = String::from("digraph newsgraph {\n  rankdir=LR;\n");
        for n in &nodes {
            let _ = writeln!(out, "  {};", dot_quote(n));
        }
        for st in &self.triples {
            let style = if st.triple.relation.is_core() { "" } else { ", style=dashed" };
            let _ = writeln!(
                out,
                "  {} -> {} [label={}{style}];",
                dot_quote(&st.triple.subject),
                dot_quote(&st.triple.object.surface()),
                dot_quote(st.triple.relation.name()),
            );
        }
        out.push_str("}\n");
        out
    }

    /// Rebuilds a store from a triples-jsonl log. Articles are registered
    /// as they appear.
    pub fn import_triples_jsonl(text: &str, config: StoreConfig) -> Result<Self, StoreError> {
        let mut store = Self::new(config);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: String| StoreError::MalformedLine { line: i + 1, detail };
            let row: OwnedTripleLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let object = match &row.object {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                other => return Err(bad(format!("unsupported object {other}"))),
            };
            let relation = classify_relation(&row.relation).map_err(|e| bad(e.to_string()))?;
            let triple = Triple::from_parts(&row.subject, relation, &object).map_err(|e| bad(e.to_string()))?;
            store.register_article(&row.article_id);
            store.insert_triple(&row.article_id, triple);
        }
        Ok(store)
    }

    /// CSV with one row per entity, ordered by entity key.
    pub fn export_features(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["entity", "n_observations", "aggregate_score", "contradiction"])
            .expect("in-memory write");
        for stats in self.stats.values() {
            let score = stats.aggregate_score.map(|v| format!("{v:?}")).unwrap_or_default();
            w.write_record([
                stats.entity.as_str(),
                &stats.observations.len().to_string(),
                &score,
                if stats.contradiction { "true" } else { "false" },
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

#[derive(Serialize)]
struct TripleLine<'a> {
    article_id: &'a str,
    subject: &'a str,
    relation: &'a str,
    object: Value,
    core: bool,
}

#[derive(Deserialize)]
struct OwnedTripleLine {
    article_id: String,
    subject: String,
    relation: String,
    object: Value,
    #[allow(dead_code)]
    #[serde(default)]
    core: bool,
}

/// `Some(true)` for an upward trend triple, `Some(false)` for downward.
fn trend_direction(t: &Triple) -> Option<bool> {
    if t.relation.name() != "has_trend" {
        return None;
    }
    let o = t.object.surface().to_lowercase();
    if o.contains("upward") || o.contains("bullish") {
        Some(true)
    } else if o.contains("downward") || o.contains("bearish") {
        Some(false)
    } else {
        None
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoinSentiment, Sentiment, StackSource, TrendEntry};
    use crate::parse::parse_graph_lines;
    use proptest::prelude::*;

    fn graph(lines: &str) -> KnowledgeGraph {
        parse_graph_lines(lines).unwrap().value
    }

    fn store_with(articles: &[&str]) -> ConsolidatedGraph {
        let mut s = ConsolidatedGraph::new(StoreConfig::default());
        for a in articles {
            s.register_article(a);
        }
        s
    }

    #[test]
    fn unknown_article_rejected() {
        let mut s = store_with(&[]);
        let g = graph("Bitcoin — has_sentiment_signal — 2");
        assert_eq!(s.ingest_graph("x", &g), Err(StoreError::UnknownArticle("x".into())));
    }

    #[test]
    fn double_ingest_is_idempotent() {
        let mut s = store_with(&["a"]);
        let g = graph("Ethereum — has_sentiment_signal — 8\nEthereum — has_trend — upward trend");
        assert!(s.ingest_graph("a", &g).unwrap().is_empty());
        let once = s.clone();
        let warnings = s.ingest_graph("a", &g).unwrap();
        assert_eq!(warnings.len(), 2);
        assert_eq!(s, once);
    }

    #[test]
    fn mean_over_articles_and_aliases() {
        let mut s = store_with(&["a", "b"]);
        s.ingest_graph("a", &graph("Ethereum — has_sentiment_signal — 8")).unwrap();
        s.ingest_graph("b", &graph("Ethereum — has_sentiment_signal — 8")).unwrap();
        assert_eq!(s.aggregate_sentiment("ethereum"), Some(8.0));
        let text = TextSummary {
            article_id: "b".into(),
            overall: String::new(),
            entries: vec![CoinSentiment {
                coin: "Ethereum (ETH)".into(),
                summary: String::new(),
                sentiment: Sentiment::new(-7).unwrap(),
            }],
        };
        s.ingest_text_summary("b", &text).unwrap();
        assert_eq!(s.aggregate_sentiment("Ethereum (ETH)"), Some(3.0));
        assert_eq!(s.stats_for("ETHEREUM").unwrap().entity, "Ethereum");
        assert_eq!(s.aggregate_sentiment("Solana"), None);
    }

    #[test]
    fn median_is_configurable() {
        assert_eq!(aggregate(&[1, 2, 9], Aggregation::Median), Some(2.0));
        assert_eq!(aggregate(&[1, 2, 4, 9], Aggregation::Median), Some(3.0));
        assert_eq!(aggregate(&[8, -6], Aggregation::Mean), Some(1.0));
        assert_eq!(aggregate(&[], Aggregation::Mean), None);
    }

    #[test]
    fn contradictions_ordered() {
        let mut s = store_with(&["a", "b"]);
        s.ingest_graph(
            "a",
            &graph("Bitcoin — has_sentiment_signal — 8\nSolana — has_sentiment_signal — 4\nXRP — has_sentiment_signal — 2"),
        )
        .unwrap();
        s.ingest_graph(
            "b",
            &graph("Bitcoin — has_sentiment_signal — -6\nSolana — has_sentiment_signal — -4\nXRP — has_sentiment_signal — -2"),
        )
        .unwrap();
        let found = s.detect_contradictions();
        let keys: Vec<&str> = found.iter().map(|c| c.key.as_str()).collect();
        assert_eq!(keys, ["bitcoin", "solana"]);
        assert_eq!(found[0].positive, vec![("a".to_string(), 8)]);
        assert_eq!(found[0].negative, vec![("b".to_string(), -6)]);
    }

    #[test]
    fn ties_break_by_key() {
        let mut s = store_with(&["a"]);
        s.ingest_graph(
            "a",
            &graph("Zcash — has_sentiment_signal — 5\nZcash — has_sentiment_signal — -5\nAave — has_sentiment_signal — 5\nAave — has_sentiment_signal — -5"),
        )
        .unwrap();
        let keys: Vec<String> = s.detect_contradictions().into_iter().map(|c| c.key).collect();
        assert_eq!(keys, ["aave", "zcash"]);
    }

    #[test]
    fn features_table() {
        let s = store_with(&[]);
        assert_eq!(s.export_features(), "entity,n_observations,aggregate_score,contradiction\n");
        let mut s = store_with(&["a", "b"]);
        s.ingest_graph("a", &graph("Ethereum — has_sentiment_signal — 8\nBitcoin — has_sentiment_signal — 8")).unwrap();
        s.ingest_graph("b", &graph("Bitcoin — has_sentiment_signal — -6\nCoinbase, Inc. — has_partnership — Circle")).unwrap();
        assert_eq!(
            s.export_features(),
            "entity,n_observations,aggregate_score,contradiction\n\
             Bitcoin,2,1.0,true\n\
             \"Coinbase, Inc.\",0,,false\n\
             Ethereum,1,8.0,false\n"
        );
    }

    #[test]
    fn jsonl_and_dot_exports() {
        let s = store_with(&[]);
        assert_eq!(s.export_graph(GraphFormat::Dot), Err(StoreError::EmptyStore));
        let mut s = store_with(&["a"]);
        s.ingest_graph("a", &graph("Ethereum — has_trend — upward trend\nEthereum — has_sentiment_signal — 8\nEthereum — compared_to — \"Solana\"")).unwrap();
        let jsonl = s.export_graph(GraphFormat::TriplesJsonl).unwrap();
        assert_eq!(jsonl.lines().count(), 3);
        assert_eq!(
            jsonl.lines().next().unwrap(),
            r#"{"article_id":"a","subject":"Ethereum","relation":"has_trend","object":"upward trend","core":true}"#
        );
        assert!(jsonl.contains(r#""object":8,"core":true"#));
        let back = ConsolidatedGraph::import_triples_jsonl(&jsonl, StoreConfig::default()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.export_graph(GraphFormat::TriplesJsonl).unwrap(), jsonl);
        let dot = s.export_graph(GraphFormat::Dot).unwrap();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("\"Ethereum\" -> \"upward trend\" [label=\"has_trend\"];"));
        assert!(dot.contains("style=dashed"));
        assert_eq!(s.stats_for("ethereum").unwrap().trend_labels.upward, 1);
    }

    #[test]
    fn import_reports_bad_lines() {
        let err = ConsolidatedGraph::import_triples_jsonl("{}\n", StoreConfig::default()).unwrap_err();
        assert!(matches!(err, StoreError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn stack_reports_add_trend_labels() {
        let mut s = store_with(&[]);
        let r = StackReport::new(
            3,
            StackSource::Merged,
            vec![TrendEntry::new("Bitcoin", "x")],
            vec![TrendEntry::new("Bitcoin (BTC)", "y")],
            vec![],
            "c",
        )
        .unwrap();
        s.ingest_stack_report(&r);
        let t = s.stats_for("bitcoin").unwrap().trend_labels;
        assert_eq!((t.upward, t.downward), (1, 1));
    }

    proptest! {
        #[test]
        fn contradiction_is_monotone(scores in prop::collection::vec(-10i64..=10, 0..12), extra in -10i64..=10) {
            if is_contradictory(&scores, 3) {
                let mut more = scores.clone();
                more.push(extra);
                prop_assert!(is_contradictory(&more, 3));
            }
        }
    }
}
