//! Shared domain types: articles, triples, knowledge graphs, text summaries
//! and stacking reports, plus the closed schema vocabularies.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("entity name is empty")]
    EmptyEntity,
    #[error("malformed relation token {0:?}")]
    MalformedRelation(String),
    #[error("sentiment {0} outside [-10, 10]")]
    SentimentOutOfRange(i64),
    #[error("has_sentiment_signal requires an integer object, got {0:?}")]
    NonIntegerSentiment(String),
    #[error("article id is empty")]
    EmptyArticleId,
    #[error("article {0} has an empty body")]
    EmptyBody(String),
    #[error("stack report conclusion is empty")]
    EmptyConclusion,
    #[error("level-3 stack reports must be merged, got {0:?}")]
    LevelSourceMismatch(StackSource),
    #[error("stack level must be 2 or 3, got {0}")]
    InvalidLevel(u8),
}

/// One raw news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    /// RFC 3339 UTC timestamp, kept as text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<String>,
}

impl NewsArticle {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        let body = body.into();
        if id.trim().is_empty() {
            return Err(ModelError::EmptyArticleId);
        }
        if body.trim().is_empty() {
            return Err(ModelError::EmptyBody(id));
        }
        Ok(Self {
            id,
            body,
            title: None,
            source_url: None,
            published_at: None,
        })
    }
}

/// The five analytic tasks the model is prompted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GraphSummary,
    TextSummary,
    JsonOfSummary,
    StackList,
    StackMerge,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::GraphSummary,
        TaskKind::TextSummary,
        TaskKind::JsonOfSummary,
        TaskKind::StackList,
        TaskKind::StackMerge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::GraphSummary => "graph_summary",
            TaskKind::TextSummary => "text_summary",
            TaskKind::JsonOfSummary => "json_of_summary",
            TaskKind::StackList => "stack_list",
            TaskKind::StackMerge => "stack_merge",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| format!("unknown task kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    Cryptocurrency,
    Person,
    Organization,
    Exchange,
    WalletProvider,
    Event,
    RegulationOrLaw,
    CountryOrGovernmentBody,
    ProjectOrProtocol,
    Metric,
    Sentiment,
    UpwardTrend,
    DownwardTrend,
    Other,
}

impl EntityType {
    pub fn label(self) -> &'static str {
        match self {
            EntityType::Cryptocurrency => "Cryptocurrency",
            EntityType::Person => "Person",
            EntityType::Organization => "Organization",
            EntityType::Exchange => "Exchange",
            EntityType::WalletProvider => "Wallet/Provider",
            EntityType::Event => "Event",
            EntityType::RegulationOrLaw => "Regulation or Law",
            EntityType::CountryOrGovernmentBody => "Country or Government Body",
            EntityType::ProjectOrProtocol => "Project or Protocol",
            EntityType::Metric => "Metric",
            EntityType::Sentiment => "Sentiment",
            EntityType::UpwardTrend => "Upward trend",
            EntityType::DownwardTrend => "Downward trend",
            EntityType::Other => "Other",
        }
    }

    /// Best-effort type guess for an entity surface string. Advisory only.
    pub fn infer(surface: &str) -> EntityType {
        let key = normalize_entity(surface)
            .map(|n| n.key)
            .unwrap_or_default();
        let base = strip_parenthetical(&key);
        let words: Vec<&str> = base.split(' ').collect();
        let has_word = |w: &str| words.contains(&w);

        if let Some(t) = KNOWN_ENTITIES
            .iter()
            .find(|(name, _)| *name == base)
            .map(|(_, t)| *t)
        {
            return t;
        }
        if base == "upward trend" {
            return EntityType::UpwardTrend;
        }
        if base == "downward trend" {
            return EntityType::DownwardTrend;
        }
        if ["bullish", "bearish", "positive", "negative", "neutral"].contains(&base) {
            return EntityType::Sentiment;
        }
        if ["act", "bill", "bills", "law", "regulation", "legislation"]
            .iter()
            .any(|w| has_word(w))
        {
            return EntityType::RegulationOrLaw;
        }
        if ["etf", "etfs", "ipo", "hack", "approval", "vote", "listing"]
            .iter()
            .any(|w| has_word(w))
        {
            return EntityType::Event;
        }
        if ["price", "volume", "market cap", "market capitalization"].contains(&base) {
            return EntityType::Metric;
        }
        if ["protocol", "network", "chain", "dao"].iter().any(|w| has_word(w)) {
            return EntityType::ProjectOrProtocol;
        }
        if ["exchange"].iter().any(|w| has_word(w)) {
            return EntityType::Exchange;
        }
        if [
            "holdings", "platforms", "inc", "corp", "bank", "trust", "capital", "group",
            "chase", "financial",
        ]
        .iter()
        .any(|w| has_word(w))
        {
            return EntityType::Organization;
        }
        if base.contains("coin") || base.contains("crypto") || base.contains("token") {
            return EntityType::Cryptocurrency;
        }
        EntityType::Other
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const KNOWN_ENTITIES: &[(&str, EntityType)] = &[
    ("bitcoin", EntityType::Cryptocurrency),
    ("btc", EntityType::Cryptocurrency),
    ("ethereum", EntityType::Cryptocurrency),
    ("ether", EntityType::Cryptocurrency),
    ("eth", EntityType::Cryptocurrency),
    ("solana", EntityType::Cryptocurrency),
    ("sol", EntityType::Cryptocurrency),
    ("xrp", EntityType::Cryptocurrency),
    ("dogecoin", EntityType::Cryptocurrency),
    ("litecoin", EntityType::Cryptocurrency),
    ("cardano", EntityType::Cryptocurrency),
    ("usdc", EntityType::Cryptocurrency),
    ("usdt", EntityType::Cryptocurrency),
    ("tether", EntityType::Cryptocurrency),
    ("stablecoin", EntityType::Cryptocurrency),
    ("stablecoins", EntityType::Cryptocurrency),
    ("crypto in general", EntityType::Cryptocurrency),
    ("coinbase", EntityType::Exchange),
    ("binance", EntityType::Exchange),
    ("kraken", EntityType::Exchange),
    ("coindcx", EntityType::Exchange),
    ("metamask", EntityType::WalletProvider),
    ("ledger", EntityType::WalletProvider),
    ("sec", EntityType::Organization),
    ("circle", EntityType::Organization),
    ("jpmorgan", EntityType::Organization),
    ("microstrategy", EntityType::Organization),
    ("grayscale", EntityType::Organization),
    ("federal reserve", EntityType::CountryOrGovernmentBody),
    ("house of representatives", EntityType::CountryOrGovernmentBody),
    ("congress", EntityType::CountryOrGovernmentBody),
    ("white house", EntityType::CountryOrGovernmentBody),
    ("united states", EntityType::CountryOrGovernmentBody),
    ("uniswap", EntityType::ProjectOrProtocol),
    ("elon musk", EntityType::Person),
    ("trump", EntityType::Person),
];

/// Display form and casefolded index key of an entity name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedEntity {
    pub display: String,
    pub key: String,
}

/// Trims and collapses whitespace runs; the key is additionally lowercased.
pub fn normalize_entity(raw: &str) -> Result<NormalizedEntity, ModelError> {
    let display = collapse_whitespace(raw);
    if display.is_empty() {
        return Err(ModelError::EmptyEntity);
    }
    let key = display.to_lowercase();
    Ok(NormalizedEntity { display, key })
}

pub fn collapse_whitespace(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops one trailing parenthetical group, e.g. `ethereum (eth)` → `ethereum`.
/// Used to line up ticker-annotated names with bare ones.
pub fn strip_parenthetical(key: &str) -> &str {
    let trimmed = key.trim_end();
    if trimmed.ends_with(')') {
        if let Some(open) = trimmed.rfind('(') {
            let head = trimmed[..open].trim_end();
            if !head.is_empty() {
                return head;
            }
        }
    }
    trimmed
}

pub const CORE_RELATIONS: [&str; 16] = [
    "launched_by",
    "regulated_by",
    "affected_by",
    "involved_in",
    "listed_on",
    "invested_by",
    "announced",
    "supported_by",
    "discussed_in",
    "target_of",
    "resulted_in",
    "has_price_change",
    "predicted_by",
    "acquired_by",
    "has_trend",
    "has_sentiment_signal",
];

pub const SENTIMENT_RELATION: &str = "has_sentiment_signal";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationType {
    name: String,
    core: bool,
}

impl RelationType {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_core(&self) -> bool {
        self.core
    }

    pub fn is_sentiment(&self) -> bool {
        self.name == SENTIMENT_RELATION
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Normalizes a relation token (trim, lowercase, inner spaces and hyphens to
/// `_`) and checks it against the core vocabulary. Unknown but well-formed
/// tokens are accepted with `core = false`.
pub fn classify_relation(token: &str) -> Result<RelationType, ModelError> {
    let name = token
        .trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_");
    let mut chars = name.chars();
    let well_formed = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if !well_formed {
        return Err(ModelError::MalformedRelation(token.to_string()));
    }
    let core = CORE_RELATIONS.contains(&name.as_str());
    Ok(RelationType { name, core })
}

/// Integer sentiment on the −10..=10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Sentiment(i8);

impl Sentiment {
    pub const MIN: i64 = -10;
    pub const MAX: i64 = 10;

    pub fn new(value: i64) -> Result<Self, ModelError> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(Sentiment(value as i8))
        } else {
            Err(ModelError::SentimentOutOfRange(value))
        }
    }

    /// Clamps into range; the flag reports whether clamping happened.
    pub fn clamped(value: i64) -> (Self, bool) {
        let c = value.clamp(Self::MIN, Self::MAX);
        (Sentiment(c as i8), c != value)
    }

    pub fn value(self) -> i64 {
        self.0 as i64
    }
}

impl TryFrom<i64> for Sentiment {
    type Error = ModelError;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Sentiment::new(v)
    }
}

impl From<Sentiment> for i64 {
    fn from(s: Sentiment) -> i64 {
        s.value()
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parses a sentiment token such as `8`, `+8`, `-6`, `−6` or `7.0`.
/// Returns the raw integer (not yet range-checked).
pub fn parse_sentiment_token(raw: &str) -> Option<i64> {
    let t = raw.trim().replace('\u{2212}', "-");
    let t = t.strip_prefix('+').unwrap_or(&t);
    if let Ok(v) = t.parse::<i64>() {
        return Some(v);
    }
    match t.parse::<f64>() {
        Ok(f) if f.is_finite() && f.fract() == 0.0 => Some(f as i64),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectValue {
    Entity(String),
    Sentiment(Sentiment),
    Literal(String),
}

impl ObjectValue {
    /// Text as it appears in graph-line and graph-JSON output.
    pub fn surface(&self) -> String {
        match self {
            ObjectValue::Entity(s) | ObjectValue::Literal(s) => s.clone(),
            ObjectValue::Sentiment(s) => s.to_string(),
        }
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            ObjectValue::Entity(s) => Some(s),
            _ => None,
        }
    }

    pub fn key(&self) -> String {
        match self {
            ObjectValue::Entity(s) | ObjectValue::Literal(s) => s.to_lowercase(),
            ObjectValue::Sentiment(s) => s.to_string(),
        }
    }
}

/// Relations whose objects are quantities rather than entities.
const LITERAL_RELATIONS: &[&str] = &["has_price_change", "has_market_cap", "has_volume"];

fn looks_like_quantity(s: &str) -> bool {
    let first = s.chars().next();
    matches!(first, Some(c) if c.is_ascii_digit() || "$+-€£¥".contains(c)) || s.contains('%')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: String,
    pub subject_type: EntityType,
    pub relation: RelationType,
    pub object: ObjectValue,
}

impl Triple {
    /// Builds a triple from surface strings. Sentiment relations require an
    /// in-range integer object; other objects are classified as literal or
    /// entity by relation and shape.
    pub fn from_parts(subject: &str, relation: RelationType, object: &str) -> Result<Self, ModelError> {
        let subject = normalize_entity(subject)?.display;
        let object_text = normalize_entity(object)?.display;
        let object = if relation.is_sentiment() {
            let v = parse_sentiment_token(&object_text)
                .ok_or_else(|| ModelError::NonIntegerSentiment(object_text.clone()))?;
            ObjectValue::Sentiment(Sentiment::new(v)?)
        } else if LITERAL_RELATIONS.contains(&relation.name()) || looks_like_quantity(&object_text) {
            ObjectValue::Literal(object_text)
        } else {
            ObjectValue::Entity(object_text)
        };
        Ok(Triple {
            subject_type: EntityType::infer(&subject),
            subject,
            relation,
            object,
        })
    }

    pub fn sentiment(subject: &str, score: Sentiment) -> Result<Self, ModelError> {
        let relation = classify_relation(SENTIMENT_RELATION)?;
        let subject = normalize_entity(subject)?.display;
        Ok(Triple {
            subject_type: EntityType::infer(&subject),
            subject,
            relation,
            object: ObjectValue::Sentiment(score),
        })
    }

    /// Identity used for deduplication: casefolded subject, relation, object.
    pub fn dedup_key(&self) -> (String, String, String) {
        (
            self.subject.to_lowercase(),
            self.relation.name().to_string(),
            self.object.key(),
        )
    }

    pub fn sentiment_value(&self) -> Option<Sentiment> {
        match self.object {
            ObjectValue::Sentiment(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} — {} — {}", self.subject, self.relation, self.object.surface())
    }
}

/// Per-article set of triples with an entity index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeGraph {
    pub article_id: String,
    triples: Vec<Triple>,
    entity_index: BTreeMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new(article_id: impl Into<String>) -> Self {
        Self {
            article_id: article_id.into(),
            ..Default::default()
        }
    }

    /// Appends unless an equal triple (after normalization) is present.
    /// Returns false for duplicates.
    pub fn insert(&mut self, triple: Triple) -> bool {
        let key = triple.dedup_key();
        if self.triples.iter().any(|t| t.dedup_key() == key) {
            return false;
        }
        let pos = self.triples.len();
        self.entity_index
            .entry(triple.subject.to_lowercase())
            .or_default()
            .push(pos);
        if let Some(obj) = triple.object.as_entity() {
            let k = obj.to_lowercase();
            let slots = self.entity_index.entry(k).or_default();
            if slots.last() != Some(&pos) {
                slots.push(pos);
            }
        }
        self.triples.push(triple);
        true
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.entity_index
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn with_article_id(mut self, id: impl Into<String>) -> Self {
        self.article_id = id.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinSentiment {
    pub coin: String,
    pub summary: String,
    pub sentiment: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TextSummary {
    pub article_id: String,
    pub overall: String,
    pub entries: Vec<CoinSentiment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackSource {
    GraphList,
    TextList,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendEntry {
    pub entity: String,
    pub rationale: String,
}

impl TrendEntry {
    pub fn new(entity: impl Into<String>, rationale: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            rationale: rationale.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackReport {
    pub level: u8,
    pub source: StackSource,
    pub upward: Vec<TrendEntry>,
    pub downward: Vec<TrendEntry>,
    pub contradictory: Vec<TrendEntry>,
    pub conclusion: String,
}

impl StackReport {
    pub fn new(
        level: u8,
        source: StackSource,
        upward: Vec<TrendEntry>,
        downward: Vec<TrendEntry>,
        contradictory: Vec<TrendEntry>,
        conclusion: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let conclusion = conclusion.into();
        if conclusion.trim().is_empty() {
            return Err(ModelError::EmptyConclusion);
        }
        match (level, source) {
            (2, StackSource::GraphList | StackSource::TextList) | (2 | 3, StackSource::Merged) => {}
            (3, s) => return Err(ModelError::LevelSourceMismatch(s)),
            (l, _) => return Err(ModelError::InvalidLevel(l)),
        }
        Ok(Self {
            level,
            source,
            upward,
            downward,
            contradictory,
            conclusion,
        })
    }

    pub fn mentions_contradictory(&self, entity: &str) -> bool {
        let needle = entity.to_lowercase();
        self.contradictory
            .iter()
            .any(|e| strip_parenthetical(&e.entity.to_lowercase()) == needle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_trims_and_casefolds() {
        let n = normalize_entity("  Ethereum ").unwrap();
        assert_eq!(n.display, "Ethereum");
        assert_eq!(n.key, "ethereum");
        assert_eq!(normalize_entity("Crypto in general").unwrap().key, "crypto in general");
        assert_eq!(
            normalize_entity("ETHEREUM").unwrap().key,
            normalize_entity("Ethereum").unwrap().key
        );
        assert_eq!(normalize_entity("Crypto  in\n general").unwrap().display, "Crypto in general");
    }

    #[test]
    fn normalize_rejects_whitespace() {
        assert_eq!(normalize_entity(" \t\n"), Err(ModelError::EmptyEntity));
    }

    #[test]
    fn classify_examples() {
        assert!(classify_relation("has_trend").unwrap().is_core());
        let r = classify_relation("compared_to").unwrap();
        assert!(!r.is_core());
        assert_eq!(r.name(), "compared_to");
        let r = classify_relation("Has Price Change").unwrap();
        assert_eq!(r.name(), "has_price_change");
        assert!(r.is_core());
    }

    #[test]
    fn classify_rejects_malformed() {
        assert!(matches!(classify_relation("9lives"), Err(ModelError::MalformedRelation(_))));
        assert!(matches!(classify_relation("has/trend"), Err(ModelError::MalformedRelation(_))));
        assert!(classify_relation("   ").is_err());
    }

    #[test]
    fn every_core_token_is_core() {
        for t in CORE_RELATIONS {
            assert!(classify_relation(t).unwrap().is_core(), "{t}");
            assert!(classify_relation(&t.to_uppercase().replace('_', " ")).unwrap().is_core());
        }
    }

    #[test]
    fn sentiment_triples_enforce_range() {
        let rel = classify_relation("has_sentiment_signal").unwrap();
        let t = Triple::from_parts("Ethereum", rel.clone(), "8").unwrap();
        assert_eq!(t.sentiment_value(), Sentiment::new(8).ok());
        assert_eq!(
            Triple::from_parts("Ethereum", rel.clone(), "11"),
            Err(ModelError::SentimentOutOfRange(11))
        );
        assert!(matches!(
            Triple::from_parts("Ethereum", rel, "bullish"),
            Err(ModelError::NonIntegerSentiment(_))
        ));
    }

    #[test]
    fn object_classification() {
        let t = Triple::from_parts("Ethereum", classify_relation("has_price_change").unwrap(), "$4,000").unwrap();
        assert_eq!(t.object, ObjectValue::Literal("$4,000".into()));
        let t = Triple::from_parts("Solana", classify_relation("involved_in").unwrap(), "competition with Ethereum").unwrap();
        assert_eq!(t.object, ObjectValue::Entity("competition with Ethereum".into()));
        let t = Triple::from_parts("Bitcoin", classify_relation("has_price_change").unwrap(), "-2.8%").unwrap();
        assert!(matches!(t.object, ObjectValue::Literal(_)));
    }

    #[test]
    fn sentiment_tokens() {
        assert_eq!(parse_sentiment_token("+8"), Some(8));
        assert_eq!(parse_sentiment_token("−6"), Some(-6));
        assert_eq!(parse_sentiment_token(" 0 "), Some(0));
        assert_eq!(parse_sentiment_token("7.0"), Some(7));
        assert_eq!(parse_sentiment_token("7.5"), None);
        assert_eq!(parse_sentiment_token("high"), None);
    }

    #[test]
    fn graph_dedups_and_indexes() {
        let mut g = KnowledgeGraph::new("a");
        let rel = classify_relation("involved_in").unwrap();
        assert!(g.insert(Triple::from_parts("Circle", rel.clone(), "IPO").unwrap()));
        assert!(!g.insert(Triple::from_parts("circle ", rel.clone(), "ipo").unwrap()));
        assert!(g.insert(Triple::from_parts("Solana", rel, "Circle").unwrap()));
        assert_eq!(g.len(), 2);
        assert_eq!(g.entity_index()["circle"], vec![0, 1]);
        assert_eq!(g.entity_index()["ipo"], vec![0]);
    }

    #[test]
    fn entity_type_inference() {
        assert_eq!(EntityType::infer("Ethereum (ETH)"), EntityType::Cryptocurrency);
        assert_eq!(EntityType::infer("Coinbase"), EntityType::Exchange);
        assert_eq!(EntityType::infer("GENIUS Act"), EntityType::RegulationOrLaw);
        assert_eq!(EntityType::infer("Riot Platforms"), EntityType::Organization);
        assert_eq!(EntityType::infer("Republican skeptics"), EntityType::Other);
    }

    #[test]
    fn stack_report_invariants() {
        assert_eq!(
            StackReport::new(2, StackSource::GraphList, vec![], vec![], vec![], " "),
            Err(ModelError::EmptyConclusion)
        );
        assert_eq!(
            StackReport::new(3, StackSource::TextList, vec![], vec![], vec![], "x"),
            Err(ModelError::LevelSourceMismatch(StackSource::TextList))
        );
        assert!(StackReport::new(3, StackSource::Merged, vec![], vec![], vec![], "x").is_ok());
        assert!(StackReport::new(1, StackSource::Merged, vec![], vec![], vec![], "x").is_err());
    }

    #[test]
    fn parenthetical_stripping() {
        assert_eq!(strip_parenthetical("ethereum (eth)"), "ethereum");
        assert_eq!(strip_parenthetical("(eth)"), "(eth)");
        assert_eq!(strip_parenthetical("crypto in general"), "crypto in general");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(raw in "[ \\tA-Za-z0-9()]{0,30}") {
                if let Ok(n) = normalize_entity(&raw) {
                    let again = normalize_entity(&n.display).unwrap();
                    prop_assert_eq!(again.key, n.key);
                    prop_assert_eq!(again.display, n.display);
                }
            }

            #[test]
            fn core_iff_member(token in "[a-z][a-z_]{0,20}") {
                let r = classify_relation(&token).unwrap();
                prop_assert_eq!(r.is_core(), CORE_RELATIONS.contains(&r.name()));
            }

            #[test]
            fn clamp_matches_min_max(v in -1000i64..1000) {
                let (s, clamped) = Sentiment::clamped(v);
                prop_assert_eq!(s.value(), v.max(-10).min(10));
                prop_assert_eq!(clamped, !(-10..=10).contains(&v));
            }
        }
    }
}
