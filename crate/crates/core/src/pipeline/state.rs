use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::llm::input_hash;
use crate::model::{KnowledgeGraph, StackReport, StackSource, TextSummary};
use crate::parse::{parse_graph_json, parse_graph_lines, parse_stack_json, parse_stack_text, parse_text_summary_json};
use crate::store::Channel;

pub const MANIFEST: &str = "manifest.json";
pub const FEATURES: &str = "features.csv";
pub const GRAPH_LOG: &str = "graph.jsonl";
pub const MERGED_UNIT: &str = "level3/merged";

/// The four level-1 outputs kept per article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level1Kind {
    GraphSummary,
    GraphJson,
    TextSummary,
    TextJson,
}

impl Level1Kind {
    pub const ALL: [Level1Kind; 4] = [
        Level1Kind::GraphSummary,
        Level1Kind::GraphJson,
        Level1Kind::TextSummary,
        Level1Kind::TextJson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Level1Kind::GraphSummary => "graph_summary",
            Level1Kind::GraphJson => "graph_json",
            Level1Kind::TextSummary => "text_summary",
            Level1Kind::TextJson => "text_json",
        }
    }

    pub fn unit_id(self, article_id: &str) -> String {
        format!("level1/{}.{}", file_safe(article_id), self.name())
    }
}

pub fn channel_name(channel: Channel) -> &'static str {
    match channel {
        Channel::Graph => "graph",
        Channel::Text => "text",
    }
}

pub fn channel_source(channel: Channel) -> StackSource {
    match channel {
        Channel::Graph => StackSource::GraphList,
        Channel::Text => StackSource::TextList,
    }
}

/// Level-2 unit id. Round 0 batches are `<channel>.<batch>`; re-stacking
/// rounds add an `r<round>` segment.
pub fn stack_unit_id(channel: Channel, round: usize, batch: usize) -> String {
    if round == 0 {
        format!("level2/{}.{batch}", channel_name(channel))
    } else {
        format!("level2/{}.r{round}.{batch}", channel_name(channel))
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub status: UnitStatus,
    /// Hash of the generation input; a done unit is reused only while its
    /// input is unchanged.
    pub input_sha256: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
    #[serde(default)]
    pub warnings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    run_id: String,
    articles: Vec<String>,
    units: BTreeMap<String, UnitRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArticleArtifacts {
    pub graph_text: Option<String>,
    pub graph: Option<KnowledgeGraph>,
    /// Graph from the JSON twin, or the local re-serialization fallback.
    pub graph_json: Option<KnowledgeGraph>,
    pub text_prose: Option<String>,
    pub text: Option<TextSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackUnit {
    pub channel: Channel,
    pub round: usize,
    pub batch: usize,
    pub raw: String,
    pub report: StackReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedUnit {
    pub raw: String,
    pub report: StackReport,
}

/// Everything a run has produced so far, mirrored to disk when a run
/// directory is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub run_id: String,
    pub articles: Vec<String>,
    pub level1: BTreeMap<String, ArticleArtifacts>,
    pub level2: BTreeMap<String, StackUnit>,
    /// Unit id of the single stack each channel was reduced to.
    pub final_stacks: BTreeMap<Channel, String>,
    pub level3: Option<MergedUnit>,
    units: BTreeMap<String, UnitRecord>,
    dir: Option<PathBuf>,
}

impl RunState {
    pub fn new(run_id: impl Into<String>, articles: Vec<String>) -> Self {
        Self {
            run_id: run_id.into(),
            level1: articles.iter().map(|a| (a.clone(), ArticleArtifacts::default())).collect(),
            articles,
            level2: BTreeMap::new(),
            final_stacks: BTreeMap::new(),
            level3: None,
            units: BTreeMap::new(),
            dir: None,
        }
    }

    /// Opens `dir` as this run's checkpoint directory, loading whatever a
    /// previous attempt left there. An empty or missing directory gives a
    /// fresh state.
    pub fn open(dir: &Path, run_id: &str, articles: Vec<String>) -> Result<Self, PipelineError> {
        let mut state = match Self::resume(dir)? {
            Some(prev) if prev.run_id == run_id => {
                let mut s = prev;
                for a in &articles {
                    s.level1.entry(a.clone()).or_default();
                }
                s.articles = articles;
                s
            }
            Some(prev) => {
                return Err(PipelineError::CorruptCheckpoint(format!(
                    "{} belongs to run {}, not {run_id}",
                    dir.display(),
                    prev.run_id
                )))
            }
            None => Self::new(run_id, articles),
        };
        state.dir = Some(dir.to_path_buf());
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        state.write_manifest()?;
        Ok(state)
    }

    /// Rebuilds a state from a checkpoint directory by re-parsing every
    /// stored raw response. `None` when there is no manifest.
    pub fn resume(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| PipelineError::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
        let mut state = Self::new(manifest.run_id, manifest.articles);
        state.units = manifest.units;
        state.dir = Some(dir.to_path_buf());
        state.reload()?;
        Ok(Some(state))
    }

    fn reload(&mut self) -> Result<(), PipelineError> {
        for article in self.articles.clone() {
            let mut art = ArticleArtifacts::default();
            if let Some(raw) = self.load_done(&Level1Kind::GraphSummary.unit_id(&article))? {
                let graph = parse_graph_lines(&raw).map_err(|e| corrupt(&article, e))?.value;
                art.graph = Some(graph.with_article_id(&article));
                art.graph_text = Some(raw);
            }
            let json_unit = Level1Kind::GraphJson.unit_id(&article);
            if self.is_fallback(&json_unit) {
                art.graph_json = art.graph.clone();
            } else if let Some(raw) = self.load_done(&json_unit)? {
                let graph = parse_graph_json(&raw).map_err(|e| corrupt(&json_unit, e))?.value;
                art.graph_json = Some(graph.with_article_id(&article));
            }
            art.text_prose = self.load_done(&Level1Kind::TextSummary.unit_id(&article))?;
            let text_unit = Level1Kind::TextJson.unit_id(&article);
            if let Some(raw) = self.load_done(&text_unit)? {
                let mut summary = parse_text_summary_json(&raw).map_err(|e| corrupt(&text_unit, e))?.value;
                summary.article_id = article.clone();
                art.text = Some(summary);
            }
            self.level1.insert(article, art);
        }
        let stack_units: Vec<String> = self
            .units
            .keys()
            .filter(|u| u.starts_with("level2/"))
            .cloned()
            .collect();
        for unit in stack_units {
            let Some(raw) = self.load_done(&unit)? else { continue };
            let (channel, round, batch) = parse_stack_unit_id(&unit)
                .ok_or_else(|| PipelineError::CorruptCheckpoint(format!("bad unit id {unit}")))?;
            let report = parse_stack_text(&raw, channel_source(channel))
                .map_err(|e| corrupt(&unit, e))?
                .value;
            self.level2.insert(unit, StackUnit { channel, round, batch, raw, report });
        }
        if let Some(raw) = self.load_done(MERGED_UNIT)? {
            let report = parse_stack_json(&raw).map_err(|e| corrupt(MERGED_UNIT, e))?.value;
            self.level3 = Some(MergedUnit { raw, report });
        }
        Ok(())
    }

    fn load_done(&self, unit: &str) -> Result<Option<String>, PipelineError> {
        match self.units.get(unit) {
            Some(r) if r.status == UnitStatus::Done && !r.fallback => {}
            _ => return Ok(None),
        }
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(format!("{unit}.txt"));
        fs::read_to_string(&path)
            .map(Some)
            .map_err(|e| PipelineError::CorruptCheckpoint(format!("{}: {e}", path.display())))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn units(&self) -> &BTreeMap<String, UnitRecord> {
        &self.units
    }

    pub fn unit(&self, unit: &str) -> Option<&UnitRecord> {
        self.units.get(unit)
    }

    /// True when `unit` finished on exactly this input.
    pub fn is_done(&self, unit: &str, input: &str) -> bool {
        matches!(self.units.get(unit), Some(r) if r.status == UnitStatus::Done && r.input_sha256 == input_hash(input))
    }

    pub fn is_fallback(&self, unit: &str) -> bool {
        matches!(self.units.get(unit), Some(r) if r.status == UnitStatus::Done && r.fallback)
    }

    pub fn warning_total(&self) -> usize {
        self.units.values().map(|r| r.warnings).sum()
    }

    /// Stores a unit's files, then its record in the manifest.
    pub(crate) fn commit(&mut self, unit: &str, record: UnitRecord, files: &[(&str, &str)]) -> Result<(), PipelineError> {
        if let Some(dir) = self.dir.clone() {
            for (ext, contents) in files {
                write_atomic(&dir.join(format!("{unit}.{ext}")), contents)?;
            }
        }
        self.units.insert(unit.to_string(), record);
        self.write_manifest()
    }

    pub(crate) fn write_file(&self, name: &str, contents: &str) -> Result<(), PipelineError> {
        match &self.dir {
            Some(dir) => write_atomic(&dir.join(name), contents),
            None => Ok(()),
        }
    }

    fn write_manifest(&self) -> Result<(), PipelineError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let manifest = Manifest {
            run_id: self.run_id.clone(),
            articles: self.articles.clone(),
            units: self.units.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST), &text)
    }

    pub fn final_stack(&self, channel: Channel) -> Option<&StackUnit> {
        self.level2.get(self.final_stacks.get(&channel)?)
    }
}

fn parse_stack_unit_id(unit: &str) -> Option<(Channel, usize, usize)> {
    let rest = unit.strip_prefix("level2/")?;
    let mut parts = rest.split('.');
    let channel = match parts.next()? {
        "graph" => Channel::Graph,
        "text" => Channel::Text,
        _ => return None,
    };
    let second = parts.next()?;
    let (round, batch) = match parts.next() {
        Some(b) => (second.strip_prefix('r')?.parse().ok()?, b.parse().ok()?),
        None => (0, second.parse().ok()?),
    };
    Some((channel, round, batch))
}

fn corrupt(unit: &str, err: impl std::fmt::Display) -> PipelineError {
    PipelineError::CorruptCheckpoint(format!("{unit}: stored response no longer parses: {err}"))
}

fn io_error(path: &Path, err: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {err}", path.display()))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| io_error(&tmp, e))?;
    f.sync_all().map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}
