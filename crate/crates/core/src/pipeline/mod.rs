//! Three-level run: per-article summaries, stacking of batches per channel,
//! and the final merge of the two channel stacks.

mod state;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{input_hash, BackendConfig, Gateway, GenerationRequest, GenerationResult};
use crate::model::{NewsArticle, TaskKind};
use crate::parse::{
    parse_graph_json, parse_graph_lines, parse_stack_json, parse_stack_text, parse_text_summary_json,
    serialize_graph_json, serialize_stack_json, serialize_text_summary_json,
};
use crate::prompt::{render_inference_prompt, render_list_block, render_stack_pair, PromptQuery, DEFAULT_SYSTEM};
use crate::store::{Aggregation, Channel, ConsolidatedGraph, GraphFormat, StoreConfig};

pub use state::{
    channel_name, stack_unit_id, ArticleArtifacts, Level1Kind, MergedUnit, RunState, StackUnit, UnitRecord, UnitStatus,
    FEATURES, GRAPH_LOG, MANIFEST, MERGED_UNIT,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("no articles to analyze")]
    NoArticles,
    #[error("every level-1 unit failed")]
    AllUnitsFailed,
    #[error("no level-1 summaries available for stacking")]
    NoLevel1Artifacts,
    #[error("no {0} stack available to merge")]
    MissingStack(String),
    #[error("{unit} failed: {detail}")]
    UnitFailed { unit: String, detail: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn default_batch_size() -> usize {
    5
}

fn default_concurrency() -> usize {
    4
}

fn default_tasks() -> BTreeSet<TaskKind> {
    TaskKind::ALL.into_iter().collect()
}

fn default_system() -> String {
    DEFAULT_SYSTEM.to_string()
}

fn default_threshold() -> i64 {
    3
}

/// Run settings. Deserializes from one flat object that also carries the
/// backend keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    /// Root under which `runs/<run_id>/` is written. `None` keeps the run
    /// in memory.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default = "default_tasks")]
    pub tasks_enabled: BTreeSet<TaskKind>,
    #[serde(default = "default_system")]
    pub system: String,
    #[serde(default = "default_threshold")]
    pub contradiction_threshold: i64,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(flatten)]
    pub backend: BackendConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            batch_size: default_batch_size(),
            concurrency_limit: default_concurrency(),
            checkpoint_dir: None,
            tasks_enabled: default_tasks(),
            system: default_system(),
            contradiction_threshold: default_threshold(),
            aggregation: Aggregation::Mean,
            backend: BackendConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.batch_size == 0 {
            return Err(PipelineError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(PipelineError::InvalidConfig("concurrency_limit must be at least 1".into()));
        }
        if self.contradiction_threshold < 1 {
            return Err(PipelineError::InvalidConfig("contradiction_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            threshold: self.contradiction_threshold,
            aggregation: self.aggregation,
        }
    }

    pub fn channel_enabled(&self, channel: Channel) -> bool {
        self.tasks_enabled.contains(&match channel {
            Channel::Graph => TaskKind::GraphSummary,
            Channel::Text => TaskKind::TextSummary,
        })
    }

    fn channels(&self) -> Vec<Channel> {
        [Channel::Graph, Channel::Text]
            .into_iter()
            .filter(|c| self.channel_enabled(*c))
            .collect()
    }
}

/// Consecutive chunks of `k` in input order; the last may be shorter.
/// `k = 0` is treated as 1.
pub fn make_batches<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    items.chunks(k.max(1)).map(<[T]>::to_vec).collect()
}

/// Stable id for a run over these articles with these settings, so that
/// re-running the same command resumes the same checkpoint.
pub fn derive_run_id(config: &PipelineConfig, backend_id: &str, articles: &[NewsArticle]) -> String {
    let mut h = Sha256::new();
    for a in articles {
        h.update(a.id.as_bytes());
        h.update([0]);
        h.update(input_hash(&a.body).as_bytes());
        h.update([0]);
    }
    h.update(config.batch_size.to_le_bytes());
    for t in &config.tasks_enabled {
        h.update(t.as_str().as_bytes());
        h.update([0]);
    }
    h.update(config.system.as_bytes());
    h.update([0]);
    h.update(backend_id.as_bytes());
    h.update([0]);
    h.update(config.backend.model_id.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

struct Job {
    unit: String,
    task: TaskKind,
    input: String,
    article: Option<String>,
    kind: Option<Level1Kind>,
}

pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    gateway: &'a Gateway,
    run_id: Option<String>,
    generations: AtomicUsize,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a PipelineConfig, gateway: &'a Gateway) -> Self {
        Self {
            config,
            gateway,
            run_id: None,
            generations: AtomicUsize::new(0),
        }
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = Some(run_id.into());
        self
    }

    /// Generations issued through this pipeline so far.
    pub fn generation_count(&self) -> usize {
        self.generations.load(Ordering::SeqCst)
    }

    pub fn run_id_for(&self, articles: &[NewsArticle]) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| derive_run_id(self.config, self.gateway.backend_id(), articles))
    }

    /// Opens (or resumes) the run's state, on disk when a checkpoint
    /// directory is configured.
    pub fn open_state(&self, articles: &[NewsArticle]) -> Result<RunState, PipelineError> {
        let run_id = self.run_id_for(articles);
        let ids = articles.iter().map(|a| a.id.clone()).collect();
        match &self.config.checkpoint_dir {
            Some(root) => RunState::open(&root.join("runs").join(&run_id), &run_id, ids),
            None => Ok(RunState::new(run_id, ids)),
        }
    }

    pub fn run(&self, articles: &[NewsArticle]) -> Result<RunState, PipelineError> {
        self.run_until(articles, 3)
    }

    /// Runs levels 1 through `last_level`, resuming from any checkpoint.
    pub fn run_until(&self, articles: &[NewsArticle], last_level: u8) -> Result<RunState, PipelineError> {
        self.config.validate()?;
        let mut state = self.open_state(articles)?;
        self.run_level1(articles, &mut state)?;
        if last_level < 2 {
            return Ok(state);
        }
        if !self.config.tasks_enabled.contains(&TaskKind::StackList) {
            log::warn!("stack_list disabled; stopping after level 1");
            return Ok(state);
        }
        self.run_level2(&mut state)?;
        if last_level < 3 {
            return Ok(state);
        }
        if !self.config.tasks_enabled.contains(&TaskKind::StackMerge) {
            log::warn!("stack_merge disabled; stopping after level 2");
        } else if self.config.channels().len() < 2 {
            log::warn!("only one channel enabled; level 3 needs both and is skipped");
        } else {
            self.run_level3(&mut state)?;
        }
        Ok(state)
    }

    fn generate(&self, jobs: &[Job]) -> Vec<Result<GenerationResult, String>> {
        let limit = self.config.concurrency_limit.max(1).min(jobs.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<GenerationResult, String>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..limit {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let result = self.generate_one(job);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
            .collect()
    }

    fn generate_one(&self, job: &Job) -> Result<GenerationResult, String> {
        let prompt = render_inference_prompt(PromptQuery::for_task(job.task), &job.input, &self.config.system)
            .map_err(|e| e.to_string())?;
        self.generations.fetch_add(1, Ordering::SeqCst);
        log::info!("generating {} ({})", job.unit, job.task);
        self.gateway
            .generate(&GenerationRequest {
                task: job.task,
                input: &job.input,
                prompt: &prompt,
            })
            .map_err(|e| e.to_string())
    }

    /// Graph and text summaries for every article, then the JSON twin of
    /// each. Individual failures are recorded and skipped.
    pub fn run_level1(&self, articles: &[NewsArticle], state: &mut RunState) -> Result<(), PipelineError> {
        if articles.is_empty() {
            return Err(PipelineError::NoArticles);
        }
        let tasks = &self.config.tasks_enabled;
        let mut jobs = Vec::new();
        for a in articles {
            state.level1.entry(a.id.clone()).or_default();
            for (kind, task) in [
                (Level1Kind::GraphSummary, TaskKind::GraphSummary),
                (Level1Kind::TextSummary, TaskKind::TextSummary),
            ] {
                let unit = kind.unit_id(&a.id);
                if tasks.contains(&task) && !state.is_done(&unit, &a.body) {
                    jobs.push(Job {
                        unit,
                        task,
                        input: a.body.clone(),
                        article: Some(a.id.clone()),
                        kind: Some(kind),
                    });
                }
            }
        }
        let results = self.generate(&jobs);
        for (job, result) in jobs.iter().zip(results) {
            apply_level1(state, job, result)?;
        }

        let json_on = tasks.contains(&TaskKind::JsonOfSummary);
        let mut jobs = Vec::new();
        for a in articles {
            let art = &state.level1[&a.id];
            let sources = [
                (Level1Kind::GraphJson, art.graph_text.clone()),
                (Level1Kind::TextJson, art.text_prose.clone()),
            ];
            for (kind, source) in sources {
                let Some(source) = source else { continue };
                let unit = kind.unit_id(&a.id);
                if state.is_done(&unit, &source) {
                    continue;
                }
                if json_on {
                    jobs.push(Job {
                        unit,
                        task: TaskKind::JsonOfSummary,
                        input: source,
                        article: Some(a.id.clone()),
                        kind: Some(kind),
                    });
                } else if kind == Level1Kind::GraphJson {
                    graph_json_fallback(state, &a.id, &source, None, "json_of_summary disabled")?;
                }
            }
        }
        let results = self.generate(&jobs);
        for (job, result) in jobs.iter().zip(results) {
            apply_level1(state, job, result)?;
        }

        let any = state.level1.values().any(|a| a.graph.is_some() || a.text_prose.is_some());
        if !any {
            return Err(PipelineError::AllUnitsFailed);
        }
        self.write_store_outputs(state)
    }

    /// Stacks each channel's level-1 summaries batch by batch, re-stacking
    /// the batch results until one stack per channel remains.
    pub fn run_level2(&self, state: &mut RunState) -> Result<(), PipelineError> {
        let channels = self.config.channels();
        let mut any_input = false;
        for channel in channels {
            let mut items: Vec<String> = state
                .articles
                .iter()
                .filter_map(|a| {
                    let art = state.level1.get(a)?;
                    match channel {
                        Channel::Graph => art.graph.as_ref().and(art.graph_text.clone()),
                        Channel::Text => art.text_prose.clone(),
                    }
                })
                .collect();
            state.final_stacks.remove(&channel);
            if items.is_empty() {
                log::warn!("{} channel has no level-1 summaries", channel_name(channel));
                continue;
            }
            any_input = true;
            let mut round = 0;
            loop {
                let k = if round == 0 { self.config.batch_size } else { self.config.batch_size.max(2) };
                let batches = make_batches(&items, k);
                let mut inputs = Vec::with_capacity(batches.len());
                let mut jobs = Vec::new();
                for (b, batch) in batches.iter().enumerate() {
                    let input = render_list_block(batch, 1).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
                    let unit = stack_unit_id(channel, round, b);
                    if !(state.is_done(&unit, &input) && state.level2.contains_key(&unit)) {
                        jobs.push(Job {
                            unit: unit.clone(),
                            task: TaskKind::StackList,
                            input: input.clone(),
                            article: None,
                            kind: None,
                        });
                    }
                    inputs.push((unit, input));
                }
                let results = self.generate(&jobs);
                for (job, result) in jobs.iter().zip(results) {
                    apply_stack(state, job, result, channel, round)?;
                }
                let done: Vec<String> = inputs
                    .iter()
                    .filter(|(unit, input)| state.is_done(unit, input) && state.level2.contains_key(unit))
                    .map(|(unit, _)| unit.clone())
                    .collect();
                match done.len() {
                    0 => {
                        log::warn!("{} channel: every stacking unit failed", channel_name(channel));
                        break;
                    }
                    1 => {
                        state.final_stacks.insert(channel, done[0].clone());
                        break;
                    }
                    n => {
                        round += 1;
                        log::info!("{} channel: re-stacking {n} stacks (depth {round})", channel_name(channel));
                        items = done.iter().map(|u| state.level2[u].raw.clone()).collect();
                    }
                }
            }
        }
        if any_input {
            Ok(())
        } else {
            Err(PipelineError::NoLevel1Artifacts)
        }
    }

    /// Merges the final graph and text stacks into the level-3 report.
    pub fn run_level3(&self, state: &mut RunState) -> Result<(), PipelineError> {
        let graph = state
            .final_stack(Channel::Graph)
            .ok_or_else(|| PipelineError::MissingStack("graph".into()))?
            .raw
            .clone();
        let text = state
            .final_stack(Channel::Text)
            .ok_or_else(|| PipelineError::MissingStack("text".into()))?
            .raw
            .clone();
        let input = render_stack_pair(&graph, &text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if state.is_done(MERGED_UNIT, &input) && state.level3.is_some() {
            return Ok(());
        }
        let job = Job {
            unit: MERGED_UNIT.to_string(),
            task: TaskKind::StackMerge,
            input,
            article: None,
            kind: None,
        };
        let result = self.generate(std::slice::from_ref(&job)).remove(0);
        let hash = input_hash(&job.input);
        let failure = match result {
            Ok(gen) => match parse_stack_json(&gen.text) {
                Ok(report) => {
                    let json = serialize_stack_json(&report.value);
                    state.commit(MERGED_UNIT, done(hash, report.warnings.len()), &[("txt", &gen.text), ("json", &json)])?;
                    state.level3 = Some(MergedUnit {
                        raw: gen.text,
                        report: report.value,
                    });
                    return Ok(());
                }
                Err(e) => {
                    state.commit(MERGED_UNIT, failed(hash, e.to_string()), &[("txt", &gen.text)])?;
                    e.to_string()
                }
            },
            Err(e) => {
                state.commit(MERGED_UNIT, failed(hash, e.clone()), &[])?;
                e
            }
        };
        state.level3 = None;
        Err(PipelineError::UnitFailed {
            unit: MERGED_UNIT.into(),
            detail: failure,
        })
    }

    fn write_store_outputs(&self, state: &RunState) -> Result<(), PipelineError> {
        let store = build_store(state, self.config.store_config());
        state.write_file(FEATURES, &store.export_features())?;
        if let Ok(log) = store.export_graph(GraphFormat::TriplesJsonl) {
            state.write_file(GRAPH_LOG, &log)?;
        }
        Ok(())
    }
}

/// Consolidated graph over the run's level-1 artifacts: each article's
/// graph (from the triple lines) and its structured text summary.
pub fn build_store(state: &RunState, config: StoreConfig) -> ConsolidatedGraph {
    let mut store = ConsolidatedGraph::new(config);
    for id in &state.articles {
        store.register_article(id);
        let Some(art) = state.level1.get(id) else { continue };
        if let Some(g) = &art.graph {
            let _ = store.ingest_graph(id, g);
        }
        if let Some(t) = &art.text {
            let _ = store.ingest_text_summary(id, t);
        }
    }
    store
}

fn done(input_sha256: String, warnings: usize) -> UnitRecord {
    UnitRecord {
        status: UnitStatus::Done,
        input_sha256,
        fallback: false,
        warnings,
        error: None,
    }
}

fn failed(input_sha256: String, error: String) -> UnitRecord {
    log::warn!("unit failed: {error}");
    UnitRecord {
        status: UnitStatus::Failed,
        input_sha256,
        fallback: false,
        warnings: 0,
        error: Some(error),
    }
}

fn apply_level1(state: &mut RunState, job: &Job, result: Result<GenerationResult, String>) -> Result<(), PipelineError> {
    let article = job.article.as_deref().expect("level-1 job has an article");
    let kind = job.kind.expect("level-1 job has a kind");
    let hash = input_hash(&job.input);
    let text = match result {
        Ok(gen) => gen.text,
        Err(e) => {
            if kind == Level1Kind::GraphJson {
                return graph_json_fallback(state, article, &job.input, None, &e);
            }
            clear_artifact(state, article, kind);
            return state.commit(&job.unit, failed(hash, e), &[]);
        }
    };
    match kind {
        Level1Kind::GraphSummary => match parse_graph_lines(&text) {
            Ok(report) => {
                let graph = report.value.with_article_id(article);
                let json = serialize_graph_json(&graph);
                state.commit(&job.unit, done(hash, report.warnings.len()), &[("txt", &text), ("json", &json)])?;
                let art = state.level1.entry(article.to_string()).or_default();
                art.graph = Some(graph);
                art.graph_text = Some(text);
                Ok(())
            }
            Err(e) => {
                clear_artifact(state, article, kind);
                state.commit(&job.unit, failed(hash, e.to_string()), &[("txt", &text)])
            }
        },
        Level1Kind::GraphJson => match parse_graph_json(&text) {
            Ok(report) => {
                let graph = report.value.with_article_id(article);
                let json = serialize_graph_json(&graph);
                state.commit(&job.unit, done(hash, report.warnings.len()), &[("txt", &text), ("json", &json)])?;
                state.level1.entry(article.to_string()).or_default().graph_json = Some(graph);
                Ok(())
            }
            Err(e) => graph_json_fallback(state, article, &job.input, Some(&text), &e.to_string()),
        },
        Level1Kind::TextSummary => {
            if text.trim().is_empty() {
                clear_artifact(state, article, kind);
                return state.commit(&job.unit, failed(hash, "EmptyResponse".into()), &[]);
            }
            state.commit(&job.unit, done(hash, 0), &[("txt", &text)])?;
            state.level1.entry(article.to_string()).or_default().text_prose = Some(text);
            Ok(())
        }
        Level1Kind::TextJson => match parse_text_summary_json(&text) {
            Ok(report) => {
                let mut summary = report.value;
                summary.article_id = article.to_string();
                let json = serialize_text_summary_json(&summary);
                state.commit(&job.unit, done(hash, report.warnings.len()), &[("txt", &text), ("json", &json)])?;
                state.level1.entry(article.to_string()).or_default().text = Some(summary);
                Ok(())
            }
            Err(e) => {
                clear_artifact(state, article, kind);
                state.commit(&job.unit, failed(hash, e.to_string()), &[("txt", &text)])
            }
        },
    }
}

fn clear_artifact(state: &mut RunState, article: &str, kind: Level1Kind) {
    let art = state.level1.entry(article.to_string()).or_default();
    match kind {
        Level1Kind::GraphSummary => {
            art.graph = None;
            art.graph_text = None;
        }
        Level1Kind::GraphJson => art.graph_json = None,
        Level1Kind::TextSummary => art.text_prose = None,
        Level1Kind::TextJson => art.text = None,
    }
}

/// Serializes the graph parsed from the triple lines in place of a JSON
/// twin the model failed to produce.
fn graph_json_fallback(
    state: &mut RunState,
    article: &str,
    source: &str,
    raw: Option<&str>,
    reason: &str,
) -> Result<(), PipelineError> {
    let unit = Level1Kind::GraphJson.unit_id(article);
    let graph = state.level1.get(article).and_then(|a| a.graph.clone());
    let Some(graph) = graph else {
        return state.commit(&unit, failed(input_hash(source), reason.to_string()), &[]);
    };
    log::warn!("{unit}: using local serialization ({reason})");
    let json = serialize_graph_json(&graph);
    let record = UnitRecord {
        status: UnitStatus::Done,
        input_sha256: input_hash(source),
        fallback: true,
        warnings: 1,
        error: Some(reason.to_string()),
    };
    let mut files = vec![("json", json.as_str())];
    if let Some(raw) = raw {
        files.push(("txt", raw));
    }
    state.commit(&unit, record, &files)?;
    state.level1.entry(article.to_string()).or_default().graph_json = Some(graph);
    Ok(())
}

fn apply_stack(
    state: &mut RunState,
    job: &Job,
    result: Result<GenerationResult, String>,
    channel: Channel,
    round: usize,
) -> Result<(), PipelineError> {
    let hash = input_hash(&job.input);
    let batch: usize = job.unit.rsplit('.').next().and_then(|b| b.parse().ok()).unwrap_or(0);
    state.level2.remove(&job.unit);
    let text = match result {
        Ok(gen) => gen.text,
        Err(e) => return state.commit(&job.unit, failed(hash, e), &[]),
    };
    match parse_stack_text(&text, state::channel_source(channel)) {
        Ok(report) => {
            let json = serde_json::to_string_pretty(&report.value).expect("stack report serializes");
            state.commit(&job.unit, done(hash, report.warnings.len()), &[("txt", &text), ("json", &json)])?;
            state.level2.insert(
                job.unit.clone(),
                StackUnit {
                    channel,
                    round,
                    batch,
                    raw: text,
                    report: report.value,
                },
            );
            Ok(())
        }
        Err(e) => state.commit(&job.unit, failed(hash, e.to_string()), &[("txt", &text)]),
    }
}
