//! Reading a finished run back from its checkpoint directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StackReport;
use crate::parse::{parse_stack_json, render_stack_text};
use crate::pipeline::{RunState, UnitStatus, FEATURES, MANIFEST, MERGED_UNIT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("run {0} has no level-3 report")]
    RunIncomplete(String),
    #[error("run directory {0} not found")]
    UnknownRun(String),
    #[error("{0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub entity: String,
    pub n_observations: usize,
    pub aggregate_score: Option<f64>,
    pub contradiction: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub articles: usize,
    pub units_done: usize,
    pub units_failed: usize,
    pub fallbacks: usize,
    pub warnings_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub merged: StackReport,
    pub features: Vec<FeatureRow>,
    pub metadata: RunMetadata,
}

/// `<root>/runs/<run_id>`.
pub fn run_dir(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id)
}

fn read(path: &Path) -> Result<String, ReportError> {
    fs::read_to_string(path).map_err(|e| ReportError::Corrupt(format!("{}: {e}", path.display())))
}

fn require_run(dir: &Path) -> Result<(), ReportError> {
    if dir.join(MANIFEST).is_file() {
        Ok(())
    } else {
        Err(ReportError::UnknownRun(dir.display().to_string()))
    }
}

/// The stored merged report, byte for byte.
pub fn merged_json(dir: &Path) -> Result<String, ReportError> {
    require_run(dir)?;
    let path = dir.join(format!("{MERGED_UNIT}.json"));
    if !path.is_file() {
        return Err(ReportError::RunIncomplete(dir.display().to_string()));
    }
    read(&path)
}

pub fn merged_text(dir: &Path) -> Result<String, ReportError> {
    let json = merged_json(dir)?;
    let report = parse_stack_json(&json).map_err(|e| ReportError::Corrupt(format!("merged report: {e}")))?;
    Ok(render_stack_text(&report.value))
}

pub fn parse_features(csv_text: &str) -> Result<Vec<FeatureRow>, ReportError> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<FeatureRow>, _>>()
        .map_err(|e| ReportError::Corrupt(format!("features: {e}")))
}

pub fn load_bundle(dir: &Path) -> Result<ReportBundle, ReportError> {
    let json = merged_json(dir)?;
    let merged = parse_stack_json(&json)
        .map_err(|e| ReportError::Corrupt(format!("merged report: {e}")))?
        .value;
    let features = parse_features(&read(&dir.join(FEATURES))?)?;
    let state = RunState::resume(dir)
        .map_err(|e| ReportError::Corrupt(e.to_string()))?
        .ok_or_else(|| ReportError::UnknownRun(dir.display().to_string()))?;
    let units = state.units();
    let metadata = RunMetadata {
        run_id: state.run_id.clone(),
        articles: state.articles.len(),
        units_done: units.values().filter(|r| r.status == UnitStatus::Done).count(),
        units_failed: units.values().filter(|r| r.status == UnitStatus::Failed).count(),
        fallbacks: units.values().filter(|r| r.fallback).count(),
        warnings_total: state.warning_total(),
    };
    Ok(ReportBundle {
        merged,
        features,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Gateway, MockBackend};
    use crate::model::{NewsArticle, TaskKind};
    use crate::pipeline::{build_store, Pipeline, PipelineConfig};
    use crate::prompt::render_list_block;
    use std::sync::Arc;

    const GRAPH: &str = include_str!("../fixtures/a2_2_graph.txt");
    const PROSE: &str = include_str!("../fixtures/a2_2_text.txt");
    const PROSE_JSON: &str = include_str!("../fixtures/a2_2_text.json");

    fn finished_run(root: &Path, merged: &str) -> String {
        let art = NewsArticle::new("n1", "Bitcoin slid below support.").unwrap();
        let mock = MockBackend::new()
            .with_response(TaskKind::GraphSummary, &art.body, GRAPH)
            .with_response(TaskKind::TextSummary, &art.body, PROSE)
            .with_response(TaskKind::JsonOfSummary, PROSE, PROSE_JSON)
            .with_fallback(TaskKind::JsonOfSummary, "no")
            .with_response(
                TaskKind::StackList,
                &render_list_block(&[GRAPH], 1).unwrap(),
                include_str!("../fixtures/a3_2_stack_graph.txt"),
            )
            .with_fallback(TaskKind::StackList, include_str!("../fixtures/a3_2_stack_text.txt"))
            .with_fallback(TaskKind::StackMerge, merged);
        let gw = Gateway::new(Arc::new(mock), 0);
        let config = PipelineConfig {
            checkpoint_dir: Some(root.to_path_buf()),
            ..Default::default()
        };
        let state = Pipeline::new(&config, &gw).run(&[art]).unwrap();
        let store = build_store(&state, config.store_config());
        // -4 from the graph, -5 from the text JSON.
        assert_eq!(store.aggregate_sentiment("Riot Platforms"), Some(-4.5));
        state.run_id
    }

    #[test]
    fn bundle_matches_store_export() {
        let root = tempfile::tempdir().unwrap();
        let id = finished_run(root.path(), include_str!("../fixtures/s527_merged.json"));
        let dir = run_dir(root.path(), &id);
        let json = merged_json(&dir).unwrap();
        assert!(json.contains("\"contradictory_trend\""));
        let bundle = load_bundle(&dir).unwrap();
        let csv_text = fs::read_to_string(dir.join(FEATURES)).unwrap();
        assert_eq!(bundle.features, parse_features(&csv_text).unwrap());
        let btc = bundle.features.iter().find(|r| r.entity == "Bitcoin").unwrap();
        assert_eq!(btc.n_observations, 2);
        assert_eq!(btc.aggregate_score, Some(-6.0));
        assert_eq!(bundle.metadata.articles, 1);
        assert_eq!(bundle.metadata.units_failed, 0);
        assert_eq!(bundle.metadata.fallbacks, 1);
        assert!(bundle.merged.mentions_contradictory("Bitcoin"));
    }

    #[test]
    fn text_sections_in_order_with_empty_marker() {
        let root = tempfile::tempdir().unwrap();
        let merged = r#"{"upward_trend":[{"Bitcoin":"ETF inflows"}],"downward_trend":[],"contradictory_trend":[],"conclusion":"Calm."}"#;
        let id = finished_run(root.path(), merged);
        let text = merged_text(&run_dir(root.path(), &id)).unwrap();
        let up = text.find("Upward trend:").unwrap();
        let down = text.find("Downward trend:").unwrap();
        let contra = text.find("Contradictory trend:").unwrap();
        let concl = text.find("Conclusion:").unwrap();
        assert!(up < down && down < contra && contra < concl);
        assert!(text.contains("Downward trend:\nNone identified\n"));
        assert!(text.contains("Bitcoin - ETF inflows\n"));
    }

    #[test]
    fn missing_or_incomplete_runs() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(merged_json(&run_dir(root.path(), "nope")), Err(ReportError::UnknownRun(_))));
        let dir = run_dir(root.path(), "half");
        RunState::open(&dir, "half", vec![]).unwrap();
        assert!(matches!(merged_json(&dir), Err(ReportError::RunIncomplete(_))));
    }
}
