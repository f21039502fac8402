//! Fine-tuning corpus export: instruction records rendered into the chat
//! template, one `{"text": ...}` object per line, plus the trainer settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TaskKind;
use crate::prompt::{render_training_record, InstructionRecord, DEFAULT_SYSTEM};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("input holds no records")]
    NoRecords,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    task: TaskKind,
    input_text: String,
    response: String,
    #[serde(default)]
    system: Option<String>,
}

#[derive(Serialize)]
struct TextLine<'a> {
    text: &'a str,
}

/// Trainer arguments written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub per_device_train_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub per_device_eval_batch_size: u32,
    pub eval_strategy: String,
    pub eval_steps: u32,
    pub save_steps: u32,
    pub logging_steps: u32,
    pub num_train_epochs: u32,
    pub save_strategy: String,
    pub learning_rate: f64,
    pub fp16: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            per_device_train_batch_size: 2,
            gradient_accumulation_steps: 4,
            per_device_eval_batch_size: 2,
            eval_strategy: "steps".into(),
            eval_steps: 500,
            save_steps: 500,
            logging_steps: 500,
            num_train_epochs: 7,
            save_strategy: "steps".into(),
            learning_rate: 3e-5,
            fp16: true,
        }
    }
}

/// Parses line-delimited records (`task`, `input_text`, `response`, and
/// optionally `system`). Blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<InstructionRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| CorpusError::MalformedRecord { line: i + 1, detail };
        let row: RecordLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let mut rec = InstructionRecord::new(row.task, row.input_text, row.response);
        rec.system = row.system.unwrap_or_else(|| DEFAULT_SYSTEM.to_string());
        // Validate now so the line number can be reported.
        render_training_record(&rec).map_err(|e| bad(e.to_string()))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(CorpusError::NoRecords);
    }
    Ok(out)
}

/// Renders records to the corpus format.
pub fn render_corpus(records: &[InstructionRecord]) -> Result<String, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::NoRecords);
    }
    let mut out = String::new();
    for (i, rec) in records.iter().enumerate() {
        let text = render_training_record(rec).map_err(|e| CorpusError::MalformedRecord {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push_str(&serde_json::to_string(&TextLine { text: &text }).expect("string serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Sidecar path for a corpus file: `corpus.jsonl` -> `corpus.training_args.json`.
pub fn sidecar_path(corpus: &Path) -> PathBuf {
    let stem = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "corpus".into());
    corpus.with_file_name(format!("{stem}.training_args.json"))
}

/// Reads `input`, writes the corpus to `output` and the trainer settings
/// beside it. Nothing is written when the input has no valid records.
/// Returns the record count.
pub fn export_dataset(input: &Path, output: &Path) -> Result<usize, CorpusError> {
    let text = fs::read_to_string(input).map_err(|e| CorpusError::Io(format!("{}: {e}", input.display())))?;
    let records = parse_records(&text)?;
    let corpus = render_corpus(&records)?;
    let mut config = serde_json::to_string_pretty(&TrainingConfig::default()).expect("config serializes");
    config.push('\n');
    let write = |path: &Path, body: &str| {
        fs::write(path, body).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
    };
    write(output, &corpus)?;
    write(&sidecar_path(output), &config)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(task: &str, input: &str, response: &str) -> String {
        serde_json::json!({"task": task, "input_text": input, "response": response}).to_string()
    }

    #[test]
    fn one_record() {
        let records = parse_records(&line("graph_summary", "news", "A — has_trend — up")).unwrap();
        let corpus = render_corpus(&records).unwrap();
        assert_eq!(corpus.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(corpus.trim_end()).unwrap();
        let text = v["text"].as_str().unwrap();
        assert!(text.contains("<<SYS>>"));
        assert!(text.ends_with("</s>"));
        assert_eq!(
            text,
            "<s>[INST] <<SYS>>\nYou are an expert in analyzing cryptocurrency news.\n<</SYS>>\n\n\
             Generate a knowledge graph from cryptocurrency news:\nnews [/INST] A — has_trend — up </s>"
        );
    }

    #[test]
    fn bad_lines_are_numbered() {
        let input = format!("{}\n\n{{\"task\":\"nope\"}}\n", line("stack_list", "x", "y"));
        assert!(matches!(parse_records(&input), Err(CorpusError::MalformedRecord { line: 3, .. })));
        let empty_response = line("stack_list", "x", "");
        assert!(matches!(
            parse_records(&empty_response),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        let output = dir.path().join("out.jsonl");
        fs::write(&input, "\n\n").unwrap();
        assert_eq!(export_dataset(&input, &output), Err(CorpusError::NoRecords));
        assert!(!output.exists());
        assert!(!sidecar_path(&output).exists());
    }

    #[test]
    fn export_is_deterministic_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        fs::write(&input, [line("text_summary", "a", "b"), line("stack_merge", "c", "d")].join("\n")).unwrap();
        let out1 = dir.path().join("one.jsonl");
        let out2 = dir.path().join("two.jsonl");
        assert_eq!(export_dataset(&input, &out1).unwrap(), 2);
        export_dataset(&input, &out2).unwrap();
        assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
        let cfg: TrainingConfig =
            serde_json::from_str(&fs::read_to_string(sidecar_path(&out1)).unwrap()).unwrap();
        assert_eq!(cfg, TrainingConfig::default());
        assert_eq!(sidecar_path(&out1).file_name().unwrap(), "one.training_args.json");
    }

    #[test]
    fn training_defaults() {
        let c = TrainingConfig::default();
        assert_eq!(c.learning_rate, 3e-5);
        assert_eq!(c.num_train_epochs, 7);
        assert_eq!(c.per_device_train_batch_size * c.gradient_accumulation_steps, 8);
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["learning_rate"].as_f64(), Some(3e-5));
        assert_eq!(v["fp16"], true);
    }
}
