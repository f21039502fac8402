use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Backend, GenerationRequest, LlmError};
use crate::model::TaskKind;

/// Returned for calls the script does not cover.
pub const UNSCRIPTED: &str = "UNSCRIPTED";

/// Hex SHA-256 of a generation input; the lookup key for scripted replies.
pub fn input_hash(input: &str) -> String {
    hex::encode(Sha256::digest(input.as_bytes()))
}

/// One line of a mock script file. An entry with neither `input` nor
/// `input_sha256` answers every otherwise unmatched call for its task.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub task: TaskKind,
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub input_sha256: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    /// Path to a file holding the response, relative to the script file.
    #[serde(default)]
    pub response_file: Option<PathBuf>,
}

/// Deterministic scripted backend keyed by (task, input hash).
#[derive(Debug, Default)]
pub struct MockBackend {
    table: HashMap<(TaskKind, String), String>,
    fallback: HashMap<TaskKind, String>,
    echo: bool,
    calls: AtomicUsize,
    per_task: [AtomicUsize; 5],
    unscripted: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, task: TaskKind, input: &str, response: impl Into<String>) -> Self {
        self.table.insert((task, input_hash(input)), response.into());
        self
    }

    pub fn with_hashed_response(mut self, task: TaskKind, hash: &str, response: impl Into<String>) -> Self {
        self.table.insert((task, hash.to_ascii_lowercase()), response.into());
        self
    }

    pub fn with_fallback(mut self, task: TaskKind, response: impl Into<String>) -> Self {
        self.fallback.insert(task, response.into());
        self
    }

    /// Replies with the prompt followed by the scripted text, like servers
    /// that return the whole sequence.
    pub fn echoing(mut self) -> Self {
        self.echo = true;
        self
    }

    pub fn from_entries(entries: Vec<ScriptEntry>, base_dir: &Path) -> Result<Self, LlmError> {
        if entries.is_empty() {
            return Err(LlmError::InvalidConfig("mock script has no entries".into()));
        }
        let mut mock = Self::new();
        for (i, entry) in entries.into_iter().enumerate() {
            let response = match (entry.response, entry.response_file) {
                (Some(text), None) => text,
                (None, Some(file)) => {
                    let path = base_dir.join(file);
                    std::fs::read_to_string(&path).map_err(|e| {
                        LlmError::InvalidConfig(format!("script entry {i}: {}: {e}", path.display()))
                    })?
                }
                _ => {
                    return Err(LlmError::InvalidConfig(format!(
                        "script entry {i} needs exactly one of response, response_file"
                    )))
                }
            };
            mock = match (entry.input, entry.input_sha256) {
                (Some(input), None) => mock.with_response(entry.task, &input, response),
                (None, Some(hash)) => mock.with_hashed_response(entry.task, &hash, response),
                (None, None) => mock.with_fallback(entry.task, response),
                (Some(_), Some(_)) => {
                    return Err(LlmError::InvalidConfig(format!(
                        "script entry {i} has both input and input_sha256"
                    )))
                }
            };
        }
        Ok(mock)
    }

    /// Loads a JSON array of [`ScriptEntry`] objects.
    pub fn from_script_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_entries(entries, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, task: TaskKind) -> usize {
        self.per_task[task_slot(task)].load(Ordering::SeqCst)
    }

    pub fn unscripted_count(&self) -> usize {
        self.unscripted.load(Ordering::SeqCst)
    }

    fn lookup(&self, task: TaskKind, input: &str) -> &str {
        let key = (task, input_hash(input));
        if let Some(hit) = self.table.get(&key).or_else(|| self.fallback.get(&task)) {
            return hit;
        }
        self.unscripted.fetch_add(1, Ordering::SeqCst);
        log::warn!("mock backend has no script for {task} input {}", &key.1[..12]);
        UNSCRIPTED
    }
}

fn task_slot(task: TaskKind) -> usize {
    TaskKind::ALL.iter().position(|t| *t == task).unwrap_or(0)
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.per_task[task_slot(request.task)].fetch_add(1, Ordering::SeqCst);
        let reply = self.lookup(request.task, request.input);
        Ok(if self.echo {
            format!("{} {reply}", request.prompt)
        } else {
            reply.to_string()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Gateway;
    use std::sync::Arc;

    fn req<'a>(task: TaskKind, input: &'a str) -> GenerationRequest<'a> {
        GenerationRequest {
            task,
            input,
            prompt: "<s>[INST] prompt [/INST]",
        }
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            input_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn scripted_hit_is_exact_and_repeatable() {
        let mock = MockBackend::new().with_response(TaskKind::GraphSummary, "body", "  exact\nbytes ");
        let r = req(TaskKind::GraphSummary, "body");
        assert_eq!(mock.complete(&r).unwrap(), "  exact\nbytes ");
        assert_eq!(mock.complete(&r).unwrap(), "  exact\nbytes ");
        assert_eq!(mock.call_count(), 2);
        assert_eq!(mock.calls_for(TaskKind::GraphSummary), 2);
        assert_eq!(mock.unscripted_count(), 0);
    }

    #[test]
    fn task_is_part_of_the_key() {
        let mock = MockBackend::new().with_response(TaskKind::GraphSummary, "body", "g");
        assert_eq!(mock.complete(&req(TaskKind::TextSummary, "body")).unwrap(), UNSCRIPTED);
        assert_eq!(mock.unscripted_count(), 1);
    }

    #[test]
    fn fallback_covers_unknown_inputs() {
        let mock = MockBackend::new()
            .with_response(TaskKind::StackList, "a", "specific")
            .with_fallback(TaskKind::StackList, "generic");
        assert_eq!(mock.complete(&req(TaskKind::StackList, "a")).unwrap(), "specific");
        assert_eq!(mock.complete(&req(TaskKind::StackList, "zzz")).unwrap(), "generic");
    }

    #[test]
    fn echoing_mock_through_gateway() {
        let mock = Arc::new(MockBackend::new().with_fallback(TaskKind::GraphSummary, "X").echoing());
        let out = Gateway::new(mock, 0).generate(&req(TaskKind::GraphSummary, "b")).unwrap();
        assert_eq!(out.text, "X");
        assert_eq!(out.backend_id, "mock");
    }

    #[test]
    fn script_file_forms() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reply.txt"), "from file").unwrap();
        let script = format!(
            r#"[
              {{"task":"graph_summary","input":"a","response":"one"}},
              {{"task":"text_summary","input_sha256":"{}","response_file":"reply.txt"}},
              {{"task":"stack_merge","response":"any"}}
            ]"#,
            input_hash("b").to_uppercase()
        );
        let path = dir.path().join("script.json");
        std::fs::write(&path, script).unwrap();
        let mock = MockBackend::from_script_file(&path).unwrap();
        assert_eq!(mock.complete(&req(TaskKind::GraphSummary, "a")).unwrap(), "one");
        assert_eq!(mock.complete(&req(TaskKind::TextSummary, "b")).unwrap(), "from file");
        assert_eq!(mock.complete(&req(TaskKind::StackMerge, "q")).unwrap(), "any");
    }

    #[test]
    fn bad_scripts_rejected() {
        let dir = Path::new(".");
        assert!(MockBackend::from_entries(Vec::new(), dir).is_err());
        let both: Vec<ScriptEntry> =
            serde_json::from_str(r#"[{"task":"stack_list","response":"a","response_file":"b"}]"#).unwrap();
        assert!(MockBackend::from_entries(both, dir).is_err());
    }
}
