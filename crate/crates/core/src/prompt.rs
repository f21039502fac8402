//! Prompt rendering in the instruction-tuned chat template.
//!
//! Inference prompts stop right after `[/INST]`; training strings append the
//! response and the end-of-sequence marker.

use thiserror::Error;

use crate::model::TaskKind;

pub const DEFAULT_SYSTEM: &str = "You are an expert in analyzing cryptocurrency news.";

/// Number of dashes in the separator line closing each `News:{i}` block.
pub const SEPARATOR_DASHES: usize = 54;

pub const INST_CLOSE: &str = "[/INST]";
pub const EOS: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt input text is empty")]
    EmptyInput,
    #[error("training record response is empty")]
    EmptyResponse,
    #[error("summary list is empty")]
    EmptyList,
    #[error("list start index must be at least 1")]
    BadStartIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptQuery {
    pub task: TaskKind,
    pub text: &'static str,
}

impl PromptQuery {
    pub fn for_task(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::GraphSummary => "Generate a knowledge graph from cryptocurrency news:",
            TaskKind::TextSummary => {
                "Generate summaries of cryptocurrency news and detect sentiment signals:"
            }
            TaskKind::JsonOfSummary => {
                "Create a JSON representation of the summary of cryptocurrency news:"
            }
            TaskKind::StackList => "Summarize the following list of cryptocurrency news summaries:",
            TaskKind::StackMerge => {
                "Generate a single summary from the two provided summaries and output the result in JSON format:"
            }
        };
        PromptQuery { task, text }
    }
}

impl From<TaskKind> for PromptQuery {
    fn from(task: TaskKind) -> Self {
        PromptQuery::for_task(task)
    }
}

/// `<s>[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{query}\n{text} [/INST]`
pub fn render_inference_prompt(query: PromptQuery, text: &str, system: &str) -> Result<String, PromptError> {
    if text.is_empty() {
        return Err(PromptError::EmptyInput);
    }
    let mut out = String::with_capacity(48 + system.len() + query.text.len() + text.len());
    out.push_str("<s>[INST] <<SYS>>\n");
    out.push_str(system);
    out.push_str("\n<</SYS>>\n\n");
    out.push_str(query.text);
    out.push('\n');
    out.push_str(text);
    out.push(' ');
    out.push_str(INST_CLOSE);
    Ok(out)
}

/// One supervised fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionRecord {
    pub system: String,
    pub query: PromptQuery,
    pub input_text: String,
    pub response: String,
}

impl InstructionRecord {
    pub fn new(task: TaskKind, input_text: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            system: DEFAULT_SYSTEM.to_string(),
            query: PromptQuery::for_task(task),
            input_text: input_text.into(),
            response: response.into(),
        }
    }
}

pub fn render_training_record(rec: &InstructionRecord) -> Result<String, PromptError> {
    if rec.response.is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    let mut out = render_inference_prompt(rec.query, &rec.input_text, &rec.system)?;
    out.push(' ');
    out.push_str(&rec.response);
    out.push(' ');
    out.push_str(EOS);
    Ok(out)
}

pub fn separator_line() -> String {
    "-".repeat(SEPARATOR_DASHES)
}

/// Renders `News:{i}` blocks, numbering from `start_index`.
pub fn render_list_block<S: AsRef<str>>(summaries: &[S], start_index: usize) -> Result<String, PromptError> {
    if summaries.is_empty() {
        return Err(PromptError::EmptyList);
    }
    if start_index < 1 {
        return Err(PromptError::BadStartIndex);
    }
    let sep = separator_line();
    let mut out = String::new();
    for (i, s) in summaries.iter().enumerate() {
        out.push_str(&format!("News:{}\n\n{}\n{}\n", start_index + i, s.as_ref(), sep));
    }
    Ok(out)
}

/// Splits a rendered list block back into its summaries. Any line made of
/// ten or more dashes counts as a separator.
pub fn split_list_block(block: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in block.lines() {
        let t = line.trim();
        if t.len() >= 10 && t.chars().all(|c| c == '-') {
            out.push(current.join("\n"));
            current.clear();
        } else {
            current.push(line);
        }
    }
    if current.iter().any(|l| !l.trim().is_empty()) {
        out.push(current.join("\n"));
    }
    out.into_iter()
        .map(|seg| {
            let mut lines = seg.lines().skip_while(|l| l.trim().is_empty()).peekable();
            if lines.peek().is_some_and(|l| l.trim_start().starts_with("News:")) {
                lines.next();
            }
            lines.collect::<Vec<_>>().join("\n").trim().to_string()
        })
        .collect()
}

/// `\nSummary 1:\n{graph}\n\nSummary 2:\n{text}`
pub fn render_stack_pair(graph_stack: &str, text_stack: &str) -> Result<String, PromptError> {
    if graph_stack.is_empty() || text_stack.is_empty() {
        return Err(PromptError::EmptyInput);
    }
    Ok(format!("\nSummary 1:\n{graph_stack}\n\nSummary 2:\n{text_stack}"))
}
