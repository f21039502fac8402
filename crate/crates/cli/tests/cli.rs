use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

const BIN: &str = env!("CARGO_BIN_EXE_newsgraph");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("NEWSGRAPH_LLM_TOKEN")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)).unwrap()
}

/// One article, graph channel only, answered by fallbacks.
fn graph_only_run(dir: &Path) -> String {
    fs::write(dir.join("a.txt"), "Ethereum gained after the upgrade.").unwrap();
    let script = json!([
        {"task": "graph_summary", "response": fixture("s521_graph.txt")},
        {"task": "json_of_summary", "response": fixture("s522_graph.json")},
        {"task": "stack_list", "response": fixture("s525_stack_graph.txt")},
    ]);
    fs::write(dir.join("script.json"), script.to_string()).unwrap();
    let d = dir.to_str().unwrap();
    let ingest = run(&["-q", "ingest", &format!("{d}/a.txt"), "--out", &format!("{d}/m.json")]);
    assert!(ingest.status.success());
    let out = run(&[
        "analyze",
        "--manifest",
        &format!("{d}/m.json"),
        "--mock",
        &format!("{d}/script.json"),
        "--tasks",
        "graph",
        "--checkpoint-dir",
        d,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generations: 3"));
    stdout(&out).trim().to_string()
}

#[test]
fn graph_export_after_graph_only_run() {
    let dir = tempfile::tempdir().unwrap();
    let id = graph_only_run(dir.path());
    let d = dir.path().to_str().unwrap();

    let dot = run(&["graph", "--run", &id, "--checkpoint-dir", d]);
    assert!(dot.status.success());
    let dot = stdout(&dot);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("\"Ethereum\""));

    let jsonl = run(&["graph", "--run", &format!("{d}/runs/{id}"), "--format", "jsonl"]);
    let jsonl = stdout(&jsonl);
    assert_eq!(jsonl.lines().count(), 35);
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    // No merge happened, so there is no report to print.
    let report = run(&["report", "--run", &id, "--checkpoint-dir", d]);
    assert!(!report.status.success());
    assert!(String::from_utf8_lossy(&report.stderr).contains("no level-3 report"));
}

#[test]
fn unreachable_backend_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.txt"), "Bitcoin fell.").unwrap();
    fs::write(
        d.join("config.json"),
        json!({"endpoint_url": "http://127.0.0.1:9/generate", "model_id": "m", "max_retries": 0, "timeout_s": 2.0}).to_string(),
    )
    .unwrap();
    let p = |n: &str| d.join(n).to_str().unwrap().to_string();
    assert!(run(&["-q", "ingest", &p("a.txt"), "--out", &p("m.json")]).status.success());
    let out = run(&[
        "analyze",
        "--manifest",
        &p("m.json"),
        "--config",
        &p("config.json"),
        "--checkpoint-dir",
        &p("ck"),
    ]);
    assert!(!out.status.success());
    assert!(stdout(&out).is_empty());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!run(&["ingest", d.to_str().unwrap()]).status.success());
    fs::write(d.join("config.json"), "{\"batch_size\": 0}").unwrap();
    fs::write(d.join("a.txt"), "Solana spiked.").unwrap();
    let p = |n: &str| d.join(n).to_str().unwrap().to_string();
    assert!(run(&["-q", "ingest", &p("a.txt"), "--out", &p("m.json")]).status.success());
    let out = run(&["analyze", "--manifest", &p("m.json"), "--config", &p("config.json")]);
    assert!(!out.status.success());
    let out = run(&["analyze", "--manifest", &p("m.json"), "--tasks", "video"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown task kind"));
}
