mod ingest;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use newsgraph_core::corpus::{export_dataset, sidecar_path};
use newsgraph_core::llm::{Gateway, MockBackend};
use newsgraph_core::model::TaskKind;
use newsgraph_core::pipeline::{Pipeline, PipelineConfig, GRAPH_LOG, MANIFEST};
use newsgraph_core::report::{load_bundle, merged_json, merged_text, run_dir};
use newsgraph_core::store::{ConsolidatedGraph, GraphFormat};

use crate::ingest::{build_manifest, ArticleManifest};

#[derive(Parser)]
#[command(name = "newsgraph", version, about = "Multilevel LLM analytics over cryptocurrency news")]
struct Cli {
    /// Only print warnings and errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn text files into an article manifest.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "manifest.json")]
        out: PathBuf,
    },
    /// Run the three analysis levels and print the run id.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        /// Pipeline and backend settings (JSON object).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scripted backend instead of the configured endpoint.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Channels to run: graph, text, or both.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        /// Stop after this level (1, 2 or 3).
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        until_level: u8,
    },
    /// Print the merged report of a finished run.
    Report {
        /// Run id, or a path to the run directory.
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        format: ReportFormat,
        #[arg(long, default_value = ".")]
        checkpoint_dir: PathBuf,
    },
    /// Print a run's consolidated graph.
    Graph {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum, default_value_t = GraphOut::Dot)]
        format: GraphOut,
        #[arg(long, default_value = ".")]
        checkpoint_dir: PathBuf,
    },
    /// Render instruction records into a fine-tuning corpus.
    ExportDataset {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
    /// Merged report, feature rows and run counts as one JSON object.
    Bundle,
    /// The per-entity feature table (CSV).
    Features,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphOut {
    Dot,
    Jsonl,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { paths, out } => cmd_ingest(&paths, &out),
        Command::Analyze {
            manifest,
            config,
            mock,
            tasks,
            checkpoint_dir,
            run_id,
            until_level,
        } => cmd_analyze(AnalyzeArgs {
            manifest,
            config,
            mock,
            tasks,
            checkpoint_dir,
            run_id,
            until_level,
        }),
        Command::Report {
            run,
            format,
            checkpoint_dir,
        } => cmd_report(&resolve_run(&run, &checkpoint_dir), format),
        Command::Graph {
            run,
            format,
            checkpoint_dir,
        } => cmd_graph(&resolve_run(&run, &checkpoint_dir), format),
        Command::ExportDataset { input, out } => {
            let n = export_dataset(&input, &out)?;
            log::info!("wrote {n} records to {} and {}", out.display(), sidecar_path(&out).display());
            Ok(())
        }
    }
}

fn cmd_ingest(paths: &[PathBuf], out: &Path) -> Result<()> {
    let manifest = build_manifest(paths)?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    log::info!("{} articles -> {}", manifest.articles.len(), out.display());
    let mut stdout = std::io::stdout().lock();
    for a in &manifest.articles {
        writeln!(stdout, "{}", a.id)?;
    }
    Ok(())
}

struct AnalyzeArgs {
    manifest: PathBuf,
    config: Option<PathBuf>,
    mock: Option<PathBuf>,
    tasks: Vec<String>,
    checkpoint_dir: Option<PathBuf>,
    run_id: Option<String>,
    until_level: u8,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: PipelineConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(config)
}

/// Applies `--tasks`: channel names switch the graph and text summaries;
/// task names are also accepted.
fn restrict_tasks(config: &mut PipelineConfig, tasks: &[String]) -> Result<()> {
    if tasks.is_empty() {
        return Ok(());
    }
    let mut keep: BTreeSet<TaskKind> = [TaskKind::JsonOfSummary, TaskKind::StackList, TaskKind::StackMerge].into();
    for t in tasks.iter().map(|t| t.trim()).filter(|t| !t.is_empty()) {
        match t {
            "graph" => keep.insert(TaskKind::GraphSummary),
            "text" => keep.insert(TaskKind::TextSummary),
            other => match other.parse::<TaskKind>() {
                Ok(kind) => keep.insert(kind),
                Err(e) => bail!("--tasks: {e}"),
            },
        };
    }
    config.tasks_enabled = config.tasks_enabled.intersection(&keep).copied().collect();
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    config.backend = config.backend.clone().with_env_token();
    restrict_tasks(&mut config, &args.tasks)?;
    if let Some(dir) = args.checkpoint_dir {
        config.checkpoint_dir = Some(dir);
    }
    if config.checkpoint_dir.is_none() {
        config.checkpoint_dir = Some(PathBuf::from("."));
    }
    config.validate()?;

    let articles = ArticleManifest::load(&args.manifest)?.news_articles()?;
    let mock = match &args.mock {
        Some(path) => Some(Arc::new(MockBackend::from_script_file(path)?)),
        None => None,
    };
    let gateway = match &mock {
        Some(m) => Gateway::new(m.clone(), config.backend.max_retries),
        None => {
            if config.backend.endpoint_url.is_empty() {
                bail!("config has no endpoint_url; pass --mock for a scripted run");
            }
            Gateway::from_config(&config.backend)?
        }
    };

    let mut pipeline = Pipeline::new(&config, &gateway);
    if let Some(id) = args.run_id {
        pipeline = pipeline.with_run_id(id);
    }
    let started = Instant::now();
    let result = pipeline.run_until(&articles, args.until_level);
    log::info!(
        "generations: {} in {:.2}s",
        pipeline.generation_count(),
        started.elapsed().as_secs_f64()
    );
    if let Some(m) = &mock {
        if m.unscripted_count() > 0 {
            log::warn!("{} generations had no scripted response", m.unscripted_count());
        }
    }
    let state = result?;
    let failed = state
        .units()
        .values()
        .filter(|u| u.status == newsgraph_core::pipeline::UnitStatus::Failed)
        .count();
    if failed > 0 {
        log::warn!("{failed} units failed; rerun the same command to retry them");
    }
    if let Some(dir) = state.dir() {
        log::info!("checkpoint: {}", dir.display());
    }
    println!("{}", state.run_id);
    Ok(())
}

fn resolve_run(run: &str, checkpoint_dir: &Path) -> PathBuf {
    let direct = PathBuf::from(run);
    if direct.join(MANIFEST).is_file() {
        direct
    } else {
        run_dir(checkpoint_dir, run)
    }
}

fn cmd_report(dir: &Path, format: ReportFormat) -> Result<()> {
    let out = match format {
        ReportFormat::Json => merged_json(dir)?,
        ReportFormat::Text => merged_text(dir)?,
        ReportFormat::Bundle => {
            let mut s = serde_json::to_string_pretty(&load_bundle(dir)?)?;
            s.push('\n');
            s
        }
        ReportFormat::Features => {
            let path = dir.join(newsgraph_core::pipeline::FEATURES);
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?
        }
    };
    std::io::stdout().lock().write_all(out.as_bytes())?;
    Ok(())
}

fn cmd_graph(dir: &Path, format: GraphOut) -> Result<()> {
    let path = dir.join(GRAPH_LOG);
    let log = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let out = match format {
        GraphOut::Jsonl => log,
        GraphOut::Dot => ConsolidatedGraph::import_triples_jsonl(&log, Default::default())?.export_graph(GraphFormat::Dot)?,
    };
    std::io::stdout().lock().write_all(out.as_bytes())?;
    Ok(())
}
