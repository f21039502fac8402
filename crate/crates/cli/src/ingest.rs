use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use newsgraph_core::llm::input_hash;
use newsgraph_core::model::NewsArticle;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

/// Length of the content-hash prefix used as article id.
pub const ID_LEN: usize = 12;

const TEXT_EXTENSIONS: [&str; 3] = ["txt", "md", "text"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub bytes: usize,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleManifest {
    pub articles: Vec<ManifestEntry>,
}

impl ArticleManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn news_articles(&self) -> Result<Vec<NewsArticle>> {
        self.articles
            .iter()
            .map(|e| {
                let mut a = NewsArticle::new(e.id.clone(), e.body.clone())?;
                a.title = first_line(&e.body);
                Ok(a)
            })
            .collect()
    }
}

fn first_line(body: &str) -> Option<String> {
    body.lines().map(str::trim).find(|l| !l.is_empty()).map(|l| l.chars().take(200).collect())
}

/// Files named directly are taken as-is; directories contribute their
/// text files in sorted order.
pub fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = WalkDir::new(p)
                .sort_by_file_name()
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .filter(|f| {
                    f.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| TEXT_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
                })
                .collect();
            files.append(&mut found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            bail!("UnreadableFile: {} does not exist", p.display());
        }
    }
    if files.is_empty() {
        bail!("NoInputFiles: no text files found");
    }
    Ok(files)
}

pub fn build_manifest(paths: &[PathBuf]) -> Result<ArticleManifest> {
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut articles = Vec::new();
    for file in collect_files(paths)? {
        let bytes = fs::read(&file).with_context(|| format!("UnreadableFile: {}", file.display()))?;
        let body = String::from_utf8(bytes).map_err(|_| anyhow::anyhow!("UnreadableFile: {} is not UTF-8", file.display()))?;
        if body.trim().is_empty() {
            log::warn!("skipping empty file {}", file.display());
            continue;
        }
        let id = input_hash(&body)[..ID_LEN].to_string();
        if let Some(first) = seen.get(&id) {
            log::warn!("{} duplicates {} (id {id}); skipped", file.display(), first.display());
            continue;
        }
        if !(1000..=10_240).contains(&body.len()) {
            log::warn!("{} is {} bytes, outside the usual 1-10 KB", file.display(), body.len());
        }
        seen.insert(id.clone(), file.clone());
        articles.push(ManifestEntry {
            id,
            path: file,
            bytes: body.len(),
            body,
        });
    }
    if articles.is_empty() {
        bail!("NoInputFiles: every input file was empty");
    }
    Ok(ArticleManifest { articles })
}
