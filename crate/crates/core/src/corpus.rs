//! Workflow corpus: data model, ingestion and persistence.
//!
//! Three ingestion routes feed the same [`Corpus`] type:
//!
//! * the Galaxy published-workflows API ([`fetch_published`]),
//! * a checkout of the training-material repository ([`ingest_training_dir`]),
//! * a directory of local `.ga` files ([`ingest_ga_dir`]).
//!
//! The corpus file is a single JSON object; query sets are JSON Lines.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed .ga file: {0}")]
    MalformedGa(String),
    #[error("duplicate workflow id {0:?}")]
    DuplicateId(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("network error: {0}")]
    Network(String),
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::Io { .. } => "io_error",
            CorpusError::MalformedGa(_) => "malformed_ga",
            CorpusError::DuplicateId(_) => "duplicate_id",
            CorpusError::Schema(_) => "schema_error",
            CorpusError::Network(_) => "network_error",
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    PublishedApi,
    TrainingRepo,
    LocalFile,
}

/// Metadata of one workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub id: String,
    pub title: String,
    pub description: String,
    pub tools: Vec<String>,
    pub topic: Option<String>,
    pub source: Source,
    pub ga_path: Option<String>,
}

/// Drops empty tool ids and repeated ones, keeping first occurrences.
pub fn dedup_tools<I, S>(tools: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in tools {
        let t: String = t.into();
        if !t.is_empty() && seen.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

/// An ordered set of workflows with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    workflows: Vec<Workflow>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(workflows: Vec<Workflow>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(workflows.len());
        for (pos, w) in workflows.iter().enumerate() {
            if w.id.is_empty() {
                return Err(CorpusError::Schema(format!(
                    "workflow at position {pos} has an empty id"
                )));
            }
            if index.insert(w.id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId(w.id.clone()));
            }
        }
        let workflows = workflows
            .into_iter()
            .map(|mut w| {
                w.tools = dedup_tools(std::mem::take(&mut w.tools));
                w
            })
            .collect();
        Ok(Self { workflows, index })
    }

    pub fn workflows(&self) -> &[Workflow] {
        &self.workflows
    }

    pub fn len(&self) -> usize {
        self.workflows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workflows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Workflow> {
        self.index.get(id).map(|&pos| &self.workflows[pos])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.workflows.iter().map(|w| w.id.as_str())
    }

    /// Workflow ids grouped by their `topic` label; unlabeled workflows are skipped.
    pub fn topic_members(&self) -> HashMap<String, Vec<String>> {
        let mut out: HashMap<String, Vec<String>> = HashMap::new();
        for w in &self.workflows {
            if let Some(t) = &w.topic {
                out.entry(t.clone()).or_default().push(w.id.clone());
            }
        }
        out
    }

    pub fn into_workflows(self) -> Vec<Workflow> {
        self.workflows
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    workflows: Vec<Workflow>,
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = CorpusFile {
        workflows: corpus.workflows.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| CorpusError::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CorpusError::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    corpus_from_json(&text)
}

pub fn corpus_from_json(text: &str) -> Result<Corpus, CorpusError> {
    let file: CorpusFile = serde_json::from_str(text).map_err(|e| CorpusError::Schema(e.to_string()))?;
    Corpus::new(file.workflows)
}

/// Title, description and tools extracted from one `.ga` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowDraft {
    pub title: String,
    pub description: String,
    pub tools: Vec<String>,
}

/// Extracts name, annotation and per-step tool ids from a Galaxy `.ga` file.
///
/// Steps are visited in ascending numeric key order; non-numeric keys sort
/// after numeric ones, lexicographically.
pub fn parse_ga(bytes: &[u8]) -> Result<WorkflowDraft, CorpusError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| CorpusError::MalformedGa(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| CorpusError::MalformedGa("top level is not an object".into()))?;
    let text_field = |key: &str| match obj.get(key) {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let title = text_field("name");
    let description = text_field("annotation");

    let steps = match obj.get("steps") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(CorpusError::MalformedGa("\"steps\" is not a map".into())),
        None => return Err(CorpusError::MalformedGa("missing \"steps\"".into())),
    };
    let mut keyed: Vec<(&String, &Value)> = steps.iter().collect();
    keyed.sort_by(|(a, _), (b, _)| step_key(a).cmp(&step_key(b)));
    let tools = dedup_tools(
        keyed
            .into_iter()
            .filter_map(|(_, step)| step.get("tool_id").and_then(Value::as_str).map(str::to_owned)),
    );
    Ok(WorkflowDraft {
        title,
        description,
        tools,
    })
}

fn step_key(key: &str) -> (u8, u64, &str) {
    match key.parse::<u64>() {
        Ok(n) => (0, n, key),
        Err(_) => (1, 0, key),
    }
}

/// Result of a directory ingestion: parsed workflows plus the files skipped
/// as malformed.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub workflows: Vec<Workflow>,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Ingests a training-material checkout laid out as
/// `<topic>/<tutorial>/**/*.ga`, with an optional
/// `<topic>/<tutorial>/data-library.yml` carrying the tutorial description.
pub fn ingest_training_dir(root: &Path) -> Result<IngestReport, CorpusError> {
    ingest_tree(root, Source::TrainingRepo)
}

/// Ingests every `.ga` file below `root` as a local workflow. Ids and topics
/// follow the same relative-path scheme as training ingestion; the
/// description is the file's own annotation.
pub fn ingest_ga_dir(root: &Path) -> Result<IngestReport, CorpusError> {
    ingest_tree(root, Source::LocalFile)
}

fn ingest_tree(root: &Path, source: Source) -> Result<IngestReport, CorpusError> {
    let meta = fs::metadata(root).map_err(|e| CorpusError::io(root, e))?;
    if !meta.is_dir() {
        return Err(CorpusError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    fs::read_dir(root).map_err(|e| CorpusError::io(root, e))?;

    let mut report = IngestReport::default();
    let mut descriptions: HashMap<PathBuf, String> = HashMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_default();
                tracing::warn!(path = %path.display(), error = %e, "skipping unreadable entry");
                report.skipped.push((path, e.to_string()));
                continue;
            }
        };
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("ga") {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        let components: Vec<String> = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        let id = components.join("/");
        let topic = (components.len() > 1).then(|| components[0].clone());

        let draft = match fs::read(path)
            .map_err(|e| CorpusError::io(path, e))
            .and_then(|b| parse_ga(&b))
        {
            Ok(d) => d,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "skipping .ga file");
                report.skipped.push((path.to_path_buf(), e.to_string()));
                continue;
            }
        };

        let description = if source == Source::LocalFile {
            draft.description
        } else if components.len() > 2 {
            let tutorial_dir = root.join(&components[0]).join(&components[1]);
            descriptions
                .entry(tutorial_dir.clone())
                .or_insert_with(|| read_library_description(&tutorial_dir))
                .clone()
        } else {
            String::new()
        };

        report.workflows.push(Workflow {
            id,
            title: draft.title,
            description,
            tools: draft.tools,
            topic,
            source,
            ga_path: Some(path.display().to_string()),
        });
    }
    Ok(report)
}

fn read_library_description(tutorial_dir: &Path) -> String {
    let path = tutorial_dir.join("data-library.yml");
    match fs::read_to_string(&path) {
        Ok(text) => library_description(&text).unwrap_or_default(),
        Err(_) => String::new(),
    }
}

/// Pulls the tutorial description out of a `data-library.yml` document.
///
/// The file nests `items` as topic -> tutorial -> dataset. The tutorial-level
/// `description` wins; the topic-level one is the fallback. Other keys are
/// ignored.
pub fn library_description(yaml: &str) -> Option<String> {
    let doc: serde_yaml::Value = serde_yaml::from_str(yaml).ok()?;
    let items = |v: &serde_yaml::Value| -> Vec<serde_yaml::Value> {
        v.get("items")
            .and_then(|i| i.as_sequence())
            .cloned()
            .unwrap_or_default()
    };
    let desc = |v: &serde_yaml::Value| -> Option<String> {
        v.get("description")
            .and_then(|d| d.as_str())
            .map(str::trim)
            .filter(|d| !d.is_empty())
            .map(str::to_owned)
    };
    let topics = items(&doc);
    for topic in &topics {
        for tutorial in items(topic) {
            if let Some(d) = desc(&tutorial) {
                return Some(d);
            }
        }
    }
    topics.iter().find_map(desc)
}

/// Options for [`fetch_published`].
#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub page_limit: usize,
    pub page_size: usize,
    pub timeout: Duration,
    /// Also download each workflow's `.ga` definition to fill in its tools.
    pub with_tools: bool,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            page_limit: 10,
            page_size: 100,
            timeout: Duration::from_secs(30),
            with_tools: false,
        }
    }
}

/// Download URL for a published workflow's `.ga` definition.
pub fn published_ga_url(api_base: &str, id: &str) -> String {
    format!(
        "{}/api/workflows/{}/download?format=json-download",
        api_base.trim_end_matches('/'),
        id
    )
}

/// Lists published workflows from a Galaxy server, page by page.
pub fn fetch_published(api_base: &str, opts: &FetchOptions) -> Result<Vec<Workflow>, CorpusError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(opts.timeout)
        .build()
        .map_err(|e| CorpusError::Network(e.to_string()))?;
    let base = api_base.trim_end_matches('/');
    let page_size = opts.page_size.max(1);
    let mut out: Vec<Workflow> = Vec::new();
    let mut seen = HashSet::new();

    for page in 0..opts.page_limit {
        let url = format!(
            "{base}/api/workflows?show_published=True&limit={page_size}&offset={}",
            page * page_size
        );
        let body = get_json(&client, &url)?;
        let entries = body
            .as_array()
            .ok_or_else(|| CorpusError::Schema("response is not a JSON array".into()))?;
        for entry in entries {
            let obj = entry
                .as_object()
                .ok_or_else(|| CorpusError::Schema("array entry is not an object".into()))?;
            let id = obj
                .get("id")
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CorpusError::Schema("entry without a string \"id\"".into()))?;
            if !seen.insert(id.to_owned()) {
                continue;
            }
            let text = |k: &str| obj.get(k).and_then(Value::as_str).unwrap_or("").to_owned();
            out.push(Workflow {
                id: id.to_owned(),
                title: text("name"),
                description: text("annotation"),
                tools: Vec::new(),
                topic: None,
                source: Source::PublishedApi,
                ga_path: Some(published_ga_url(base, id)),
            });
        }
        if entries.len() < page_size {
            break;
        }
    }

    if opts.with_tools {
        for w in &mut out {
            let url = published_ga_url(base, &w.id);
            let draft = client
                .get(&url)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.bytes())
                .map_err(|e| CorpusError::Network(e.to_string()))
                .and_then(|b| parse_ga(&b));
            match draft {
                Ok(d) => w.tools = d.tools,
                Err(e) => tracing::warn!(id = %w.id, error = %e, "could not read workflow definition"),
            }
        }
    }
    Ok(out)
}

fn get_json(client: &reqwest::blocking::Client, url: &str) -> Result<Value, CorpusError> {
    let resp = client
        .get(url)
        .send()
        .map_err(|e| CorpusError::Network(e.to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(CorpusError::Network(format!("GET {url} returned {status}")));
    }
    resp.json::<Value>().map_err(|e| CorpusError::Schema(e.to_string()))
}

/// A benchmark query with its seed and gold workflow ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub topic: Option<String>,
    pub seed_ids: BTreeSet<String>,
    pub gold_workflow_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// How a query record was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tfidf_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_keyword_overlap: Option<usize>,
}

pub fn write_queries<W: Write>(mut out: W, queries: &[QueryRecord]) -> Result<(), CorpusError> {
    for q in queries {
        let line = serde_json::to_string(q).map_err(|e| CorpusError::Schema(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| CorpusError::Io {
            path: "<queries>".into(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn save_queries(path: &Path, queries: &[QueryRecord]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_queries(&mut buf, queries)?;
    fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Schema(format!("line {}: {e}", lineno + 1)))?;
        if q.text.trim().is_empty() {
            return Err(CorpusError::Schema(format!("line {}: empty query text", lineno + 1)));
        }
        out.push(q);
    }
    Ok(out)
}
