//! Benchmark construction: topic clustering, keyword labels, query
//! synthesis and gold sets.

mod cluster;
mod gold;
mod keywords;
mod queries;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{cluster_topics, Clustering, MAX_ITERATIONS};
pub use gold::{build_ground_truth, GoldParams, DEFAULT_MIN_KEYWORD_OVERLAP, DEFAULT_TFIDF_THRESHOLD};
pub use keywords::{ctfidf_keywords, Keyword};
pub use queries::{generate_queries, llm_prompt, parse_query_lines, QueryMode, MAX_LLM_ATTEMPTS};

use crate::corpus::{Corpus, CorpusError, Provenance, QueryRecord};
use crate::embed::{EmbedError, Embedder};
use crate::lexical::{LexicalError, TfidfIndex};
use crate::rerank::ClientError;
use crate::textprep::{doc_text, FieldConfig};

pub const DEFAULT_TOP_KEYWORDS: usize = 10;
/// Representative workflows kept per topic; they seed the gold sets.
pub const MAX_REPRESENTATIVES: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { points: usize, k: usize },
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("template mode needs at least 2 keywords, topic has {0}")]
    InsufficientKeywords(usize),
    #[error("model call failed: {0}")]
    Client(#[from] ClientError),
    #[error("model returned {got} usable queries, wanted {wanted}")]
    ShortLlmOutput { wanted: usize, got: usize },
    #[error("seed workflow {0:?} is not in the corpus")]
    UnknownSeed(String),
    #[error("topic model does not match corpus: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl BenchError {
    pub fn code(&self) -> &'static str {
        match self {
            BenchError::TooFewPoints { .. } => "too_few_points",
            BenchError::DimMismatch { .. } => "dim_mismatch",
            BenchError::BadParam(_) => "bad_param",
            BenchError::InsufficientKeywords(_) => "insufficient_keywords",
            BenchError::Client(_) => "client_error",
            BenchError::ShortLlmOutput { .. } => "short_llm_output",
            BenchError::UnknownSeed(_) => "unknown_seed",
            BenchError::ModelMismatch(_) => "model_mismatch",
            BenchError::Embed(_) => "embed_error",
            BenchError::Lexical(_) => "lexical_error",
            BenchError::Corpus(e) => e.code(),
        }
    }
}

/// Topic assignments and labels for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub seed: u64,
    pub embedder: String,
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<crate::embed::EmbeddingVector>,
    /// Per topic, sorted by weight descending.
    pub keywords: Vec<Vec<Keyword>>,
    /// Per topic, up to [`MAX_REPRESENTATIVES`] members closest to the
    /// centroid, most similar first.
    pub representatives: Vec<Vec<String>>,
    pub iterations: usize,
}

impl TopicModel {
    /// Embeds every workflow, clusters into `k` topics and labels them.
    pub fn build(
        corpus: &Corpus,
        fields: &FieldConfig,
        embedder: &dyn Embedder,
        k: usize,
        seed: u64,
        top_n: usize,
    ) -> Result<Self, BenchError> {
        let texts: Vec<String> = corpus.workflows().iter().map(|w| doc_text(w, fields)).collect();
        let vectors = embedder.embed(&texts)?;
        let clustering = cluster_topics(&vectors, k, seed)?;
        let keywords = ctfidf_keywords(corpus, fields, &clustering.assignments, k, top_n);

        let mut representatives = Vec::with_capacity(k);
        for (t, centroid) in clustering.centroids.iter().enumerate() {
            let mut members: Vec<(f64, &str)> = corpus
                .workflows()
                .iter()
                .zip(&vectors)
                .zip(&clustering.assignments)
                .filter(|(_, &a)| a == t)
                .map(|((w, v), _)| {
                    let s = v.values().iter().zip(centroid.values()).map(|(a, b)| a * b).sum();
                    (s, w.id.as_str())
                })
                .collect();
            members.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            representatives.push(
                members
                    .into_iter()
                    .take(MAX_REPRESENTATIVES)
                    .map(|(_, id)| id.to_string())
                    .collect(),
            );
        }

        Ok(Self {
            k,
            seed,
            embedder: embedder.name(),
            assignments: corpus
                .ids()
                .map(str::to_string)
                .zip(clustering.assignments.iter().copied())
                .collect(),
            centroids: clustering.centroids,
            keywords,
            representatives,
            iterations: clustering.objective_history.len(),
        })
    }

    /// `"{index}_{kw1}_{kw2}_{kw3}"`, using as many keywords as exist.
    pub fn label(&self, topic: usize) -> String {
        let mut label = topic.to_string();
        for kw in self.keywords.get(topic).into_iter().flatten().take(3) {
            label.push('_');
            label.push_str(&kw.term);
        }
        label
    }

    pub fn members(&self, topic: usize) -> Vec<String> {
        self.assignments
            .iter()
            .filter(|(_, &t)| t == topic)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Topic label to member ids, the shape [`fill_gold`] expects.
    pub fn membership(&self) -> HashMap<String, Vec<String>> {
        (0..self.k).map(|t| (self.label(t), self.members(t))).collect()
    }

    /// Checks that the model covers exactly the corpus ids.
    pub fn check(&self, corpus: &Corpus) -> Result<(), BenchError> {
        if self.assignments.len() != corpus.len() {
            return Err(BenchError::ModelMismatch(format!(
                "{} assignments for {} workflows",
                self.assignments.len(),
                corpus.len()
            )));
        }
        if let Some(id) = corpus.ids().find(|id| !self.assignments.contains_key(*id)) {
            return Err(BenchError::ModelMismatch(format!("{id:?} is unassigned")));
        }
        if let Some((id, t)) = self.assignments.iter().find(|(_, &t)| t >= self.k) {
            return Err(BenchError::ModelMismatch(format!("{id:?} assigned to topic {t} >= k")));
        }
        if self.keywords.len() != self.k || self.representatives.len() != self.k {
            return Err(BenchError::ModelMismatch(
                "per-topic lists do not have k entries".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CorpusError::Schema(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CorpusError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(serde_json::from_str(&text).map_err(|e| CorpusError::Schema(e.to_string()))?)
    }
}

/// `n_per_topic` queries per topic. Gold sets start as the topic's
/// representatives; [`fill_gold`] expands them.
pub fn generate_benchmark(
    corpus: &Corpus,
    model: &TopicModel,
    n_per_topic: usize,
    mode: &QueryMode<'_>,
) -> Result<Vec<QueryRecord>, BenchError> {
    model.check(corpus)?;
    let llm_model = match mode {
        QueryMode::Llm(client) => Some(client.model()),
        QueryMode::Template => None,
    };
    let mut out = Vec::with_capacity(model.k * n_per_topic);
    for t in 0..model.k {
        let keywords: Vec<String> = model.keywords[t].iter().map(|k| k.term.clone()).collect();
        let examples: Vec<(String, String)> = model.representatives[t]
            .iter()
            .filter_map(|id| corpus.get(id))
            .map(|w| (w.title.clone(), w.description.clone()))
            .collect();
        let seeds: BTreeSet<String> = model.representatives[t].iter().cloned().collect();
        let texts = generate_queries(&keywords, &examples, n_per_topic, mode)?;
        for (i, text) in texts.into_iter().enumerate() {
            out.push(QueryRecord {
                query_id: format!("t{t:02}-q{i}"),
                text,
                topic: Some(model.label(t)),
                seed_ids: seeds.clone(),
                gold_workflow_ids: seeds.clone(),
                provenance: Some(Provenance {
                    mode: mode.name().to_string(),
                    model: llm_model.clone(),
                    seed: model.seed,
                    tfidf_threshold: None,
                    min_keyword_overlap: None,
                }),
            });
        }
    }
    Ok(out)
}

/// Recomputes every query's gold set from its seeds and topic members and
/// records the parameters in its provenance. Queries whose topic is absent
/// from `membership` keep only their seeds.
pub fn fill_gold(
    corpus: &Corpus,
    tfidf: &TfidfIndex,
    queries: &mut [QueryRecord],
    membership: &HashMap<String, Vec<String>>,
    params: &GoldParams,
) -> Result<(), BenchError> {
    params.validate()?;
    for q in queries.iter_mut() {
        let members = q
            .topic
            .as_ref()
            .and_then(|t| membership.get(t))
            .map(Vec::as_slice)
            .unwrap_or_default();
        q.gold_workflow_ids = build_ground_truth(&q.text, &q.seed_ids, members, corpus, tfidf, params)?;
        let prov = q.provenance.get_or_insert_with(|| Provenance {
            mode: "external".into(),
            model: None,
            seed: 0,
            tfidf_threshold: None,
            min_keyword_overlap: None,
        });
        prov.tfidf_threshold = Some(params.tfidf_threshold);
        prov.min_keyword_overlap = Some(params.min_keyword_overlap);
    }
    Ok(())
}
