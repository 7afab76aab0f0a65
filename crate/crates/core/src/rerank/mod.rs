//! Second-stage listwise reranking with a generative model.
//!
//! The model sees the query and a numbered list of candidates and answers
//! with a JSON object of per-id relevance scores. Anything that goes wrong
//! (transport errors, unparseable output, hallucinated ids) degrades to the
//! stage-one order with a warning; [`rerank`] never drops a candidate.

mod client;

pub use client::{ChatClient, ClientError, OpenAiChatClient, RerankConfig};

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::ranking::{RankedList, Scored};

/// Descriptions longer than this many chars are cut in prompts.
pub const MAX_DESCRIPTION_CHARS: usize = 600;
const ELLIPSIS: &str = "…";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("{got} candidates exceed the limit of {limit}")]
    TooManyCandidates { got: usize, limit: usize },
    #[error("no candidates to rerank")]
    NoCandidates,
    #[error("no relevance scores could be recovered from the model output")]
    Unparseable,
}

/// What the model is shown about one workflow.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub title: String,
    pub description: String,
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((cut, _)) => format!("{}{ELLIPSIS}", &s[..cut]),
        None => s.to_owned(),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn build_rerank_prompt(query: &str, candidates: &[Candidate], limit: usize) -> Result<String, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::NoCandidates);
    }
    if candidates.len() > limit {
        return Err(RerankError::TooManyCandidates {
            got: candidates.len(),
            limit,
        });
    }
    let mut p = String::new();
    p.push_str(
        "You are helping a scientist find Galaxy workflows for their analysis task.\n\
         Score each workflow's relevance to the query from 0.0 to 1.0, where 1.0 means the \
         workflow directly performs the task and 0.0 means it is unrelated. Consider the \
         biological context, the tools involved and the analysis steps implied by the query.\n\n",
    );
    p.push_str("Query: ");
    p.push_str(&one_line(query));
    p.push_str("\n\nWorkflows:\n");
    for (i, c) in candidates.iter().enumerate() {
        p.push_str(&candidate_line(i, c));
    }
    p.push_str(PROMPT_FOOTER);
    Ok(p)
}

const PROMPT_FOOTER: &str = "\nAnswer ONLY with JSON of the form {\"scores\":[{\"id\":...,\"score\":...}]}, \
     with one entry per workflow above, using the bracketed identifiers as ids.\n";

/// The prompt line for the candidate at 0-based position `i`.
fn candidate_line(i: usize, c: &Candidate) -> String {
    let desc = truncate_chars(&one_line(&c.description), MAX_DESCRIPTION_CHARS);
    format!("{}. [{}] {} — {}\n", i + 1, c.id, one_line(&c.title), desc)
}

fn pair_regexes() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"\{[^{}]*\}").unwrap(),
            Regex::new(r#""id"\s*:\s*("(?:[^"\\]|\\.)*"|-?\d+)"#).unwrap(),
            Regex::new(r#""score"\s*:\s*"?(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|-?\.\d+)"?"#).unwrap(),
        )
    })
}

fn id_from_json(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn strict_pairs(text: &str) -> Option<Vec<(String, f64)>> {
    let root: Value = serde_json::from_str(text.trim()).ok()?;
    let entries = root.get("scores")?.as_array()?;
    Some(
        entries
            .iter()
            .filter_map(|e| {
                let id = id_from_json(e.get("id")?)?;
                let score = e.get("score")?.as_f64()?;
                Some((id, score))
            })
            .collect(),
    )
}

fn lenient_pairs(text: &str) -> Vec<(String, f64)> {
    let (object, id_re, score_re) = pair_regexes();
    object
        .find_iter(text)
        .filter_map(|m| {
            let obj = m.as_str();
            let raw_id = id_re.captures(obj)?.get(1)?.as_str();
            let id = id_from_json(&serde_json::from_str::<Value>(raw_id).ok()?)?;
            let score: f64 = score_re.captures(obj)?.get(1)?.as_str().parse().ok()?;
            Some((id, score))
        })
        .collect()
}

/// Recovers per-candidate scores from a model response.
///
/// Strict JSON is tried first, then a scan for `"id": .., "score": ..`
/// objects anywhere in the text. Scores are clamped to `[0, 1]`, unknown ids
/// dropped and the first score for a repeated id kept.
pub fn parse_scores(response: &str, candidate_ids: &[String]) -> Result<HashMap<String, f64>, RerankError> {
    let known: HashSet<&str> = candidate_ids.iter().map(String::as_str).collect();
    let collect = |pairs: Vec<(String, f64)>| {
        let mut out = HashMap::new();
        for (id, score) in pairs {
            if !score.is_finite() || !known.contains(id.as_str()) {
                continue;
            }
            out.entry(id).or_insert(score.clamp(0.0, 1.0));
        }
        out
    };
    if let Some(pairs) = strict_pairs(response) {
        let scores = collect(pairs);
        if !scores.is_empty() {
            return Ok(scores);
        }
    }
    let scores = collect(lenient_pairs(response));
    if scores.is_empty() {
        Err(RerankError::Unparseable)
    } else {
        Ok(scores)
    }
}

/// Result of [`rerank`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankOutcome {
    pub list: RankedList,
    pub used_llm: bool,
    pub per_id_scores: HashMap<String, f64>,
    pub warnings: Vec<String>,
}

impl RerankOutcome {
    fn passthrough(stage1: &RankedList, warnings: Vec<String>) -> Self {
        Self {
            list: stage1.clone(),
            used_llm: false,
            per_id_scores: HashMap::new(),
            warnings,
        }
    }
}

fn candidate_for(corpus: &Corpus, id: &str) -> Candidate {
    match corpus.get(id) {
        Some(w) => Candidate {
            id: id.to_owned(),
            title: w.title.clone(),
            description: w.description.clone(),
        },
        None => Candidate {
            id: id.to_owned(),
            title: String::new(),
            description: String::new(),
        },
    }
}

/// Splits candidates into consecutive groups whose prompts fit the budget.
/// A single candidate always forms a batch, even if it alone is too long.
fn batch_candidates(query: &str, candidates: Vec<Candidate>, cfg: &RerankConfig) -> Vec<Vec<Candidate>> {
    // A prompt is a fixed frame plus one line per candidate, so sizes add up.
    let frame = candidates.first().map_or(0, |c| {
        build_rerank_prompt(query, std::slice::from_ref(c), 1).map_or(0, |p| p.chars().count())
            - candidate_line(0, c).chars().count()
    });
    let mut batches: Vec<Vec<Candidate>> = Vec::new();
    let mut current: Vec<Candidate> = Vec::new();
    let mut size = frame;
    for c in candidates {
        let mut line = candidate_line(current.len(), &c).chars().count();
        if !current.is_empty() && size + line > cfg.max_prompt_chars {
            batches.push(std::mem::take(&mut current));
            size = frame;
            line = candidate_line(0, &c).chars().count();
        }
        size += line;
        current.push(c);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Reorders the first `cfg.candidates_k` entries of `stage1` by model
/// relevance. Scored candidates come first, ordered by model score, then
/// stage-one score, then id; unscored candidates follow in stage-one order,
/// and entries beyond `candidates_k` keep their positions after that.
pub fn rerank(
    query: &str,
    stage1: &RankedList,
    corpus: &Corpus,
    client: &dyn ChatClient,
    cfg: &RerankConfig,
) -> RerankOutcome {
    if stage1.is_empty() {
        return RerankOutcome::passthrough(stage1, vec!["no candidates to rerank".into()]);
    }
    let limit = cfg.candidates_k.max(1);
    let head: Vec<&Scored> = stage1.iter().take(limit).collect();
    let tail: Vec<&Scored> = stage1.iter().skip(limit).collect();

    let candidates: Vec<Candidate> = head.iter().map(|s| candidate_for(corpus, &s.id)).collect();
    let mut warnings = Vec::new();
    let mut scores: HashMap<String, f64> = HashMap::new();
    let mut any_batch_ok = false;

    for batch in batch_candidates(query, candidates, cfg) {
        let ids: Vec<String> = batch.iter().map(|c| c.id.clone()).collect();
        let prompt = match build_rerank_prompt(query, &batch, limit) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("rerank prompt error: {e}"));
                continue;
            }
        };
        let response = match client.complete(&prompt) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("reranker unavailable, kept stage-1 order: {e}"));
                continue;
            }
        };
        match parse_scores(&response, &ids) {
            Ok(batch_scores) => {
                any_batch_ok = true;
                for (id, s) in batch_scores {
                    scores.entry(id).or_insert(s);
                }
            }
            Err(e) => warnings.push(format!("{e}; kept stage-1 order")),
        }
    }

    if !any_batch_ok {
        return RerankOutcome::passthrough(stage1, warnings);
    }

    let missing = head.iter().filter(|s| !scores.contains_key(&s.id)).count();
    if missing > 0 {
        warnings.push(format!("{missing} candidate(s) received no model score"));
    }

    let mut scored: Vec<(&Scored, f64)> = Vec::new();
    let mut unscored: Vec<&Scored> = Vec::new();
    let mut placed: HashSet<&str> = HashSet::new();
    for s in &head {
        match scores.get(&s.id) {
            // a repeated stage-1 id keeps its model score only once
            Some(&llm) if placed.insert(s.id.as_str()) => scored.push((s, llm)),
            _ => unscored.push(s),
        }
    }
    scored.sort_by(|(a, la), (b, lb)| {
        lb.total_cmp(la)
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.id.cmp(&b.id))
    });

    let list = scored
        .into_iter()
        .map(|(s, llm)| Scored {
            id: s.id.clone(),
            score: llm,
        })
        .chain(unscored.into_iter().chain(tail).cloned())
        .collect();
    RerankOutcome {
        list: RankedList::from_ordered(list),
        used_llm: true,
        per_id_scores: scores,
        warnings,
    }
}
