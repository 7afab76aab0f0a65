//! Binary-relevance IR metrics, evaluation runs and report export.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, QueryRecord};
use crate::engine::{timed_search, Retriever, SearchError};

pub const CSV_HEADER: [&str; 7] = [
    "method",
    "hit_at_1",
    "hit_at_5",
    "recall_at_50",
    "mrr",
    "mean_latency_ms",
    "n_queries",
];
pub const RECALL_K: usize = 50;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold set is empty")]
    EmptyGold,
    #[error("k must be at least 1")]
    BadK,
    #[error("run refers to unknown query {0:?}")]
    UnknownQuery(String),
    #[error("run for query {query_id:?} by {method:?} ranks an id twice")]
    DuplicateIds { query_id: String, method: String },
    #[error("more than one run for query {query_id:?} by {method:?}")]
    DuplicateRun { query_id: String, method: String },
    #[error("no query has a non-empty gold set")]
    NoQueries,
    #[error("retrieval failed for query {query_id:?}: {source}")]
    Search {
        query_id: String,
        #[source]
        source: SearchError,
    },
    #[error("could not write report: {0}")]
    Export(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::EmptyGold => "empty_gold",
            EvalError::BadK => "bad_k",
            EvalError::UnknownQuery(_) => "unknown_query",
            EvalError::DuplicateIds { .. } => "duplicate_ids",
            EvalError::DuplicateRun { .. } => "duplicate_run",
            EvalError::NoQueries => "no_queries",
            EvalError::Search { .. } => "search_error",
            EvalError::Export(_) => "export_error",
        }
    }
}

fn check(gold: &BTreeSet<String>, k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::BadK);
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(())
}

/// 1.0 when a gold id appears in the first `k` positions, else 0.0.
pub fn hit_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    check(gold, k)?;
    Ok(if ranked.iter().take(k).any(|id| gold.contains(id)) {
        1.0
    } else {
        0.0
    })
}

pub fn recall_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> Result<f64, EvalError> {
    check(gold, k)?;
    let found = ranked.iter().take(k).filter(|id| gold.contains(*id)).count();
    Ok(found as f64 / gold.len() as f64)
}

/// `1/r` for the first gold id at 1-based rank `r`, over the full list.
pub fn reciprocal_rank(ranked: &[String], gold: &BTreeSet<String>) -> Result<f64, EvalError> {
    check(gold, 1)?;
    Ok(ranked
        .iter()
        .position(|id| gold.contains(id))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

/// One retriever's answer to one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub method: String,
    pub ranked_ids: Vec<String>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub hit_at_1: f64,
    pub hit_at_5: f64,
    pub recall_at_50: f64,
    pub mrr: f64,
    pub mean_latency_ms: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by method name.
    pub rows: Vec<EvalRow>,
    /// Queries left out because their gold set was empty.
    pub excluded_queries: Vec<String>,
    /// `(method, query_id)` pairs with no run; they score zero.
    pub missing_runs: Vec<(String, String)>,
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        let export = |e: csv::Error| EvalError::Export(e.to_string());
        w.write_record(CSV_HEADER).map_err(export)?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                format!("{:.2}", r.hit_at_1),
                format!("{:.2}", r.hit_at_5),
                format!("{:.2}", r.recall_at_50),
                format!("{:.2}", r.mrr),
                format!("{:.2}", r.mean_latency_ms),
                r.n_queries.to_string(),
            ])
            .map_err(export)?;
        }
        w.flush().map_err(|e| EvalError::Export(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn row(&self, method: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Averages per-query metrics (as percentages) for every method present in
/// `runs`. Queries with empty gold sets are excluded; a method with no run
/// for an eligible query scores zero on it.
pub fn evaluate(runs: &[RunRecord], queries: &[QueryRecord]) -> Result<EvalReport, EvalError> {
    let known: HashSet<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
    let mut by_method: BTreeMap<&str, HashMap<&str, &RunRecord>> = BTreeMap::new();
    for r in runs {
        if !known.contains(r.query_id.as_str()) {
            return Err(EvalError::UnknownQuery(r.query_id.clone()));
        }
        let mut seen = HashSet::with_capacity(r.ranked_ids.len());
        if !r.ranked_ids.iter().all(|id| seen.insert(id)) {
            return Err(EvalError::DuplicateIds {
                query_id: r.query_id.clone(),
                method: r.method.clone(),
            });
        }
        if by_method.entry(&r.method).or_default().insert(&r.query_id, r).is_some() {
            return Err(EvalError::DuplicateRun {
                query_id: r.query_id.clone(),
                method: r.method.clone(),
            });
        }
    }

    let (eligible, excluded): (Vec<&QueryRecord>, Vec<&QueryRecord>) =
        queries.iter().partition(|q| !q.gold_workflow_ids.is_empty());
    if eligible.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let n = eligible.len() as f64;

    let mut rows = Vec::with_capacity(by_method.len());
    let mut missing_runs = Vec::new();
    for (method, runs) in &by_method {
        let (mut h1, mut h5, mut rec, mut mrr) = (0.0, 0.0, 0.0, 0.0);
        let (mut latency, mut timed) = (0.0, 0usize);
        for q in &eligible {
            let Some(run) = runs.get(q.query_id.as_str()) else {
                missing_runs.push((method.to_string(), q.query_id.clone()));
                continue;
            };
            let gold = &q.gold_workflow_ids;
            h1 += hit_at_k(&run.ranked_ids, gold, 1)?;
            h5 += hit_at_k(&run.ranked_ids, gold, 5)?;
            rec += recall_at_k(&run.ranked_ids, gold, RECALL_K)?;
            mrr += reciprocal_rank(&run.ranked_ids, gold)?;
            latency += run.latency_ms;
            timed += 1;
        }
        rows.push(EvalRow {
            method: method.to_string(),
            hit_at_1: 100.0 * h1 / n,
            hit_at_5: 100.0 * h5 / n,
            recall_at_50: 100.0 * rec / n,
            mrr: 100.0 * mrr / n,
            mean_latency_ms: if timed == 0 { 0.0 } else { latency / timed as f64 },
            n_queries: eligible.len(),
        });
    }
    Ok(EvalReport {
        rows,
        excluded_queries: excluded.iter().map(|q| q.query_id.clone()).collect(),
        missing_runs,
    })
}

/// Drops gold ids that are not in `corpus`. Returns how many were removed.
pub fn restrict_gold_to_corpus(queries: &mut [QueryRecord], corpus: &Corpus) -> usize {
    let mut removed = 0;
    for q in queries {
        let before = q.gold_workflow_ids.len();
        q.gold_workflow_ids.retain(|id| corpus.contains(id));
        removed += before - q.gold_workflow_ids.len();
    }
    removed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Depth of each returned list.
    pub k: usize,
    /// Shard queries across threads; results are merged in input order.
    pub parallel: bool,
    /// When false, latencies are recorded as 0 so reports are reproducible.
    pub measure_latency: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            k: RECALL_K,
            parallel: false,
            measure_latency: true,
        }
    }
}

/// Runs every retriever on every query. Records are ordered by query, then
/// by retriever, whatever the execution mode.
pub fn run_all(
    retrievers: &[&dyn Retriever],
    queries: &[QueryRecord],
    opts: RunOptions,
) -> Result<Vec<RunRecord>, EvalError> {
    let one = |q: &QueryRecord| -> Result<Vec<RunRecord>, EvalError> {
        retrievers
            .iter()
            .map(|r| {
                let (list, ms) = timed_search(*r, &q.text, opts.k).map_err(|source| EvalError::Search {
                    query_id: q.query_id.clone(),
                    source,
                })?;
                Ok(RunRecord {
                    query_id: q.query_id.clone(),
                    method: r.name(),
                    ranked_ids: list.ids(),
                    latency_ms: if opts.measure_latency { ms } else { 0.0 },
                })
            })
            .collect()
    };
    let nested: Vec<Vec<RunRecord>> = if opts.parallel {
        queries.par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        queries.iter().map(one).collect::<Result<_, _>>()?
    };
    Ok(nested.into_iter().flatten().collect())
}
