//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Every expected value comes from an oracle written
//! here, independent of the code under test.

// `ensure!(a < b)` must fail on NaN, so negated float comparisons are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;
use wfsearch_core::corpus::{load_queries, Corpus, QueryRecord, Source, Workflow};
use wfsearch_core::dense::{late_interaction_score, DenseIndex, MultiVectorIndex, TokenMatrixIndex};
use wfsearch_core::embed::{hash_embed, EmbeddingVector, HashEmbedder};
use wfsearch_core::engine::{IndexOptions, Method, SearchEngine};
use wfsearch_core::evalharness::{evaluate, hit_at_k, recall_at_k, reciprocal_rank, RunRecord, CSV_HEADER};
use wfsearch_core::fixture::{fixture_corpus, fixture_dir, synthetic_corpus};
use wfsearch_core::lexical::{Bm25Index, EmptyQueryPolicy, TfidfIndex};
use wfsearch_core::ranking::{RankedList, Scored};
use wfsearch_core::rerank::{rerank, ChatClient, ClientError, OpenAiChatClient, RerankConfig};
use wfsearch_core::textprep::FieldConfig;
use wfsearch_service::{router, AppState, ServiceConfig};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("metric oracle equivalence", metric_oracle),
        ("metric invariants", metric_invariants),
        ("lexical fixtures", lexical_fixtures),
        ("self-retrieval on fixture corpus", self_retrieval),
        ("dense search vs brute-force oracle", dense_vs_oracle),
        ("rerank robustness fuzz", rerank_fuzz),
        ("benchmark determinism", benchmark_determinism),
        ("hash embedder golden vectors", hash_golden),
        ("service contract", service_contract),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

// ---------------------------------------------------------------- metrics

struct MetricCase {
    ranking: Vec<String>,
    gold: BTreeSet<String>,
}

fn metric_cases() -> Vec<MetricCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let pool: Vec<String> = (0..120).map(|i| format!("wf{i:03}")).collect();
    (0..1000)
        .map(|_| {
            let mut ids = pool.clone();
            ids.shuffle(&mut rng);
            let ranking = ids[..50].to_vec();
            let size = rng.random_range(1..=10);
            // Gold is drawn from the whole pool, so some gold ids are unranked.
            let gold = pool.choose_multiple(&mut rng, size).cloned().collect();
            MetricCase { ranking, gold }
        })
        .collect()
}

/// Brute-force metric definitions, one loop each.
fn oracle_hit(r: &[String], g: &BTreeSet<String>, k: usize) -> f64 {
    let mut hit = 0.0;
    for (i, id) in r.iter().enumerate() {
        if i < k && g.contains(id) {
            hit = 1.0;
        }
    }
    hit
}

fn oracle_recall(r: &[String], g: &BTreeSet<String>, k: usize) -> f64 {
    let mut found = 0usize;
    for gid in g {
        let mut present = false;
        for id in r.iter().take(k) {
            if id == gid {
                present = true;
            }
        }
        if present {
            found += 1;
        }
    }
    found as f64 / g.len() as f64
}

fn oracle_rr(r: &[String], g: &BTreeSet<String>) -> f64 {
    for (i, id) in r.iter().enumerate() {
        if g.contains(id) {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

fn metric_oracle() -> Result<String, String> {
    let started = Instant::now();
    let cases = metric_cases();
    let mut sums = [0.0f64; 4];
    let mut runs = Vec::with_capacity(cases.len());
    let mut queries = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        let expect = [
            oracle_hit(&c.ranking, &c.gold, 1),
            oracle_hit(&c.ranking, &c.gold, 5),
            oracle_recall(&c.ranking, &c.gold, 50),
            oracle_rr(&c.ranking, &c.gold),
        ];
        let got = [
            hit_at_k(&c.ranking, &c.gold, 1).map_err(|e| e.to_string())?,
            hit_at_k(&c.ranking, &c.gold, 5).map_err(|e| e.to_string())?,
            recall_at_k(&c.ranking, &c.gold, 50).map_err(|e| e.to_string())?,
            reciprocal_rank(&c.ranking, &c.gold).map_err(|e| e.to_string())?,
        ];
        ensure!(got == expect, "case {i}: got {got:?}, oracle {expect:?}");
        for (s, e) in sums.iter_mut().zip(expect) {
            *s += e;
        }
        let qid = format!("q{i:04}");
        runs.push(RunRecord {
            query_id: qid.clone(),
            method: "m".into(),
            ranked_ids: c.ranking.clone(),
            latency_ms: 0.0,
        });
        queries.push(QueryRecord {
            query_id: qid,
            text: String::new(),
            topic: None,
            seed_ids: BTreeSet::new(),
            gold_workflow_ids: c.gold.clone(),
            provenance: None,
        });
    }
    let report = evaluate(&runs, &queries).map_err(|e| e.to_string())?;
    let row = report.row("m").ok_or("no report row")?;
    let n = cases.len() as f64;
    let means = [row.hit_at_1, row.hit_at_5, row.recall_at_50, row.mrr];
    for (name, (got, sum)) in ["hit@1", "hit@5", "recall@50", "mrr"]
        .iter()
        .zip(means.iter().zip(sums))
    {
        let want = 100.0 * sum / n;
        ensure!((got - want).abs() <= 1e-12, "{name} mean {got} vs oracle {want}");
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s, limit 5s");
    Ok(format!(
        "1000 cases exact; means hit@1={:.2} hit@5={:.2} recall@50={:.2} mrr={:.2}",
        means[0], means[1], means[2], means[3]
    ))
}

fn metric_invariants() -> Result<String, String> {
    let mut violations = Vec::new();
    for (i, c) in metric_cases().iter().enumerate() {
        let k_all = c.ranking.len();
        let m = |r: Result<f64, _>| r.unwrap_or(f64::NAN);
        let h1 = m(hit_at_k(&c.ranking, &c.gold, 1));
        let h5 = m(hit_at_k(&c.ranking, &c.gold, 5));
        let hk = m(hit_at_k(&c.ranking, &c.gold, k_all));
        let rr = m(reciprocal_rank(&c.ranking, &c.gold));
        if !(h1 <= h5 && h5 <= hk) {
            violations.push(format!("case {i}: hit@1 {h1} hit@5 {h5} hit@K {hk}"));
        }
        if !(h1 <= rr && rr <= hk) {
            violations.push(format!("case {i}: hit@1 {h1} mrr {rr} hit@K {hk}"));
        }
        let mut prev = 0.0;
        for k in 1..=k_all {
            let r = m(recall_at_k(&c.ranking, &c.gold, k));
            if r.is_nan() || r < prev {
                violations.push(format!("case {i}: recall@{k} {r} < {prev}"));
            }
            prev = r;
        }
    }
    ensure!(
        violations.is_empty(),
        "{} violations, first: {}",
        violations.len(),
        violations[0]
    );
    Ok("0 violations over 1000 cases".into())
}

// ---------------------------------------------------------------- lexical

fn title_corpus(docs: &[(&str, &str)]) -> Corpus {
    Corpus::new(
        docs.iter()
            .map(|(id, title)| Workflow {
                id: id.to_string(),
                title: title.to_string(),
                description: String::new(),
                tools: vec![],
                topic: None,
                source: Source::LocalFile,
                ga_path: None,
            })
            .collect(),
    )
    .expect("unique ids")
}

const TITLE_ONLY: FieldConfig = FieldConfig {
    use_title: true,
    use_description: false,
    use_tools: false,
};

fn scores_by_id(list: &RankedList) -> HashMap<String, f64> {
    list.iter().map(|s| (s.id.clone(), s.score)).collect()
}

fn lexical_fixtures() -> Result<String, String> {
    // BM25: d1 "aa bb", d2 "aa aa bb", d3 "cc dd"; query "aa". Tokens are
    // two letters because single characters are below the token minimum.
    let c = title_corpus(&[("d1", "aa bb"), ("d2", "aa aa bb"), ("d3", "cc dd")]);
    let bm = Bm25Index::build(&c, &TITLE_ONLY, 1.5, 0.75).map_err(|e| e.to_string())?;
    let got = scores_by_id(&bm.search("aa", 3, EmptyQueryPolicy::Error).map_err(|e| e.to_string())?);
    let (k1, b, n, df) = (1.5f64, 0.75f64, 3.0f64, 2.0f64);
    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
    let avgdl = (2.0 + 3.0 + 2.0) / 3.0;
    let oracle = |tf: f64, dl: f64| idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    let want = [("d1", oracle(1.0, 2.0)), ("d2", oracle(2.0, 3.0)), ("d3", 0.0)];
    for (id, w) in want {
        let g = got[id];
        ensure!((g - w).abs() <= 1e-9, "bm25 {id}: {g} vs oracle {w}");
    }
    ensure!(got["d3"] == 0.0, "bm25 d3 must be exactly 0, got {}", got["d3"]);
    ensure!(
        got["d2"] > got["d1"] && got["d1"] > got["d3"],
        "bm25 order d2 > d1 > d3 violated"
    );

    // TF-IDF: one doc "aa bb" gives idf 1 for both terms and a (1/√2, 1/√2) vector.
    let one = TfidfIndex::build(&title_corpus(&[("d", "aa bb")]), &TITLE_ONLY).map_err(|e| e.to_string())?;
    for t in ["aa", "bb"] {
        let idf = one.idf(t).ok_or("missing idf")?;
        ensure!((idf - 1.0).abs() <= 1e-12, "idf({t}) = {idf}, expected 1");
        let w = one.weight(0, t);
        ensure!(
            (w - 0.5f64.sqrt()).abs() <= 1e-12,
            "weight({t}) = {w}, expected 1/sqrt(2)"
        );
    }

    // TF-IDF: {d1 "align reads", d2 "variant calling"}.
    let c2 = title_corpus(&[("d1", "align reads"), ("d2", "variant calling")]);
    let tf = TfidfIndex::build(&c2, &TITLE_ONLY).map_err(|e| e.to_string())?;
    let run = |q: &str| -> Result<HashMap<String, f64>, String> {
        Ok(scores_by_id(
            &tf.search(q, 2, EmptyQueryPolicy::Error).map_err(|e| e.to_string())?,
        ))
    };
    let s = run("align reads")?;
    ensure!((s["d1"] - 1.0).abs() <= 1e-9, "tfidf d1 {} vs 1.0", s["d1"]);
    ensure!(s["d2"] == 0.0, "tfidf d2 must be exactly 0, got {}", s["d2"]);
    // Every term has df 1, so all weights are equal: each doc and the query
    // are (1/√2, 1/√2) over their two terms; one shared term gives 1/2.
    let s = run("align variant")?;
    for id in ["d1", "d2"] {
        ensure!((s[id] - 0.5).abs() <= 1e-9, "tfidf {id} {} vs 0.5", s[id]);
    }
    Ok("bm25 3-doc and tfidf 1-doc/2-doc fixtures within 1e-9; non-matching docs score exactly 0".into())
}

// ---------------------------------------------------------------- self-retrieval

fn self_retrieval() -> Result<String, String> {
    let started = Instant::now();
    let corpus = fixture_corpus();
    let methods = [Method::Tfidf, Method::Bm25, Method::Fuzzy, Method::Dense];
    let opts = IndexOptions {
        methods: methods.to_vec(),
        ..IndexOptions::default()
    };
    let engine = SearchEngine::build(
        Arc::new(corpus.clone()),
        Arc::new(HashEmbedder::new(256).map_err(|e| e.to_string())?),
        opts,
    )
    .map_err(|e| e.to_string())?;
    let queries: Vec<QueryRecord> = corpus
        .workflows()
        .iter()
        .map(|w| QueryRecord {
            query_id: w.id.clone(),
            text: w.title.clone(),
            topic: None,
            seed_ids: BTreeSet::new(),
            gold_workflow_ids: [w.id.clone()].into(),
            provenance: None,
        })
        .collect();
    let mut runs = Vec::new();
    for m in methods {
        for q in &queries {
            let list = engine.search(m, &q.text, 10).map_err(|e| e.to_string())?;
            runs.push(RunRecord {
                query_id: q.query_id.clone(),
                method: m.to_string(),
                ranked_ids: list.ids(),
                latency_ms: 0.0,
            });
        }
    }
    let report = evaluate(&runs, &queries).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for m in methods {
        let row = report.row(m.as_str()).ok_or("missing row")?;
        ensure!(row.mrr == 100.0, "{m}: MRR {:.2}, expected 100", row.mrr);
        parts.push(format!("{m}=1.00"));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 2.0, "took {secs:.2}s, limit 2s");
    Ok(format!("{} titles; MRR {}", queries.len(), parts.join(" ")))
}

// ---------------------------------------------------------------- dense

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn oracle_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Full sort by score descending, id ascending.
fn oracle_order(mut scored: Vec<(String, f64)>) -> Vec<String> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().map(|(id, _)| id).collect()
}

fn dense_vs_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde15e);
    let (docs, dim) = (50, 32);
    let ev = |v: &[f64]| EmbeddingVector::normalized(v.to_vec());
    let mut checked = 0usize;
    for inst in 0..100 {
        let ids: Vec<String> = (0..docs).map(|i| format!("d{i:02}")).collect();

        // Single vector.
        let rows: Vec<Vec<f64>> = (0..docs).map(|_| random_unit(&mut rng, dim)).collect();
        let index =
            DenseIndex::from_vectors(ids.clone(), rows.iter().map(|r| ev(r)).collect()).map_err(|e| e.to_string())?;
        let q = random_unit(&mut rng, dim);
        let got = index.search(&ev(&q), docs).map_err(|e| e.to_string())?;
        let scored: Vec<(String, f64)> = ids
            .iter()
            .cloned()
            .zip(rows.iter().map(|r| oracle_cos(&q, r)))
            .collect();
        let want_scores: HashMap<_, _> = scored.iter().cloned().collect();
        ensure!(
            got.ids() == oracle_order(scored),
            "instance {inst}: dense order differs from brute force"
        );
        for s in got.iter() {
            ensure!(
                (s.score - want_scores[&s.id]).abs() <= 1e-9,
                "instance {inst}: dense score for {}",
                s.id
            );
        }

        // Multivector: a document scores its best chunk.
        let chunks: Vec<Vec<Vec<f64>>> = (0..docs)
            .map(|_| {
                (0..rng.random_range(1..=4))
                    .map(|_| random_unit(&mut rng, dim))
                    .collect()
            })
            .collect();
        let mv = MultiVectorIndex::from_chunks(
            ids.clone(),
            chunks.iter().map(|cs| cs.iter().map(|c| ev(c)).collect()).collect(),
        )
        .map_err(|e| e.to_string())?;
        let got = mv.search(&ev(&q), docs).map_err(|e| e.to_string())?;
        let mut scored = Vec::new();
        for (id, cs) in ids.iter().zip(&chunks) {
            let mut best = f64::NEG_INFINITY;
            for c in cs {
                best = best.max(oracle_cos(&q, c));
            }
            scored.push((id.clone(), best));
        }
        let want_scores: HashMap<_, _> = scored.iter().cloned().collect();
        ensure!(
            got.ids() == oracle_order(scored),
            "instance {inst}: multivector order differs"
        );
        for s in got.iter() {
            ensure!(
                (s.score - want_scores[&s.id]).abs() <= 1e-9,
                "instance {inst}: multivector score for {}",
                s.id
            );
        }

        // MaxSim: sum over query tokens of the best document token.
        let q_tokens: Vec<Vec<f64>> = (0..rng.random_range(1..=5))
            .map(|_| random_unit(&mut rng, dim))
            .collect();
        let q_ev: Vec<EmbeddingVector> = q_tokens.iter().map(|t| ev(t)).collect();
        let tm = TokenMatrixIndex::from_matrices(
            ids.clone(),
            chunks.iter().map(|cs| cs.iter().map(|c| ev(c)).collect()).collect(),
        )
        .map_err(|e| e.to_string())?;
        let got = tm.search(&q_ev, docs, false).map_err(|e| e.to_string())?;
        let got_scores = scores_by_id(&got);
        for (id, d_tokens) in ids.iter().zip(&chunks) {
            let mut want = 0.0;
            for qt in &q_tokens {
                let mut best = f64::NEG_INFINITY;
                for dt in d_tokens {
                    best = best.max(oracle_cos(qt, dt));
                }
                want += best;
            }
            let d_ev: Vec<EmbeddingVector> = d_tokens.iter().map(|t| ev(t)).collect();
            let direct = late_interaction_score(&q_ev, &d_ev, false).map_err(|e| e.to_string())?;
            ensure!(
                (direct - want).abs() <= 1e-9,
                "instance {inst}: maxsim {direct} vs {want}"
            );
            ensure!(
                (got_scores[id] - want).abs() <= 1e-9,
                "instance {inst}: maxsim index score for {id}"
            );
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} instances ({docs} docs, dim {dim}): dense, multivector and MaxSim agree"
    ))
}

// ---------------------------------------------------------------- rerank

/// Replays one scripted reply; ids are read back from the prompt.
struct Scripted {
    kind: usize,
    seed: u64,
}

const TRANSCRIPT_KINDS: usize = 12;

impl ChatClient for Scripted {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ids: Vec<String> = prompt
            .lines()
            .filter_map(|l| Some(l.split_once(". [")?.1.split_once(']')?.0.to_string()))
            .collect();
        let entry = |id: &str, s: f64| json!({"id": id, "score": s});
        let valid = json!({"scores": ids.iter().map(|id| entry(id, rng.random())).collect::<Vec<_>>()}).to_string();
        Ok(match self.kind {
            0 => valid,
            1 => {
                let cut = rng.random_range(0..valid.len().max(1));
                valid[..cut].to_string()
            }
            2 => (0..rng.random_range(0..200))
                .map(|_| rng.random_range(0x20u8..0x7f) as char)
                .collect(),
            3 => json!({"scores": (0..5).map(|i| entry(&format!("ghost-{i}"), 0.9)).collect::<Vec<_>>()}).to_string(),
            4 => {
                let dup: Vec<Value> = ids
                    .iter()
                    .flat_map(|id| [entry(id, rng.random()), entry(id, 1.0)])
                    .collect();
                json!({"scores": dup}).to_string()
            }
            5 => return Err(ClientError::Timeout),
            6 => return Err(ClientError::Network("connection reset".into())),
            7 => json!({"scores": ids.iter().map(|id| entry(id, rng.random_range(-50.0..50.0))).collect::<Vec<_>>()})
                .to_string(),
            8 => format!("Sure! Here you go:\n```json\n{valid}\n```\nHope that helps."),
            9 => String::new(),
            10 => json!({"scores": ids.iter().map(|id| json!({"id": id, "score": "high"})).collect::<Vec<_>>()})
                .to_string(),
            _ => {
                let mut partial = Vec::new();
                for id in &ids {
                    if rng.random_bool(0.4) {
                        partial.push(entry(id, rng.random()));
                    }
                }
                json!({"scores": partial, "extra": [[[{"id": null}]]]}).to_string()
            }
        })
    }
}

fn rerank_fuzz() -> Result<String, String> {
    let corpus = synthetic_corpus(60, 11);
    let all: Vec<String> = corpus.ids().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let cfg = RerankConfig {
        candidates_k: 50,
        ..RerankConfig::default()
    };
    let (mut used, mut fallback) = (0, 0);
    for case in 0..500 {
        let n = rng.random_range(1..=40);
        let mut ids = all.clone();
        ids.shuffle(&mut rng);
        let mut hits: Vec<Scored> = ids[..n]
            .iter()
            .map(|id| Scored {
                id: id.clone(),
                score: (rng.random_range(0..20) as f64) / 4.0,
            })
            .collect();
        hits.sort_by(wfsearch_core::ranking::rank_order);
        let stage1 = RankedList::from_ordered(hits);
        let kind = case % TRANSCRIPT_KINDS;
        let client = Scripted {
            kind,
            seed: rng.random(),
        };
        let out = panic::catch_unwind(AssertUnwindSafe(|| rerank("rna seq", &stage1, &corpus, &client, &cfg)))
            .map_err(|p| format!("case {case} (kind {kind}) panicked: {}", panic_message(&p)))?;
        let mut a = out.list.ids();
        let mut b = stage1.ids();
        if !out.used_llm {
            ensure!(a == b, "case {case} (kind {kind}): fallback changed stage-1 order");
            fallback += 1;
        } else {
            used += 1;
        }
        a.sort();
        b.sort();
        ensure!(
            a == b,
            "case {case} (kind {kind}): output is not a permutation of the candidates"
        );
        if matches!(kind, 5 | 6 | 9) {
            ensure!(!out.used_llm, "case {case}: failed call reported used_llm");
        }
    }
    Ok(format!(
        "500 transcripts, {used} reranked, {fallback} fell back; all permutations, no panics"
    ))
}

// ---------------------------------------------------------------- benchmark

fn wfsearch(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_wfsearch"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "wfsearch {} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn pipeline(dir: &Path, corpus: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    wfsearch(&[
        "cluster",
        "--corpus",
        corpus,
        "--topics",
        "4",
        "--seed",
        "13",
        "--out",
        &p("model.json"),
    ])?;
    wfsearch(&[
        "genqueries",
        "--corpus",
        corpus,
        "--model",
        &p("model.json"),
        "--mode",
        "template",
        "--n",
        "3",
        "--out",
        &p("raw.jsonl"),
    ])?;
    wfsearch(&[
        "goldgen",
        "--corpus",
        corpus,
        "--queries",
        &p("raw.jsonl"),
        "--model",
        &p("model.json"),
        "--tau",
        "0.2",
        "--min-overlap",
        "2",
        "--out",
        &p("q.jsonl"),
    ])?;
    wfsearch(&[
        "eval",
        "--corpus",
        corpus,
        "--queries",
        &p("q.jsonl"),
        "--methods",
        "tfidf,bm25,fuzzy,dense,multivector",
        "--no-latency",
        "--out",
        &p("report.csv"),
    ])?;
    let read = |n: &str| std::fs::read(dir.join(n)).map_err(|e| format!("{n}: {e}"));
    Ok((read("q.jsonl")?, read("report.csv")?))
}

fn benchmark_determinism() -> Result<String, String> {
    let corpus = fixture_dir().join("corpus.json").to_string_lossy().into_owned();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        std::fs::create_dir(d).map_err(|e| e.to_string())?;
    }
    let (qa, ra) = pipeline(&a, &corpus)?;
    let (qb, rb) = pipeline(&b, &corpus)?;
    ensure!(qa == qb, "queries JSONL differs between runs");
    ensure!(ra == rb, "report CSV differs between runs");
    let csv = String::from_utf8(ra).map_err(|e| e.to_string())?;
    ensure!(
        csv.lines().next() == Some(CSV_HEADER.join(",").as_str()),
        "unexpected CSV header"
    );
    ensure!(csv.lines().count() == 6, "expected 5 method rows");

    let queries = load_queries(&a.join("q.jsonl")).map_err(|e| e.to_string())?;
    ensure!(queries.len() == 12, "expected 12 queries, got {}", queries.len());
    for q in &queries {
        ensure!(!q.seed_ids.is_empty(), "{}: no seeds", q.query_id);
        ensure!(
            q.seed_ids.is_subset(&q.gold_workflow_ids),
            "{}: seeds not in gold",
            q.query_id
        );
    }

    let p = |name: &str| a.join(name).to_string_lossy().into_owned();
    for tau in ["0.1", "0.3"] {
        wfsearch(&[
            "goldgen",
            "--corpus",
            &corpus,
            "--queries",
            &p("raw.jsonl"),
            "--model",
            &p("model.json"),
            "--tau",
            tau,
            "--min-overlap",
            "2",
            "--out",
            &p(&format!("q{tau}.jsonl")),
        ])?;
    }
    let lo = load_queries(&a.join("q0.1.jsonl")).map_err(|e| e.to_string())?;
    let hi = load_queries(&a.join("q0.3.jsonl")).map_err(|e| e.to_string())?;
    let mut grew = 0;
    for (l, h) in lo.iter().zip(&hi) {
        ensure!(l.query_id == h.query_id, "query order differs");
        ensure!(
            l.gold_workflow_ids.is_superset(&h.gold_workflow_ids),
            "{}: gold at tau 0.1 is not a superset of gold at tau 0.3",
            l.query_id
        );
        grew += l.gold_workflow_ids.len() - h.gold_workflow_ids.len();
    }
    Ok(format!(
        "{} bytes JSONL and {} bytes CSV identical across runs; seeds within gold; tau 0.1 adds {grew} gold ids over 0.3",
        qa.len(),
        csv.len()
    ))
}

// ---------------------------------------------------------------- hash golden

fn hash_golden() -> Result<String, String> {
    let text = std::fs::read_to_string(fixture_dir().join("hash_golden.json")).map_err(|e| e.to_string())?;
    let golden: Vec<Value> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(golden.len() == 5, "expected 5 golden strings");
    for g in &golden {
        let s = g["text"].as_str().ok_or("text")?;
        let dim = g["dim"].as_u64().ok_or("dim")? as usize;
        ensure!(dim == 256, "golden dim {dim}");
        let a = hash_embed(s, dim).map_err(|e| e.to_string())?;
        let b = hash_embed(s, dim).map_err(|e| e.to_string())?;
        let bits = |v: &EmbeddingVector| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&a) == bits(&b), "{s:?}: runs differ");
        ensure!(a.dim() == 256, "{s:?}: dim {}", a.dim());
        let norm = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        ensure!((norm - 1.0).abs() <= 1e-6, "{s:?}: norm {norm}");
        let mut want = vec![0.0; dim];
        for pair in g["nonzero"].as_array().ok_or("nonzero")? {
            want[pair[0].as_u64().ok_or("idx")? as usize] = pair[1].as_f64().ok_or("value")?;
        }
        for (i, (x, w)) in a.values().iter().zip(&want).enumerate() {
            ensure!((x - w).abs() <= 1e-12, "{s:?}[{i}]: {x} vs frozen {w}");
        }
    }
    Ok("5 strings bit-identical across runs, unit norm, equal to frozen reference vectors".into())
}

// ---------------------------------------------------------------- service

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.expect("body").to_bytes().to_vec();
    (status, headers, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: Vec<u8>) -> (StatusCode, Value) {
    let req = Request::post("/api/search")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .unwrap();
    let (s, _, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn fixture_state(chat: Option<Arc<dyn ChatClient>>) -> Result<AppState, String> {
    let cfg = ServiceConfig {
        corpus_path: fixture_dir().join("corpus.json"),
        ..ServiceConfig::default()
    };
    let st = AppState::new(cfg, Arc::new(HashEmbedder::new(256).map_err(|e| e.to_string())?), chat);
    st.rebuild().map_err(|e| e.to_string())?;
    Ok(st)
}

fn sanitized(id: &str) -> String {
    let stem = id.strip_suffix(".ga").unwrap_or(id);
    let clean: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}.ga")
}

fn malformed_bodies() -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbad_b0d);
    let valid = br#"{"query":"rna seq","k":5,"method":"bm25"}"#;
    let shapes: Vec<Value> = vec![
        json!(null),
        json!([]),
        json!("query"),
        json!(42),
        json!({}),
        json!({"query": 7}),
        json!({"query": {"nested": true}}),
        json!({"query": "rna", "k": "five"}),
        json!({"query": "rna", "k": -1}),
        json!({"query": "rna", "k": 1e300}),
        json!({"query": "rna", "k": 18446744073709551615u64}),
        json!({"query": "rna", "method": ""}),
        json!({"query": "rna", "method": ["bm25"]}),
        json!({"query": "rna", "rerank": 1}),
        json!({"query": "\u{0000}\u{ffff}"}),
        json!({"query": "   "}),
        json!({"query": "rna", "k": 0}),
    ];
    (0..100)
        .map(|i| match i % 4 {
            0 => (0..rng.random_range(0..64)).map(|_| rng.random()).collect(),
            1 => valid[..rng.random_range(0..valid.len())].to_vec(),
            2 => shapes[rng.random_range(0..shapes.len())].to_string().into_bytes(),
            _ => {
                let mut v = valid.to_vec();
                let pos = rng.random_range(0..v.len());
                v[pos] = rng.random();
                v
            }
        })
        .collect()
}

fn service_contract() -> Result<String, String> {
    // Blocking HTTP clients are built before any async runtime exists.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .and_then(|l| l.local_addr())
        .map_err(|e| e.to_string())?
        .port();
    let dead = RerankConfig {
        endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        model_name: "m".into(),
        timeout_s: 2.0,
        max_retries: 0,
        ..RerankConfig::default()
    };
    let unreachable: Arc<dyn ChatClient> = Arc::new(OpenAiChatClient::new(&dead).map_err(|e| e.to_string())?);
    let fixture = fixture_state(Some(unreachable))?;
    let plain = fixture_state(None)?;

    let synth_cfg = ServiceConfig {
        index: IndexOptions {
            methods: vec![Method::Tfidf, Method::Bm25, Method::Fuzzy],
            ..IndexOptions::default()
        },
        ..ServiceConfig::default()
    };
    let synth = AppState::new(
        synth_cfg,
        Arc::new(HashEmbedder::new(256).map_err(|e| e.to_string())?),
        None,
    );
    let synth_corpus = synthetic_corpus(1000, 5);
    let latency_queries: Vec<String> = synth_corpus
        .workflows()
        .iter()
        .step_by(20)
        .map(|w| w.title.clone())
        .collect();
    synth.install(synth_corpus).map_err(|e| e.to_string())?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let app = router(fixture.clone());
        let corpus = fixture_corpus();

        let (s, _, b) = get(&app, "/health").await;
        let v: Value = serde_json::from_slice(&b).map_err(|e| e.to_string())?;
        ensure!(s == StatusCode::OK, "/health status {s}");
        ensure!(v == json!({"status":"ok","corpus_size":20,"index_ready":true}), "/health body {v}");

        for w in corpus.workflows() {
            for m in ["tfidf", "bm25", "fuzzy", "dense", "multivector"] {
                let body = json!({"query": w.title, "method": m, "k": 5}).to_string().into_bytes();
                let (s, v) = post(&app, body).await;
                ensure!(s == StatusCode::OK, "search {m} status {s}");
                let results = v["results"].as_array().ok_or("results")?;
                ensure!(results.len() <= 5 && !results.is_empty(), "search {m}: {} results", results.len());
                ensure!(results[0]["id"] == w.id.as_str(), "{m}: {:?} not at rank 1", w.title);
                for (i, r) in results.iter().enumerate() {
                    ensure!(r["rank"] == i + 1, "ranks not 1..n");
                    for key in ["id", "title", "description", "score", "rank", "ga_url"] {
                        ensure!(r.get(key).is_some(), "result lacks {key}");
                    }
                }
                ensure!(v["timings"]["retrieval_ms"].is_number(), "retrieval_ms missing");
                ensure!(v["timings"]["rerank_ms"].is_null(), "rerank_ms should be null");
                ensure!(v["used_llm"] == false && v["warnings"] == json!([]), "unexpected llm/warnings");
            }
        }

        let (s, v) = post(&app, br#"{"query":"","k":5}"#.to_vec()).await;
        ensure!(s == StatusCode::BAD_REQUEST && v["error"]["code"] == "empty_query", "empty query: {s} {v}");
        let (s, v) = post(&app, br#"{"query":"rna","method":"nope"}"#.to_vec()).await;
        ensure!(s == StatusCode::BAD_REQUEST && v["error"]["code"] == "unknown_method", "unknown method: {s} {v}");

        let q = json!({"query": "rna seq reads genes", "method": "bm25", "k": 5});
        let (_, base) = post(&app, q.to_string().into_bytes()).await;
        let mut with = q.clone();
        with["rerank"] = json!(true);
        let (s, v) = post(&app, with.to_string().into_bytes()).await;
        ensure!(s == StatusCode::OK, "rerank fallback status {s}");
        ensure!(v["used_llm"] == false, "rerank fallback used_llm {}", v["used_llm"]);
        ensure!(v["warnings"].as_array().map(Vec::len) == Some(1), "rerank fallback warnings {}", v["warnings"]);
        let ids = |v: &Value| -> Vec<Value> {
            v["results"].as_array().into_iter().flatten().map(|r| r["id"].clone()).collect()
        };
        ensure!(ids(&v) == ids(&base), "rerank fallback changed the order");

        let w = &corpus.workflows()[0];
        let enc = w.id.replace('/', "%2F");
        let (s, _, b) = get(&app, &format!("/api/workflows/{enc}")).await;
        let v: Value = serde_json::from_slice(&b).unwrap_or(Value::Null);
        ensure!(s == StatusCode::OK && v["id"] == w.id.as_str() && v["title"] == w.title.as_str(), "metadata: {s} {v}");
        let (s, _, _) = get(&app, "/api/workflows/no%2Fsuch%2Fid.ga").await;
        ensure!(s == StatusCode::NOT_FOUND, "unknown id status {s}");
        let (s, h, b) = get(&app, &format!("/api/workflows/{enc}/ga")).await;
        ensure!(s == StatusCode::OK, "download status {s}");
        let disposition = h
            .get(header::CONTENT_DISPOSITION)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        ensure!(
            disposition.starts_with("attachment") && disposition.contains(&format!("filename=\"{}\"", sanitized(&w.id))),
            "content-disposition {disposition:?}"
        );
        let on_disk = std::fs::read(fixture_dir().join(w.ga_path.as_deref().ok_or("ga_path")?)).map_err(|e| e.to_string())?;
        ensure!(b == on_disk, "downloaded bytes differ from the .ga file");

        let fuzz_app = router(plain);
        let mut statuses: HashMap<u16, usize> = HashMap::new();
        for body in malformed_bodies() {
            let (s, _) = post(&fuzz_app, body).await;
            ensure!(s.as_u16() < 500, "malformed body produced {s}");
            *statuses.entry(s.as_u16()).or_default() += 1;
        }

        let synth_app = router(synth);
        let mut means = Vec::new();
        for m in ["tfidf", "bm25", "fuzzy"] {
            let started = Instant::now();
            for q in &latency_queries {
                let (s, _) = post(&synth_app, json!({"query": q, "method": m, "k": 10}).to_string().into_bytes()).await;
                ensure!(s == StatusCode::OK, "latency query status {s}");
            }
            let mean = started.elapsed() / latency_queries.len() as u32;
            ensure!(mean < Duration::from_millis(50), "{m} mean latency {mean:?} over 1000 docs");
            means.push(format!("{m} {:.2}ms", mean.as_secs_f64() * 1e3));
        }
        let mut codes: Vec<_> = statuses.into_iter().collect();
        codes.sort();
        Ok(format!(
            "health/search/rerank-fallback/metadata/download ok; 100 malformed bodies -> {codes:?}; mean latency on 1000 docs: {}",
            means.join(", ")
        ))
    })
}
