use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;
use wfsearch_core::corpus::{save_corpus, Corpus, Source, Workflow};
use wfsearch_core::embed::HashEmbedder;
use wfsearch_core::fixture::{fixture_corpus, fixture_dir};
use wfsearch_core::http::Secret;
use wfsearch_core::rerank::{ChatClient, ClientError, OpenAiChatClient, RerankConfig};
use wfsearch_service::{router, AppState, ServiceConfig};

fn config_for(corpus_path: &Path) -> ServiceConfig {
    ServiceConfig {
        corpus_path: corpus_path.to_path_buf(),
        admin_token: Some(Secret::new("letmein")),
        ..ServiceConfig::default()
    }
}

fn state_with(config: ServiceConfig, chat: Option<Arc<dyn ChatClient>>) -> AppState {
    AppState::new(config, Arc::new(HashEmbedder::new(256).unwrap()), chat)
}

fn fixture_state(chat: Option<Arc<dyn ChatClient>>) -> AppState {
    let st = state_with(config_for(&fixture_dir().join("corpus.json")), chat);
    st.rebuild().unwrap();
    st
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, _, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post_json(app: &Router, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.into())
        .unwrap();
    let (s, _, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn search(app: &Router, body: Value) -> (StatusCode, Value) {
    post_json(app, "/api/search", body.to_string()).await
}

fn encode(id: &str) -> String {
    id.replace('/', "%2F")
}

#[tokio::test]
async fn health_tracks_readiness() {
    let st = state_with(config_for(&fixture_dir().join("corpus.json")), None);
    st.load_corpus().unwrap();
    let app = router(st.clone());
    let (s, v) = get_json(&app, "/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"status":"ok","corpus_size":20,"index_ready":false}));

    let (s, v) = search(&app, json!({"query":"rna"})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["code"], "index_not_ready");

    st.rebuild().unwrap();
    let (_, v) = get_json(&app, "/health").await;
    assert_eq!(v["index_ready"], true);
    assert_eq!(v["corpus_size"], 20);
}

#[tokio::test]
async fn fixture_titles_rank_first() {
    let app = router(fixture_state(None));
    for w in fixture_corpus().workflows() {
        for method in ["tfidf", "bm25", "fuzzy", "dense", "multivector"] {
            let (s, v) = search(&app, json!({"query": w.title, "method": method, "k": 5})).await;
            assert_eq!(s, StatusCode::OK, "{v}");
            let results = v["results"].as_array().unwrap();
            assert!(!results.is_empty() && results.len() <= 5);
            assert_eq!(results[0]["id"], w.id.as_str(), "{method} on {:?}", w.title);
            for (i, r) in results.iter().enumerate() {
                assert_eq!(r["rank"], i + 1);
                if i > 0 {
                    assert!(r["score"].as_f64().unwrap() <= results[i - 1]["score"].as_f64().unwrap());
                }
            }
            assert_eq!(results[0]["ga_url"], format!("/api/workflows/{}/ga", encode(&w.id)));
            assert_eq!(v["used_llm"], false);
            assert!(v["timings"]["rerank_ms"].is_null());
            assert!(v["timings"]["retrieval_ms"].as_f64().unwrap() >= 0.0);
        }
    }
}

#[tokio::test]
async fn search_validation() {
    let app = router(fixture_state(None));
    let cases = [
        (json!({"query":"","k":5}), "empty_query"),
        (json!({"query":"  ?! "}), "empty_query"),
        (json!({"k":5}), "empty_query"),
        (json!({"query":"rna","method":"colbert"}), "unknown_method"),
        (json!({"query":"rna","method":"maxsim"}), "unknown_method"),
        (json!({"query":"rna","method":7}), "unknown_method"),
        (json!({"query":"rna","k":0}), "invalid_k"),
        (json!({"query":"rna","k":-3}), "invalid_k"),
        (json!({"query":"rna","k":1.5}), "invalid_k"),
        (json!({"query":"rna","rerank":"yes"}), "invalid_request"),
        (json!({"query":["rna"]}), "invalid_request"),
        (json!(["rna"]), "invalid_request"),
    ];
    for (body, code) in cases {
        let (s, v) = search(&app, body.clone()).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(v["error"]["code"], code, "{body}");
    }
    let (s, v) = post_json(&app, "/api/search", "{\"query\":").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "invalid_json");

    let (s, v) = search(&app, json!({"query":"rna seq"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["method"], "bm25");
    assert!(v["results"].as_array().unwrap().len() <= 10);
}

fn unreachable_reranker() -> Arc<dyn ChatClient> {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = RerankConfig {
        endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
        model_name: "m".into(),
        timeout_s: 1.0,
        max_retries: 0,
        ..RerankConfig::default()
    };
    // Blocking clients must be built off the async runtime thread.
    std::thread::spawn(move || Arc::new(OpenAiChatClient::new(&cfg).unwrap()) as Arc<dyn ChatClient>)
        .join()
        .unwrap()
}

#[tokio::test]
async fn rerank_fallback_keeps_stage_one() {
    let app = router(fixture_state(Some(unreachable_reranker())));
    let q = json!({"query":"rna seq reads genes","method":"bm25","k":5});
    let (_, plain) = search(&app, q.clone()).await;
    let mut with = q.clone();
    with["rerank"] = json!(true);
    let (s, v) = search(&app, with).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["used_llm"], false);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
    let ids = |v: &Value| {
        v["results"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["id"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(ids(&v), ids(&plain));
    assert!(v["timings"]["rerank_ms"].as_f64().is_some());
}

#[tokio::test]
async fn rerank_without_client_warns() {
    let app = router(fixture_state(None));
    let (s, v) = search(&app, json!({"query":"variant calling","rerank":true})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["used_llm"], false);
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
}

/// Scores candidates by reverse position in the prompt.
struct Reverser;

impl ChatClient for Reverser {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let ids: Vec<&str> = prompt
            .lines()
            .filter_map(|l| Some(l.split_once(". [")?.1.split_once(']')?.0))
            .collect();
        let n = ids.len() as f64;
        let scores: Vec<Value> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| json!({"id": id, "score": (i as f64 + 1.0) / n}))
            .collect();
        Ok(json!({"scores": scores}).to_string())
    }
}

#[tokio::test]
async fn rerank_applies_model_order_then_truncates() {
    let mut cfg = config_for(&fixture_dir().join("corpus.json"));
    cfg.rerank.candidates_k = 8;
    let st = state_with(cfg, Some(Arc::new(Reverser)));
    st.rebuild().unwrap();
    let app = router(st);
    let (_, deep) = search(&app, json!({"query":"reads samples","method":"bm25","k":8})).await;
    let (s, v) = search(
        &app,
        json!({"query":"reads samples","method":"bm25","k":3,"rerank":true}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["used_llm"], true);
    let got: Vec<&Value> = v["results"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
    let mut expect: Vec<&Value> = deep["results"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
    expect.reverse();
    expect.truncate(3);
    assert_eq!(got, expect);
    assert_eq!(v["results"][2]["rank"], 3);
}

#[tokio::test]
async fn workflow_metadata_and_download() {
    let app = router(fixture_state(None));
    let w = fixture_corpus().workflows()[0].clone();
    let (s, v) = get_json(&app, &format!("/api/workflows/{}", encode(&w.id))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["id"], w.id.as_str());
    assert_eq!(v["title"], w.title.as_str());
    assert_eq!(v["tools"], json!(w.tools));

    let (s, v) = get_json(&app, "/api/workflows/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "not_found");

    let req = Request::get(format!("/api/workflows/{}/ga", encode(&w.id)))
        .body(Body::empty())
        .unwrap();
    let (s, h, body) = call(&app, req).await;
    assert_eq!(s, StatusCode::OK);
    let expected = std::fs::read(fixture_dir().join(w.ga_path.as_deref().unwrap())).unwrap();
    assert_eq!(body, expected);
    let cd = h[header::CONTENT_DISPOSITION].to_str().unwrap();
    assert_eq!(cd, "attachment; filename=\"metagenomics_amr-gene-detection_main.ga\"");
}

fn wf(id: &str, ga_path: Option<&str>) -> Workflow {
    Workflow {
        id: id.into(),
        title: format!("title {id}"),
        description: String::new(),
        tools: vec![],
        topic: None,
        source: Source::LocalFile,
        ga_path: ga_path.map(str::to_owned),
    }
}

#[tokio::test]
async fn download_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("here.ga"), "{\"steps\":{}}").unwrap();
    let corpus = Corpus::new(vec![
        wf("nopath", None),
        wf("missing", Some("gone/absent.ga")),
        wf(
            "remote",
            Some("https://usegalaxy.example/api/workflows/x/download?format=json-download"),
        ),
        wf("local", Some("here.ga")),
    ])
    .unwrap();
    let path = dir.path().join("corpus.json");
    save_corpus(&corpus, &path).unwrap();
    let st = state_with(config_for(&path), None);
    st.rebuild().unwrap();
    let app = router(st);

    for id in ["nopath", "missing"] {
        let (s, v) = get_json(&app, &format!("/api/workflows/{id}/ga")).await;
        assert_eq!(s, StatusCode::GONE, "{id}");
        assert_eq!(v["error"]["code"], "ga_unavailable");
    }
    let (s, v) = get_json(&app, "/api/workflows/nopath").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["ga_url"].is_null());

    let (s, h, _) = call(
        &app,
        Request::get("/api/workflows/remote/ga").body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::TEMPORARY_REDIRECT);
    assert!(h[header::LOCATION]
        .to_str()
        .unwrap()
        .starts_with("https://usegalaxy.example/"));

    let (s, h, body) = call(
        &app,
        Request::get("/api/workflows/local/ga").body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"{\"steps\":{}}");
    assert!(h[header::CONTENT_DISPOSITION]
        .to_str()
        .unwrap()
        .contains("filename=\"local.ga\""));
}

fn reindex_req(token: Option<&str>) -> Request<Body> {
    let mut b = Request::post("/api/reindex");
    if let Some(t) = token {
        b = b.header("x-admin-token", t);
    }
    b.body(Body::empty()).unwrap()
}

#[tokio::test]
async fn reindex_contract() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.json");
    save_corpus(&Corpus::new(vec![wf("one", None)]).unwrap(), &path).unwrap();
    let st = state_with(config_for(&path), None);
    st.rebuild().unwrap();
    let app = router(st.clone());

    assert_eq!(call(&app, reindex_req(None)).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, reindex_req(Some("wrong"))).await.0, StatusCode::UNAUTHORIZED);

    // A rebuild already in flight blocks a second one.
    assert!(st.try_begin_reindex());
    let (s, _, b) = call(&app, reindex_req(Some("letmein"))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(
        serde_json::from_slice::<Value>(&b).unwrap()["error"]["code"],
        "reindex_in_progress"
    );
    st.end_reindex();

    save_corpus(&Corpus::new(vec![wf("one", None), wf("two", None)]).unwrap(), &path).unwrap();
    let old = st.snapshot().unwrap();
    assert_eq!(call(&app, reindex_req(Some("letmein"))).await.0, StatusCode::ACCEPTED);
    for _ in 0..200 {
        if st.snapshot().unwrap().generation > old.generation {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    let new = st.snapshot().unwrap();
    assert_eq!(new.generation, old.generation + 1);
    assert_eq!(new.engine.corpus().len(), 2);
    // The old snapshot is still intact for whoever holds it.
    assert_eq!(old.engine.corpus().len(), 1);
    let (_, v) = get_json(&app, "/health").await;
    assert_eq!(v["corpus_size"], 2);
}

#[tokio::test]
async fn reindex_disabled_without_token() {
    let st = state_with(
        ServiceConfig {
            corpus_path: fixture_dir().join("corpus.json"),
            ..ServiceConfig::default()
        },
        None,
    );
    let app = router(st);
    assert_eq!(call(&app, reindex_req(Some(""))).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn searches_survive_concurrent_reindex() {
    let st = fixture_state(None);
    let app = router(st.clone());
    let mut tasks = Vec::new();
    for i in 0..40 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let body = json!({"query": format!("reads {i}"), "method": "tfidf"}).to_string();
            let req = Request::post("/api/search").body(Body::from(body)).unwrap();
            app.oneshot(req).await.unwrap().status()
        }));
    }
    let (s, _, _) = call(&app, reindex_req(Some("letmein"))).await;
    assert!(s == StatusCode::ACCEPTED || s == StatusCode::CONFLICT);
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
}

#[tokio::test]
async fn cors_allowlist() {
    let mut cfg = config_for(&fixture_dir().join("corpus.json"));
    cfg.cors_allowlist = vec!["http://localhost:5173".into()];
    let st = state_with(cfg, None);
    st.rebuild().unwrap();
    let app = router(st);
    let req = |origin: &str| {
        Request::get("/health")
            .header(header::ORIGIN, origin)
            .body(Body::empty())
            .unwrap()
    };
    let (_, h, _) = call(&app, req("http://localhost:5173")).await;
    assert_eq!(h[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let (_, h, _) = call(&app, req("http://evil.example")).await;
    assert!(h.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

fn malformed_body() -> impl Strategy<Value = Vec<u8>> {
    let json_values = prop_oneof![
        Just(json!(null)),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        any::<f64>()
            .prop_filter("finite", |f| f.is_finite())
            .prop_map(Value::from),
        "\\PC{0,12}".prop_map(Value::from),
    ];
    let field = prop_oneof![Just("query"), Just("k"), Just("method"), Just("rerank"), Just("extra")];
    let objects = prop::collection::vec((field, json_values.clone()), 0..5).prop_map(|pairs| {
        let map: serde_json::Map<String, Value> = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        serde_json::to_vec(&Value::Object(map)).unwrap()
    });
    prop_oneof![
        prop::collection::vec(any::<u8>(), 0..64),
        "\\PC{0,40}".prop_map(String::into_bytes),
        json_values.prop_map(|v| serde_json::to_vec(&v).unwrap()),
        objects,
    ]
}

#[test]
fn malformed_bodies_never_5xx() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let app = router(fixture_state(None));
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(100));
    runner
        .run(&malformed_body(), |body| {
            let status = rt.block_on(async {
                let req = Request::post("/api/search").body(Body::from(body.clone())).unwrap();
                app.clone().oneshot(req).await.unwrap().status()
            });
            prop_assert!(
                !status.is_server_error(),
                "{status} for {:?}",
                String::from_utf8_lossy(&body)
            );
            Ok(())
        })
        .unwrap();
}
