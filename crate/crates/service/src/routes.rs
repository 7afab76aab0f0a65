use std::path::PathBuf;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method as HttpMethod, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;
use wfsearch_core::engine::{two_stage_search, Method, SearchError};
use wfsearch_core::textprep::normalize;

use crate::{off_runtime, AppState, SERVED_METHODS};

/// Everything but RFC 3986 unreserved characters is escaped, `/` included,
/// so an id always occupies one path segment.
const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

const ADMIN_HEADER: &str = "x-admin-token";

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/api/search", post(search))
        .route("/api/workflows/{id}", get(workflow))
        .route("/api/workflows/{id}/ga", get(download_ga))
        .route("/api/reindex", post(reindex));
    if let Some(dir) = &state.config().static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if let Some(cors) = cors_layer(&state.config().cors_allowlist) {
        app = app.layer(cors);
    }
    app.layer(middleware::from_fn(access_log)).with_state(state)
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    let origins: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    if origins.is_empty() {
        return None;
    }
    Some(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(origins))
            .allow_methods([HttpMethod::GET, HttpMethod::POST])
            .allow_headers([header::CONTENT_TYPE, HeaderName::from_static(ADMIN_HEADER)]),
    )
}

async fn access_log(req: Request, next: Next) -> Response {
    let method = req.method().to_string();
    let path = req.uri().path().to_owned();
    let started = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        target: "wfsearch::access",
        method,
        path,
        status = resp.status().as_u16(),
        ms = started.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    resp
}

/// A JSON error body `{"error":{"code","message"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_ready() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "index_not_ready",
            "index is still being built",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::NotBuilt(m) => ApiError::bad("method_unavailable", format!("method {m} is not indexed")),
            SearchError::Embed(e) => ApiError::new(StatusCode::BAD_GATEWAY, "embed_unavailable", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "search_failed", other.to_string()),
        }
    }
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    let ready = st.snapshot();
    let size = ready
        .as_ref()
        .map_or_else(|| st.corpus_size(), |s| s.engine.corpus().len());
    Json(json!({"status": "ok", "corpus_size": size, "index_ready": ready.is_some()}))
}

struct SearchRequest {
    query: String,
    k: usize,
    method: Method,
    rerank: bool,
}

fn parse_search(body: &[u8], st: &AppState) -> Result<SearchRequest, ApiError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad("invalid_json", format!("body is not JSON: {e}")))?;
    let obj: &Map<String, Value> = value
        .as_object()
        .ok_or_else(|| ApiError::bad("invalid_request", "body must be a JSON object"))?;
    let cfg = st.config();

    let query = match obj.get("query") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ApiError::bad("invalid_request", "\"query\" must be a string")),
    };
    if normalize(&query).is_empty() {
        return Err(ApiError::bad("empty_query", "query is empty after normalization"));
    }

    let k = match obj.get("k") {
        None | Some(Value::Null) => cfg.default_k,
        Some(v) => match v.as_u64() {
            Some(k) if k >= 1 && k <= cfg.max_k as u64 => k as usize,
            _ => {
                return Err(ApiError::bad(
                    "invalid_k",
                    format!("\"k\" must be an integer in [1, {}]", cfg.max_k),
                ))
            }
        },
    };

    let method = match obj.get("method") {
        None | Some(Value::Null) => cfg.default_method,
        Some(Value::String(s)) => s
            .parse::<Method>()
            .ok()
            .filter(|m| SERVED_METHODS.contains(m))
            .ok_or_else(|| ApiError::bad("unknown_method", format!("unknown method {s:?}")))?,
        Some(_) => return Err(ApiError::bad("unknown_method", "\"method\" must be a string")),
    };

    let rerank = match obj.get("rerank") {
        None | Some(Value::Null) => cfg.rerank_enabled,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(ApiError::bad("invalid_request", "\"rerank\" must be a boolean")),
    };

    Ok(SearchRequest {
        query,
        k,
        method,
        rerank,
    })
}

fn ga_url(id: &str) -> String {
    format!("/api/workflows/{}/ga", utf8_percent_encode(id, SEGMENT))
}

async fn search(State(st): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_search(&body, &st)?;
    let snap = st.snapshot().ok_or_else(ApiError::not_ready)?;

    let chat = if req.rerank { st.chat() } else { None };
    let mut warnings = Vec::new();
    if req.rerank && chat.is_none() {
        warnings.push("reranker not configured, kept stage-1 order".to_string());
    }
    // Bound concurrent reranker calls; plain searches do not queue.
    let permit = match &chat {
        Some(_) => Some(
            st.rerank_gate()
                .acquire_owned()
                .await
                .expect("semaphore is never closed"),
        ),
        None => None,
    };

    let rerank_cfg = st.config().rerank.clone();
    let engine_snap = snap.clone();
    let SearchRequest { query, k, method, .. } = req;
    let result = off_runtime(move || {
        let _permit = permit;
        let reranker = chat.as_deref().map(|c| (c, &rerank_cfg));
        two_stage_search(&engine_snap.engine, method, &query, k, reranker)
    })
    .await?;

    let corpus = snap.engine.corpus();
    let results: Vec<Value> = result
        .list
        .iter()
        .enumerate()
        .map(|(i, hit)| {
            let w = corpus.get(&hit.id);
            json!({
                "id": hit.id,
                "title": w.map(|w| w.title.as_str()).unwrap_or_default(),
                "description": w.map(|w| w.description.as_str()).unwrap_or_default(),
                "score": hit.score,
                "rank": i + 1,
                "ga_url": w.and_then(|w| w.ga_path.as_ref()).map(|_| ga_url(&hit.id)),
            })
        })
        .collect();
    warnings.extend(result.warnings);
    Ok(Json(json!({
        "results": results,
        "timings": {"retrieval_ms": result.retrieval_ms, "rerank_ms": result.rerank_ms},
        "used_llm": result.used_llm,
        "warnings": warnings,
        "method": method.as_str(),
        "snapshot": snap.generation,
    })))
}

async fn workflow(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let snap = st.snapshot().ok_or_else(ApiError::not_ready)?;
    let w = snap
        .engine
        .corpus()
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no workflow {id:?}")))?;
    let mut doc = serde_json::to_value(w).expect("workflow serializes");
    doc["ga_url"] = w.ga_path.as_ref().map_or(Value::Null, |_| Value::String(ga_url(&w.id)));
    Ok(Json(doc))
}

/// `<id>.ga` with characters outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn download_name(id: &str) -> String {
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
    let clean = clean.trim_start_matches('.');
    format!("{}.ga", if clean.is_empty() { "workflow" } else { clean })
}

async fn download_ga(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = st.snapshot().ok_or_else(ApiError::not_ready)?;
    let w = snap
        .engine
        .corpus()
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no workflow {id:?}")))?;
    let gone = || ApiError::new(StatusCode::GONE, "ga_unavailable", format!("no .ga file for {id:?}"));
    let ga_path = w.ga_path.as_deref().ok_or_else(gone)?;
    if ga_path.starts_with("http://") || ga_path.starts_with("https://") {
        return Ok(Redirect::temporary(ga_path).into_response());
    }
    let mut path = PathBuf::from(ga_path);
    if path.is_relative() {
        path = st.config().corpus_dir().join(path);
    }
    let bytes = tokio::fs::read(&path).await.map_err(|_| gone())?;
    let disposition = format!("attachment; filename=\"{}\"", download_name(&id));
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        Body::from(bytes),
    )
        .into_response())
}

async fn reindex(State(st): State<AppState>, headers: HeaderMap) -> Result<(StatusCode, Json<Value>), ApiError> {
    let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token");
    let expected = st
        .config()
        .admin_token
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or_else(unauthorized)?;
    let given = headers
        .get(ADMIN_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(unauthorized)?;
    if given != expected.expose() {
        return Err(unauthorized());
    }
    if !st.try_begin_reindex() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "reindex_in_progress",
            "a rebuild is already running",
        ));
    }
    let worker = st.clone();
    std::thread::spawn(move || {
        if let Err(e) = worker.rebuild() {
            tracing::error!(error = %e, code = e.code(), "reindex failed, keeping previous snapshot");
        }
        worker.end_reindex();
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"status": "accepted"}))))
}
