//! Read-only HTTP front end over a pathmark index.
//!
//! | method | path          | body                                          |
//! |--------|---------------|-----------------------------------------------|
//! | POST   | `/search`     | multipart `file`, `modelType`, `maxResults`, `explain` |
//! | GET    | `/model/{id}` | -                                             |
//! | GET    | `/stats`      | -                                             |
//! | POST   | `/classify`   | multipart `file`, `modelType`, `k`            |
//!
//! Errors are JSON objects `{"error": ..., "diagnostics": ...}`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pathmark_core::classifier::{classify, ClassificationResult, ClassifyError, LabeledCorpus};
use pathmark_core::index::{Index, IndexError, IndexStats};
use pathmark_core::model::{parse_model, Model, ModelError, ModelFormat};
use pathmark_core::scorer::{search_model, MatchedPath, ScoreError, ScoringParams};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const DEFAULT_MAX_BODY: usize = 32 * 1024 * 1024;
pub const DEFAULT_MAX_RESULTS: usize = 20;
pub const MAX_RESULTS_LIMIT: usize = 200;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body: usize,
    /// `*` allows any origin; empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub params: ScoringParams,
    /// Labels for `/classify`; the endpoint answers 404 without them.
    pub labels: Option<LabeledCorpus>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_body: DEFAULT_MAX_BODY,
            cors_origins: vec!["*".into()],
            params: ScoringParams::default(),
            labels: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    index: Arc<Index>,
    params: ScoringParams,
    labels: Option<Arc<LabeledCorpus>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_paths: Option<Vec<MatchedPath>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub paths: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub model_type: String,
    pub results: Vec<SearchHit>,
    pub query: QueryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub models: u64,
    pub model_types: Vec<IndexStats>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub diagnostics: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            diagnostics: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        let mut body = json!({ "error": self.message });
        if let Some(d) = self.diagnostics {
            body["diagnostics"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        let status = match e {
            IndexError::UnknownModelType(_) | IndexError::UnknownModel(_) => StatusCode::NOT_FOUND,
            IndexError::BadModelType(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Index(e) => e.into(),
            e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl From<ClassifyError> for ApiError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Score(e) => e.into(),
            ClassifyError::Unclassifiable => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            e => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let diagnostics = match &e {
            ModelError::Json { offset, message } | ModelError::Xml { offset, message } => {
                json!({ "offset": offset, "message": message })
            }
            ModelError::Unsupported(what) => json!({ "unsupported": what }),
            ModelError::Invalid(report) => serde_json::to_value(report).unwrap_or_default(),
        };
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: e.to_string(),
            diagnostics: Some(diagnostics),
        }
    }
}

impl From<axum::extract::multipart::MultipartError> for ApiError {
    fn from(e: axum::extract::multipart::MultipartError) -> Self {
        ApiError::new(e.status(), e.body_text())
    }
}

/// The fields of a multipart query upload.
#[derive(Debug, Default)]
struct Upload {
    file: Option<(Option<String>, Bytes)>,
    model_type: Option<String>,
    max_results: Option<String>,
    explain: Option<String>,
    k: Option<String>,
}

async fn read_upload(mut mp: Multipart) -> Result<Upload, ApiError> {
    let mut up = Upload::default();
    while let Some(field) = mp.next_field().await? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "file" => {
                let filename = field.file_name().map(str::to_string);
                up.file = Some((filename, field.bytes().await?));
            }
            "modelType" => up.model_type = Some(field.text().await?),
            "maxResults" => up.max_results = Some(field.text().await?),
            "explain" => up.explain = Some(field.text().await?),
            "k" => up.k = Some(field.text().await?),
            other => return Err(ApiError::bad_request(format!("unexpected field '{other}'"))),
        }
    }
    Ok(up)
}

impl Upload {
    /// Check the model type, then parse the file. The request's type wins
    /// over whatever the file declares.
    fn model(&self, index: &Index) -> Result<Model, ApiError> {
        let model_type = self
            .model_type
            .as_deref()
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::bad_request("missing field 'modelType'"))?;
        index.table(model_type)?;
        let (filename, bytes) = self
            .file
            .as_ref()
            .ok_or_else(|| ApiError::bad_request("missing field 'file'"))?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(ApiError::bad_request("empty model file"));
        }
        let format = filename
            .as_deref()
            .and_then(|f| ModelFormat::from_path(std::path::Path::new(f)))
            .unwrap_or_else(|| ModelFormat::sniff(bytes));
        let mut m = parse_model(bytes, format)?;
        m.model_type = model_type.to_string();
        Ok(m)
    }
}

fn parse_number(field: &str, raw: Option<&str>, default: usize, max: usize) -> Result<usize, ApiError> {
    let Some(raw) = raw.map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(default);
    };
    match raw.parse::<usize>() {
        Ok(n) if (1..=max).contains(&n) => Ok(n),
        _ => Err(ApiError::bad_request(format!("'{field}' must be an integer in 1..={max}, got '{raw}'"))),
    }
}

fn parse_flag(field: &str, raw: Option<&str>) -> Result<bool, ApiError> {
    match raw.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
        None | Some("") | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") => Ok(true),
        Some(other) => Err(ApiError::bad_request(format!("'{field}' must be true or false, got '{other}'"))),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn search(State(st): State<AppState>, mp: Multipart) -> Result<Json<SearchResponse>, ApiError> {
    let up = read_upload(mp).await?;
    let max_results = parse_number("maxResults", up.max_results.as_deref(), DEFAULT_MAX_RESULTS, MAX_RESULTS_LIMIT)?;
    let explain = parse_flag("explain", up.explain.as_deref())?;
    blocking(move || {
        let started = Instant::now();
        let query = up.model(&st.index)?;
        let out = search_model(&st.index, &query, &st.params, max_results, explain)?;
        Ok(Json(SearchResponse {
            model_type: query.model_type,
            results: out
                .results
                .into_iter()
                .map(|r| SearchHit {
                    id: r.model_id,
                    score: r.score,
                    matched_paths: r.matched_paths,
                })
                .collect(),
            query: QueryStats {
                paths: out.query_paths,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            },
        }))
    })
    .await
}

async fn classify_model(State(st): State<AppState>, mp: Multipart) -> Result<Json<ClassificationResult>, ApiError> {
    let labels = st
        .labels
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no labeled corpus is loaded"))?;
    let up = read_upload(mp).await?;
    let k = parse_number("k", up.k.as_deref(), DEFAULT_K, MAX_RESULTS_LIMIT)?;
    blocking(move || {
        let m = up.model(&st.index)?;
        Ok(Json(classify(&st.index, &m, &labels, k, &st.params, None)?))
    })
    .await
}

async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let stored = st
        .index
        .reader()
        .model(&id)?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model '{id}'")))?;
    let bytes = stored
        .source
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("model '{id}' was indexed without its source")))?;
    let meta = stored.meta;
    let format = meta.format.unwrap_or_else(|| ModelFormat::sniff(&bytes));
    let mut headers = vec![
        (header::CONTENT_TYPE, HeaderValue::from_static(format.content_type())),
        (HeaderName::from_static("x-model-type"), header_value(&meta.model_type)),
        (HeaderName::from_static("x-source-uri"), header_value(&meta.source_uri)),
    ];
    if let Some(sha) = &meta.sha256 {
        headers.push((HeaderName::from_static("x-sha256"), header_value(sha)));
    }
    let mut resp = (StatusCode::OK, bytes).into_response();
    for (name, value) in headers {
        resp.headers_mut().insert(name, value);
    }
    Ok(resp)
}

fn header_value(s: &str) -> HeaderValue {
    HeaderValue::from_str(s).unwrap_or_else(|_| {
        let escaped: String = s.chars().filter(|c| c.is_ascii() && !c.is_ascii_control()).collect();
        HeaderValue::from_str(&escaped).unwrap_or(HeaderValue::from_static(""))
    })
}

async fn stats(State(st): State<AppState>) -> Result<Json<StatsResponse>, ApiError> {
    let reader = st.index.reader();
    let mut model_types = Vec::new();
    for ty in reader.model_types() {
        model_types.push(reader.table(&ty)?.stats()?);
    }
    Ok(Json(StatsResponse {
        models: model_types.iter().map(|s| s.t).sum(),
        model_types,
    }))
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers(Any)
            .expose_headers([
                HeaderName::from_static("x-model-type"),
                HeaderName::from_static("x-source-uri"),
                HeaderName::from_static("x-sha256"),
            ]),
    )
}

/// The service's routes over `index`, which should be opened read-only.
pub fn router(index: Arc<Index>, config: ServiceConfig) -> Router {
    let state = AppState {
        index,
        params: config.params,
        labels: config.labels.map(Arc::new),
    };
    let app = Router::new()
        .route("/search", post(search))
        .route("/classify", post(classify_model))
        .route("/model/{id}", get(get_model))
        .route("/stats", get(stats))
        .layer(DefaultBodyLimit::max(config.max_body))
        .with_state(state);
    match cors(&config.cors_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

/// Bind `addr` and serve until the future is dropped or the process is
/// signalled.
pub async fn serve(addr: SocketAddr, index: Arc<Index>, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(index, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
