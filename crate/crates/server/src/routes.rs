//! Request handlers for every `/v1` endpoint.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use metapix_core::catalog::{
    Catalog, Changeset, DataSourceSpec, DatasetSpec, ExportFormat, FileFormat, ImportRequest,
    Selection,
};
use metapix_core::vector::SearchMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::auth::{Caller, TOKEN_HEADER};
use crate::error::ApiError;
use crate::AppState;

pub const DEFAULT_LIMIT: usize = 50;
pub const MAX_LIMIT: usize = 500;

type ApiResult<T> = Result<T, ApiError>;

/// Runs a catalog call on the blocking pool.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    F: FnOnce(&Arc<Catalog>) -> metapix_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    let catalog = state.catalog.clone();
    tokio::task::spawn_blocking(move || f(&catalog))
        .await
        .map_err(|e| ApiError::internal(format!("handler panicked: {e}")))?
        .map_err(ApiError::from)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_body(format!("request body: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> ApiResult<Value> {
    serde_json::to_value(value).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
pub struct PageParams {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub next_offset: Option<usize>,
}

pub fn paginate<T>(all: Vec<T>, params: &PageParams) -> ApiResult<Page<T>> {
    let limit = params.limit.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 {
        return Err(ApiError::new("INVALID_ARGUMENT", "limit must be at least 1"));
    }
    let limit = limit.min(MAX_LIMIT);
    let offset = params.offset.unwrap_or(0);
    let total = all.len();
    let items: Vec<T> = all.into_iter().skip(offset).take(limit).collect();
    let end = offset.saturating_add(items.len());
    Ok(Page {
        next_offset: (end < total).then_some(end),
        items,
        total,
        offset,
        limit,
    })
}

pub async fn not_found() -> ApiError {
    ApiError::new("ROUTE_NOT_FOUND", "no such endpoint")
}

// ---- datasources ----

pub async fn create_datasource(
    State(state): State<AppState>,
    Caller(p): Caller,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let spec: DataSourceSpec = parse_body(&body)?;
    let ds = blocking(&state, move |c| c.create_datasource(&p, spec)).await?;
    Ok((StatusCode::CREATED, Json(to_json(&ds)?)))
}

pub async fn list_datasources(
    State(state): State<AppState>,
    Caller(p): Caller,
    Query(page): Query<PageParams>,
) -> ApiResult<Json<Value>> {
    let all = blocking(&state, move |c| Ok(c.list_datasources(&p))).await?;
    Ok(Json(to_json(&paginate(all, &page)?)?))
}

pub async fn get_datasource(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let ds = blocking(&state, move |c| c.get_datasource(&p, &id)).await?;
    Ok(Json(to_json(&ds)?))
}

#[derive(Debug, Default, Deserialize)]
struct CrawlBody {
    attributes_file: Option<String>,
}

pub async fn crawl_datasource(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CrawlBody = if body.iter().all(u8::is_ascii_whitespace) {
        CrawlBody::default()
    } else {
        parse_body(&body)?
    };
    let op = blocking(&state, move |c| c.crawl(&p, &id, req.attributes_file)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "operation_id": op }))))
}

#[derive(Debug, Deserialize)]
pub struct ViewParams {
    query: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

pub async fn view_datasource(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
    Query(params): Query<ViewParams>,
) -> ApiResult<Json<Value>> {
    let query = params.query.clone();
    let rows = blocking(&state, move |c| c.view(&p, &id, query.as_deref())).await?;
    let page = PageParams {
        offset: params.offset,
        limit: params.limit,
    };
    Ok(Json(to_json(&paginate(rows, &page)?)?))
}

// ---- datasets ----

/// `source` picks the creation path: `file`, `query` or `search`.
#[derive(Debug, Deserialize)]
struct CreateDatasetBody {
    source: String,
    #[serde(flatten)]
    spec: DatasetSpec,
    format: Option<String>,
    manifest_path: Option<String>,
    manifest: Option<String>,
    base_dir: Option<String>,
    datasource: Option<String>,
    query: Option<String>,
    scope: Option<String>,
    selection: Option<Vec<Selection>>,
}

fn required(field: Option<String>, name: &str) -> ApiResult<String> {
    field.ok_or_else(|| ApiError::bad_body(format!("{name:?} is required")))
}

pub async fn create_dataset(
    State(state): State<AppState>,
    Caller(p): Caller,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let b: CreateDatasetBody = parse_body(&body)?;
    let ds = match b.source.as_str() {
        "file" | "file-import" => {
            let format: FileFormat = required(b.format, "format")?.parse()?;
            let req = ImportRequest {
                format,
                manifest_path: b.manifest_path,
                manifest: b.manifest,
                base_dir: b.base_dir,
            };
            blocking(&state, move |c| c.create_dataset_from_file(&p, b.spec, req)).await?
        }
        "query" => {
            let source = required(b.datasource, "datasource")?;
            let query = required(b.query, "query")?;
            blocking(&state, move |c| c.create_dataset_from_query(&p, b.spec, &source, &query)).await?
        }
        "search" | "search-selection" => {
            let scope = required(b.scope, "scope")?;
            let query = b.query.unwrap_or_default();
            let selection = b.selection.unwrap_or_default();
            blocking(&state, move |c| c.create_dataset_from_search(&p, b.spec, &scope, &query, &selection)).await?
        }
        other => {
            return Err(ApiError::bad_body(format!(
                "unknown source {other:?}, expected file, query or search"
            )))
        }
    };
    Ok((StatusCode::CREATED, Json(to_json(&ds)?)))
}

pub async fn list_datasets(
    State(state): State<AppState>,
    Caller(p): Caller,
    Query(page): Query<PageParams>,
) -> ApiResult<Json<Value>> {
    let all = blocking(&state, move |c| Ok(c.list_datasets(&p))).await?;
    Ok(Json(to_json(&paginate(all, &page)?)?))
}

pub async fn get_dataset(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let ds = blocking(&state, move |c| c.get_dataset(&p, &id)).await?;
    Ok(Json(to_json(&ds)?))
}

pub async fn add_version(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let change: Changeset = parse_body(&body)?;
    let v = blocking(&state, move |c| c.add_version(&p, &id, change)).await?;
    Ok((StatusCode::CREATED, Json(to_json(&v)?)))
}

pub async fn lineage(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    Ok(Json(blocking(&state, move |c| c.lineage(&p, &id)).await?))
}

// ---- search ----

#[derive(Debug, Deserialize)]
struct SearchBody {
    scope: String,
    query: String,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    mode: Option<String>,
}

fn default_k() -> usize {
    10
}

pub async fn search(State(state): State<AppState>, Caller(p): Caller, body: Bytes) -> ApiResult<Json<Value>> {
    let b: SearchBody = parse_body(&body)?;
    let mode: SearchMode = match &b.mode {
        Some(m) => m.parse()?,
        None => SearchMode::default(),
    };
    let result = blocking(&state, move |c| c.search(&p, &b.scope, &b.query, b.k, mode)).await?;
    Ok(Json(to_json(&result)?))
}

// ---- annotations ----

#[derive(Debug, Deserialize)]
struct AttachBody {
    #[serde(rename = "type")]
    kind: String,
    name: String,
    #[serde(default)]
    properties: Map<String, Value>,
    #[serde(default)]
    default: bool,
}

pub async fn attach_annotation(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path((id, version)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let b: AttachBody = parse_body(&body)?;
    let a = blocking(&state, move |c| {
        c.attach_annotation(&p, &id, &version, &b.kind, &b.name, b.properties, b.default)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(to_json(&a)?)))
}

pub async fn list_annotations(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path((id, version)): Path<(String, String)>,
    Query(page): Query<PageParams>,
) -> ApiResult<Json<Value>> {
    let all = blocking(&state, move |c| c.list_annotations(&p, &id, &version)).await?;
    Ok(Json(to_json(&paginate(all, &page)?)?))
}

#[derive(Debug, Deserialize)]
pub struct ExportParams {
    format: Option<String>,
}

/// `default` as the annotation id exports the version's default annotation.
pub async fn export_annotation(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path((id, version, aid)): Path<(String, String, String)>,
    Query(params): Query<ExportParams>,
) -> ApiResult<Json<Value>> {
    let format: ExportFormat = params.format.as_deref().unwrap_or("coco").parse()?;
    let out = blocking(&state, move |c| {
        let aid = (aid != "default").then_some(aid);
        c.export_annotation(&p, &id, &version, aid.as_deref(), format)
    })
    .await?;
    Ok(Json(to_json(&out)?))
}

// ---- operations and media ----

pub async fn get_operation(
    State(state): State<AppState>,
    Caller(p): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let op = blocking(&state, move |c| c.operation(&p, &id)).await?;
    Ok(Json(to_json(&op)?))
}

#[derive(Debug, Deserialize)]
pub struct MediaParams {
    token: Option<String>,
}

/// Raw media bytes. Accepts the token as a `token` query parameter too, so
/// image tags can load thumbnails.
pub async fn media(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(hash): Path<String>,
    Query(params): Query<MediaParams>,
) -> ApiResult<Response> {
    let token = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(params.token)
        .ok_or_else(|| ApiError::unauthenticated("missing X-Api-Token header"))?;
    let p = state
        .tokens
        .principal(&token)
        .cloned()
        .ok_or_else(|| ApiError::unauthenticated("unknown token"))?;
    let bytes = blocking(&state, move |c| c.media(&p, &hash)).await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}
