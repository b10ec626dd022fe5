//! HTTP/JSON API for the MetaPix catalog.
//!
//! Every route lives under `/v1` and requires an `X-Api-Token` header that
//! maps to a principal in the tokens file. Errors come back as
//! `{code, message, details}` with the module's code unchanged.

pub mod auth;
pub mod error;
pub mod routes;

use std::path::Path;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use metapix_core::catalog::Catalog;
use metapix_core::Config;

pub use auth::{Caller, Tokens, TOKEN_HEADER};
pub use error::{status_for, ApiError};

/// Every route as `(method, path)`, in axum path syntax.
pub const ENDPOINTS: &[(&str, &str)] = &[
    ("POST", "/v1/datasources"),
    ("GET", "/v1/datasources"),
    ("GET", "/v1/datasources/{id}"),
    ("POST", "/v1/datasources/{id}/crawl"),
    ("GET", "/v1/datasources/{id}/view"),
    ("POST", "/v1/datasets"),
    ("GET", "/v1/datasets"),
    ("GET", "/v1/datasets/{id}"),
    ("POST", "/v1/datasets/{id}/versions"),
    ("GET", "/v1/datasets/{id}/lineage"),
    ("POST", "/v1/search"),
    ("POST", "/v1/datasets/{id}/versions/{v}/annotations"),
    ("GET", "/v1/datasets/{id}/versions/{v}/annotations"),
    ("GET", "/v1/datasets/{id}/versions/{v}/annotations/{aid}/export"),
    ("GET", "/v1/operations/{id}"),
    ("GET", "/v1/media/{hash}"),
];

#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub tokens: Arc<Tokens>,
}

impl AppState {
    pub fn new(catalog: Arc<Catalog>, tokens: Tokens) -> Self {
        Self {
            catalog,
            tokens: Arc::new(tokens),
        }
    }

    /// Opens the catalog at `config.store.root` and loads the tokens file.
    pub fn from_config(config: Config) -> Result<Self, String> {
        let tokens = match &config.auth.tokens_file {
            Some(path) => Tokens::load(path)?,
            None => return Err("auth.tokens_file is not set".into()),
        };
        let catalog = Catalog::open(config).map_err(|e| e.to_string())?;
        Ok(Self::new(catalog, tokens))
    }
}

pub fn router(state: AppState) -> Router {
    use routes::*;
    Router::new()
        .route("/v1/datasources", post(create_datasource).get(list_datasources))
        .route("/v1/datasources/{id}", get(get_datasource))
        .route("/v1/datasources/{id}/crawl", post(crawl_datasource))
        .route("/v1/datasources/{id}/view", get(view_datasource))
        .route("/v1/datasets", post(create_dataset).get(list_datasets))
        .route("/v1/datasets/{id}", get(get_dataset))
        .route("/v1/datasets/{id}/versions", post(add_version))
        .route("/v1/datasets/{id}/lineage", get(lineage))
        .route("/v1/search", post(search))
        .route(
            "/v1/datasets/{id}/versions/{v}/annotations",
            post(attach_annotation).get(list_annotations),
        )
        .route(
            "/v1/datasets/{id}/versions/{v}/annotations/{aid}/export",
            get(export_annotation),
        )
        .route("/v1/operations/{id}", get(get_operation))
        .route("/v1/media/{hash}", get(media))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Loads a config file, applying defaults for missing keys.
pub fn load_config(path: &Path) -> Result<Config, String> {
    Config::load(path).map_err(|e| e.to_string())
}
