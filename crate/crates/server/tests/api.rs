//! Route-level tests driven through the router without a socket.

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use metapix_core::catalog::Catalog;
use metapix_core::Config;
use metapix_server::{router, AppState, Tokens, ENDPOINTS};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    dir: tempfile::TempDir,
    app: Router,
}

const OWNER: &str = "tok-owner";
const NOBODY: &str = "tok-nobody";
const LEGAL: &str = "tok-legal";

fn api() -> Api {
    let dir = tempfile::tempdir().unwrap();
    let media = dir.path().join("media");
    std::fs::create_dir(&media).unwrap();
    for (n, c) in [("a.jpg", "red truck"), ("b.jpg", "blue car"), ("c.jpg", "green bus")] {
        std::fs::write(media.join(n), format!("bytes of {n}")).unwrap();
        std::fs::write(media.join(format!("{n}.txt")), c).unwrap();
    }
    let mut cfg = Config::with_root(dir.path().join("store"));
    cfg.crawl.interval_seconds = 0;
    cfg.embed.dimension = 64;
    let tokens = Tokens::parse(&format!(
        "{OWNER} owner@x.com cv-team\n{NOBODY} nobody@x.com\n{LEGAL} legal@x.com legal\n"
    ))
    .unwrap();
    let state = AppState::new(Catalog::open(cfg).unwrap(), tokens);
    Api { app: router(state), dir }
}

impl Api {
    fn media_dir(&self) -> String {
        self.dir.path().join("media").canonicalize().unwrap().to_string_lossy().into_owned()
    }

    async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("X-Api-Token", t);
        }
        let body = match body {
            Some(b) => {
                req = req.header("content-type", "application/json");
                Body::from(b.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()));
        (status, value)
    }

    async fn get(&self, uri: &str, token: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, Some(token), None).await
    }

    async fn post(&self, uri: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(token), Some(body)).await
    }

    async fn datasource(&self, name: &str, extra: Value) -> Value {
        let mut body = json!({"name": name, "storage_locations": [self.media_dir()]});
        for (k, v) in extra.as_object().unwrap() {
            body[k] = v.clone();
        }
        let (s, v) = self.post("/v1/datasources", OWNER, body).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_or_unknown_token_is_401() {
    let api = api();
    let (s, v) = api.call(Method::GET, "/v1/datasets", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(v["code"], "UNAUTHENTICATED");
    let (s, _) = api.get("/v1/datasets", "bogus").await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = api.call(Method::POST, "/v1/datasources", None, Some(json!({"name": "x"}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test(flavor = "multi_thread")]
async fn error_codes_and_statuses() {
    let api = api();
    let (s, v) = api.get("/v1/datasets/unknown", OWNER).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_DATASET")));
    api.datasource("src", json!({})).await;
    let (s, v) = api.post("/v1/search", OWNER, json!({"scope": "ds:src", "query": ""})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("EMPTY_QUERY")));
    let (s, v) = api.get("/v1/datasources/src/view?query=vehicle_type%20%3D%20", OWNER).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("QUERY_PARSE_ERROR")));
    assert_eq!(v["details"]["offset"], 15);
    let (s, v) = api.datasource_conflict().await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("DUPLICATE_NAME")));
    let (s, v) = api.post("/v1/datasets", OWNER, json!({"source": "magic", "name": "n"})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("INVALID_BODY")));
    let (s, v) = api.get("/v1/nowhere", OWNER).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("ROUTE_NOT_FOUND")));
}

impl Api {
    async fn datasource_conflict(&self) -> (StatusCode, Value) {
        self.post("/v1/datasources", OWNER, json!({"name": "src", "storage_locations": [self.media_dir()]})).await
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn list_pagination() {
    let api = api();
    for i in 0..5 {
        api.datasource(&format!("s{i}"), json!({})).await;
    }
    let (s, v) = api.get("/v1/datasources?limit=2", OWNER).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["items"].as_array().unwrap().len(), 2);
    assert_eq!((v["total"].as_u64(), v["next_offset"].as_u64()), (Some(5), Some(2)));
    let (_, v) = api.get("/v1/datasources?offset=4&limit=2", OWNER).await;
    assert_eq!(v["items"][0]["name"], "s4");
    assert!(v["next_offset"].is_null());
    let (_, v) = api.get("/v1/datasources?limit=100000", OWNER).await;
    assert_eq!(v["limit"], 500);
    let (s, _) = api.get("/v1/datasources?limit=0", OWNER).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn gated_resources_need_a_shared_role() {
    let api = api();
    api.datasource("secret", json!({"access_level": "GATED", "roles": ["legal"]})).await;
    let (s, v) = api.get("/v1/datasources/secret", NOBODY).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::FORBIDDEN, Some("ACCESS_DENIED")));
    let (s, _) = api.get("/v1/datasources/secret", LEGAL).await;
    assert_eq!(s, StatusCode::OK);
    let (_, v) = api.get("/v1/datasources", NOBODY).await;
    assert_eq!(v["total"], 0);
    let (s, _) = api
        .post("/v1/datasets", NOBODY, json!({"source": "query", "name": "d", "datasource": "secret", "query": "1 = 1"}))
        .await;
    assert_eq!(s, StatusCode::FORBIDDEN);
}

#[tokio::test(flavor = "multi_thread")]
async fn crawl_returns_operation_to_poll() {
    let api = api();
    let ds = api.datasource("src", json!({"embeddings_enabled": true})).await;
    let id = ds["id"].as_str().unwrap();
    let (s, v) = api.call(Method::POST, &format!("/v1/datasources/{id}/crawl"), Some(OWNER), None).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let op = v["operation_id"].as_str().unwrap().to_string();
    let mut status = String::new();
    for _ in 0..200 {
        let (s, v) = api.get(&format!("/v1/operations/{op}"), OWNER).await;
        assert_eq!(s, StatusCode::OK);
        status = v["status"].as_str().unwrap().to_string();
        if status == "SUCCEEDED" || status == "FAILED" {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    assert_eq!(status, "SUCCEEDED");
    let (s, _) = api.get(&format!("/v1/operations/{op}"), NOBODY).await;
    assert_eq!(s, StatusCode::OK, "open datasource operations are readable");
}

#[tokio::test(flavor = "multi_thread")]
async fn dataset_flow_and_media_passthrough() {
    let api = api();
    api.datasource("src", json!({"embeddings_enabled": true})).await;
    let (s, ds) = api
        .post("/v1/datasets", OWNER, json!({"source": "query", "name": "all", "datasource": "src", "query": "1 = 1"}))
        .await;
    assert_eq!(s, StatusCode::CREATED, "{ds}");
    let hash = ds["versions"][0]["media_refs"][0]["content_hash"].as_str().unwrap().to_string();
    let (s, body) = api.get(&format!("/v1/media/{hash}"), OWNER).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.as_str().unwrap().starts_with("bytes of "));
    let (s, _) = api.call(Method::GET, &format!("/v1/media/{hash}?token={OWNER}"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = api.get(&format!("/v1/media/{}", "0".repeat(64)), OWNER).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_HASH")));

    let remove = json!({"remove": [ds["versions"][0]["media_refs"][0]]});
    let (s, v) = api.post("/v1/datasets/all/versions", OWNER, remove).await;
    assert_eq!((s, v["label"].as_str()), (StatusCode::CREATED, Some("v2")));
    let (_, lineage) = api.get("/v1/datasets/all/lineage", OWNER).await;
    assert_eq!(lineage["versions"].as_array().unwrap().len(), 2);
    let (_, v) = api.get("/v1/datasets/all/versions/v1/annotations", OWNER).await;
    assert_eq!(v["total"], 0);
    let (s, v) = api.get("/v1/datasets/all/versions/v1/annotations/default/export?format=coco", OWNER).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("NO_ANNOTATIONS")));
}

/// Substitutes sample values for path parameters.
fn concrete(path: &str) -> String {
    path.replace("{id}", "x").replace("{v}", "v1").replace("{aid}", "a").replace("{hash}", "h")
}

#[tokio::test(flavor = "multi_thread")]
async fn every_listed_endpoint_is_routed() {
    let api = api();
    for (method, path) in ENDPOINTS {
        let m: Method = method.parse().unwrap();
        let body = (m == Method::POST).then(|| json!({}));
        let (_, v) = api.call(m, &concrete(path), Some(OWNER), body).await;
        assert_ne!(v["code"], "ROUTE_NOT_FOUND", "{method} {path}");
    }
}
