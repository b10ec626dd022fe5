//! A live API server on a loopback port plus helpers to drive the `metapix`
//! binary against it.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};

use axum::extract::Request;
use axum::middleware::{self, Next};
use metapix_core::catalog::Catalog;
use metapix_core::Config;
use metapix_server::{router, AppState, Tokens};
use serde_json::Value;

pub const OWNER_TOKEN: &str = "owner-token";

pub struct Server {
    pub dir: tempfile::TempDir,
    pub endpoint: String,
    pub catalog: Arc<Catalog>,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
    runtime: tokio::runtime::Runtime,
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliRun {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

impl Server {
    pub fn start(tweak: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::with_root(dir.path().join("store"));
        cfg.crawl.interval_seconds = 0;
        tweak(&mut cfg);
        let tokens = Tokens::parse(&format!(
            "{OWNER_TOKEN} owner@example.com cv-team\nreader-token reader@example.com\n"
        ))
        .unwrap();
        let catalog = Catalog::open(cfg).unwrap();
        let state = AppState::new(catalog.clone(), tokens);
        let requests: Arc<Mutex<Vec<(String, String)>>> = Arc::default();
        let log = requests.clone();
        let app = router(state).layer(middleware::from_fn(move |req: Request, next: Next| {
            let log = log.clone();
            async move {
                log.lock().unwrap().push((req.method().to_string(), req.uri().path().to_string()));
                next.run(req).await
            }
        }));
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let endpoint = format!("http://{}", listener.local_addr().unwrap());
        runtime.spawn(async move { axum::serve(listener, app).await });
        Self {
            dir,
            endpoint,
            catalog,
            requests,
            runtime,
        }
    }

    /// A fresh directory under the server's temp root.
    pub fn subdir(&self, name: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p.canonicalize().unwrap()
    }

    pub fn cli(&self, args: &[&str]) -> CliRun {
        self.cli_as(OWNER_TOKEN, args)
    }

    pub fn cli_as(&self, token: &str, args: &[&str]) -> CliRun {
        let home = self.subdir("home");
        let out = Command::new(env!("CARGO_BIN_EXE_metapix"))
            .args(["--endpoint", &self.endpoint, "--token", token])
            .args(args)
            .env("HOME", &home)
            .env_remove("METAPIX_ENDPOINT")
            .env_remove("METAPIX_TOKEN")
            .output()
            .unwrap();
        CliRun {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    /// Runs a command with `--json`, asserting success.
    pub fn ok_json(&self, args: &[&str]) -> Value {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        let run = self.cli(&full);
        assert_eq!(run.code, 0, "metapix {args:?} failed: {}", run.stderr);
        run.json()
    }
}

/// Does a concrete request path match an endpoint template?
pub fn matches_template(template: &str, path: &str) -> bool {
    let t: Vec<&str> = template.split('/').collect();
    let p: Vec<&str> = path.split('/').collect();
    t.len() == p.len()
        && t.iter().zip(&p).all(|(a, b)| (a.starts_with('{') && a.ends_with('}') && !b.is_empty()) || a == b)
}

/// Ten captioned images, a frame-manifest video and a JSONL attributes
/// file. Returns `(media_dir, attributes_file)`.
pub fn fleet_fixture(root: &Path) -> (PathBuf, PathBuf) {
    let media = root.join("fleet");
    std::fs::create_dir_all(&media).unwrap();
    let images: [(&str, &str, &str); 10] = [
        ("img_00.jpg", "red truck on the highway", "TRUCK"),
        ("img_01.jpg", "red truck parked at a depot", "TRUCK"),
        ("img_02.jpg", "blue sedan in traffic", "SEDAN"),
        ("img_03.jpg", "white suv on a gravel road", "SUV"),
        ("img_04.jpg", "black suv at night", "SUV"),
        ("img_05.jpg", "green bicycle near a tree", "BIKE"),
        ("img_06.jpg", "yellow school bus", "BUS"),
        ("img_07.jpg", "silver suv in the rain", "SUV"),
        ("img_08.jpg", "pedestrian crossing the street", "NONE"),
        ("img_09.jpg", "orange truck with a trailer", "TRUCK"),
    ];
    let mut attrs = String::new();
    for (i, (name, caption, vtype)) in images.iter().enumerate() {
        std::fs::write(media.join(name), format!("jpeg-bytes-{i}-{caption}")).unwrap();
        std::fs::write(media.join(format!("{name}.txt")), caption).unwrap();
        attrs.push_str(&format!(
            "{{\"media_uri\": \"{name}\", \"vehicle_type\": \"{vtype}\", \"frame_width\": 640, \"frame_height\": 480}}\n"
        ));
    }
    let video = media.join("drive_01");
    std::fs::create_dir_all(&video).unwrap();
    let mut manifest = String::new();
    for t in 0..12 {
        let caption = if t < 6 { "empty road at dawn" } else { "red truck overtaking" };
        manifest.push_str(&format!("{{\"t\": {t}, \"frame\": \"f{t:02}.jpg\", \"caption\": \"{caption}\"}}\n"));
    }
    std::fs::write(video.join("manifest.jsonl"), manifest).unwrap();
    attrs.push_str("{\"media_uri\": \"drive_01\", \"vehicle_type\": \"VIDEO\"}\n");
    let attributes = root.join("fleet_attributes.jsonl");
    std::fs::write(&attributes, attrs).unwrap();
    (media.canonicalize().unwrap(), attributes)
}

/// A COCO file labelling two of the fixture images.
pub fn fleet_coco(root: &Path) -> PathBuf {
    let coco = serde_json::json!({
        "images": [
            {"id": 1, "file_name": "img_00.jpg", "width": 640, "height": 480},
            {"id": 2, "file_name": "img_01.jpg", "width": 640, "height": 480},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 3, "bbox": [320, 120, 64, 48]},
            {"id": 2, "image_id": 2, "category_id": 3, "bbox": [10.5, 20.25, 100, 80]},
            {"id": 3, "image_id": 2, "category_id": 7, "bbox": [200, 200, 30, 60]},
        ],
        "categories": [{"id": 3, "name": "truck"}, {"id": 7, "name": "person"}],
    });
    let p = root.join("fleet_coco.json");
    std::fs::write(&p, coco.to_string()).unwrap();
    p
}
