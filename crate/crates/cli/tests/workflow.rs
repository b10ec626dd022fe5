//! Every CLI command against a live server, with endpoint coverage checked
//! from the requests the server actually received.

mod support;

use std::collections::BTreeSet;

use metapix_cli::COMMAND_ENDPOINTS;
use metapix_server::ENDPOINTS;
use support::{fleet_coco, fleet_fixture, matches_template, Server};

#[test]
fn command_table_covers_every_endpoint() {
    let server_side: BTreeSet<(&str, &str)> = ENDPOINTS.iter().copied().collect();
    let client_side: BTreeSet<(&str, &str)> = COMMAND_ENDPOINTS.iter().map(|(_, m, p)| (*m, *p)).collect();
    assert_eq!(server_side, client_side);
}

#[test]
fn every_command_runs_and_prints_json() {
    let server = Server::start(|c| c.embed.dimension = 64);
    let root = server.subdir("fixtures");
    let (media, attributes) = fleet_fixture(&root);
    let media_s = media.to_str().unwrap();
    let attrs_s = attributes.to_str().unwrap();

    let ds = server.ok_json(&[
        "datasource", "create", "--name", "fleet", "--location", media_s, "--attributes", attrs_s, "--embeddings",
    ]);
    assert_eq!(ds["media_count"], 11);
    let embed_op = ds["operation_ids"][1].as_str().unwrap().to_string();
    server.ok_json(&["op", "wait", &embed_op, "--timeout", "60"]);
    server.ok_json(&["datasource", "list", "--limit", "1"]);
    server.ok_json(&["datasource", "show", "fleet"]);
    let view = server.ok_json(&["datasource", "view", "fleet", "--query", "vehicle_type = 'SUV'"]);
    assert_eq!(view["total"], 3);
    let crawl = server.ok_json(&["datasource", "crawl", "fleet"]);
    let op = crawl["operation_id"].as_str().unwrap().to_string();
    server.ok_json(&["op", "wait", &op, "--timeout", "60"]);
    server.ok_json(&["op", "show", &op]);

    server.ok_json(&["dataset", "create-from-query", "--name", "suvs", "--datasource", "fleet", "--query", "vehicle_type = 'SUV'"]);
    let hits = server.ok_json(&["search", "--scope", "ds:fleet", "--query", "red truck", "-k", "3", "--mode", "exact"]);
    let first = hits["hits"][0]["record_id"].as_str().unwrap().to_string();
    let picked = server.ok_json(&[
        "dataset", "create-from-search", "--name", "picked", "--scope", "ds:fleet", "--query", "red truck", "--record", &first,
    ]);
    assert_eq!(picked["versions"][0]["media_refs"].as_array().unwrap().len(), 1);

    let manifest = root.join("import.jsonl");
    std::fs::write(&manifest, "{\"uri\": \"img_02.jpg\"}\n{\"uri\": \"img_03.jpg\"}\n").unwrap();
    let imported = server.ok_json(&[
        "dataset", "create-from-file", "--name", "imported", "--format", "jsonl",
        "--manifest", manifest.to_str().unwrap(), "--base-dir", media_s,
    ]);
    let hash = imported["versions"][0]["media_refs"][0]["content_hash"].as_str().unwrap().to_string();
    let v2 = server.ok_json(&["dataset", "add-version", "imported", "--remove-hash", &hash]);
    assert_eq!(v2["label"], "v2");
    server.ok_json(&["dataset", "list"]);
    server.ok_json(&["dataset", "show", "imported"]);
    server.ok_json(&["dataset", "lineage", "imported"]);

    let coco = fleet_coco(&root);
    let coco_prop = format!("coco_file_path={}", coco.display());
    let root_prop = format!("root_dir={media_s}");
    server.ok_json(&[
        "annotation", "attach", "--dataset", "suvs", "--type", "coco", "--name", "boxes",
        "--property", &coco_prop, "--property", &root_prop, "--default",
    ]);
    server.ok_json(&["annotation", "list", "--dataset", "suvs"]);
    let out = root.join("yolo_out");
    let exported = server.ok_json(&["annotation", "export", "--dataset", "suvs", "--format", "yolo", "--output", out.to_str().unwrap()]);
    assert_eq!(exported["format"], "yolo");
    assert_eq!(std::fs::read_to_string(out.join("classes.txt")).unwrap(), "person\ntruck\n");

    let blob = root.join("blob.bin");
    server.ok_json(&["media", "get", &hash, "--output", blob.to_str().unwrap()]);
    assert!(std::fs::read_to_string(&blob).unwrap().starts_with("jpeg-bytes-2"));

    let requests = server.requests.lock().unwrap().clone();
    for (method, template) in ENDPOINTS {
        assert!(
            requests.iter().any(|(m, p)| m == method && matches_template(template, p)),
            "no CLI command reached {method} {template}"
        );
    }
}

#[test]
fn errors_exit_nonzero_with_codes() {
    let server = Server::start(|c| c.embed.dimension = 32);
    let run = server.cli(&["dataset", "show", "missing"]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("UNKNOWN_DATASET"), "{}", run.stderr);
    let run = server.cli(&["--json", "search", "--scope", "ds:none", "--query", ""]);
    assert_eq!(run.code, 1);
    let err: serde_json::Value = serde_json::from_str(run.stderr.trim()).unwrap();
    assert_eq!(err["code"], "EMPTY_QUERY");
    let run = server.cli_as("bad-token", &["dataset", "list"]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("UNAUTHENTICATED"));
    let run = server.cli(&["dataset", "frobnicate"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("Usage"));
}

#[test]
fn table_output_for_search() {
    let server = Server::start(|c| c.embed.dimension = 64);
    let root = server.subdir("fixtures");
    let (media, attributes) = fleet_fixture(&root);
    let run = server.cli(&[
        "datasource", "create", "--name", "demo", "--location", media.to_str().unwrap(),
        "--attributes", attributes.to_str().unwrap(), "--embeddings",
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let ds = server.catalog.get_datasource(&metapix_core::catalog::Principal::new("owner@example.com", &[]), "demo").unwrap();
    for op in &ds.operation_ids {
        server.catalog.wait_operation(op, std::time::Duration::from_secs(60)).unwrap();
    }
    let run = server.cli(&["search", "--scope", "ds:demo", "--query", "red truck", "-k", "5"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let lines: Vec<&str> = run.stdout.lines().collect();
    assert!(lines[0].starts_with("RANK"));
    assert_eq!(lines.len(), 6, "{}", run.stdout);
    assert!(run.stdout.contains("drive_01") && run.stdout.contains("s "), "video hit shows a segment:\n{}", run.stdout);
}
