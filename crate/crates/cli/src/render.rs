//! Plain-text rendering of API responses.

use std::fmt::Write;

use serde_json::Value;

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".to_string(),
        other => other.to_string(),
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut l = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i + 1 == cells.len() {
                l.push_str(c);
            } else {
                let _ = write!(l, "{c:<w$}  ", w = widths[i]);
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn segment(seg: &Value) -> String {
    match (seg["start_seconds"].as_f64(), seg["end_seconds"].as_f64()) {
        (Some(a), Some(b)) => format!("{a:.1}-{b:.1}s"),
        _ => "-".to_string(),
    }
}

fn short_hash(h: &Value) -> String {
    h.as_str().map_or("-".into(), |h| h.chars().take(12).collect())
}

pub fn page_footer(page: &Value) -> String {
    match page["next_offset"].as_u64() {
        Some(n) => format!("{} of {} shown, next offset {n}\n", page["items"].as_array().map_or(0, Vec::len), s(&page["total"])),
        None => String::new(),
    }
}

pub fn datasources(page: &Value) -> String {
    let rows: Vec<Vec<String>> = items(page)
        .iter()
        .map(|d| {
            vec![
                s(&d["id"]),
                s(&d["name"]),
                s(&d["media_count"]),
                s(&d["access_level"]),
                s(&d["embeddings_enabled"]),
            ]
        })
        .collect();
    table(&["ID", "NAME", "MEDIA", "ACCESS", "EMBEDDINGS"], &rows) + &page_footer(page)
}

pub fn datasource(d: &Value) -> String {
    let mut out = String::new();
    for key in [
        "id",
        "name",
        "description",
        "data_owner",
        "organization",
        "storage_system",
        "access_level",
        "roles",
        "storage_locations",
        "media_count",
        "embeddings_enabled",
        "view",
        "media_uri_field",
        "operation_ids",
    ] {
        let _ = writeln!(out, "{key:<20}{}", s(&d[key]));
    }
    out
}

pub fn view(page: &Value) -> String {
    let rows: Vec<Vec<String>> = items(page)
        .iter()
        .map(|r| {
            vec![
                s(&r["media_uri"]),
                short_hash(&r["content_hash"]),
                s(&r["media_type"]),
                Value::Object(r["attributes"].as_object().cloned().unwrap_or_default()).to_string(),
            ]
        })
        .collect();
    table(&["URI", "HASH", "TYPE", "ATTRIBUTES"], &rows) + &page_footer(page)
}

pub fn dataset_created(d: &Value) -> String {
    let v1 = &d["versions"][0];
    format!(
        "created dataset {} ({}) v1: {} media\n",
        s(&d["name"]),
        s(&d["id"]),
        v1["media_refs"].as_array().map_or(0, Vec::len)
    )
}

pub fn datasets(page: &Value) -> String {
    let rows: Vec<Vec<String>> = items(page)
        .iter()
        .map(|d| {
            let versions = d["versions"].as_array().cloned().unwrap_or_default();
            let latest = versions.last().cloned().unwrap_or(Value::Null);
            vec![
                s(&d["id"]),
                s(&d["name"]),
                s(&latest["label"]),
                latest["media_refs"].as_array().map_or(0, Vec::len).to_string(),
                s(&d["visibility"]),
                d["datasource"]["name"].as_str().unwrap_or("-").to_string(),
            ]
        })
        .collect();
    table(&["ID", "NAME", "LATEST", "MEDIA", "VISIBILITY", "DATASOURCE"], &rows) + &page_footer(page)
}

pub fn provenance(p: &Value) -> String {
    match p["type"].as_str() {
        Some("QUERY") => format!("QUERY {:?} on {}", s(&p["query_used"]), s(&p["datasource_id"])),
        Some("SEARCH_SELECTION") => format!("SEARCH_SELECTION {:?} in {}", s(&p["query_text"]), s(&p["source_scope"])),
        Some("FILE_IMPORT") => format!("FILE_IMPORT {} {}", s(&p["format"]), s(&p["source_name"])),
        Some("DERIVED") => {
            let mut t = "DERIVED".to_string();
            if let Some(op) = p["operation_id"].as_str() {
                let _ = write!(t, " by {op}");
            }
            if let Some(note) = p["note"].as_str() {
                let _ = write!(t, " ({note})");
            }
            t
        }
        _ => s(p),
    }
}

pub fn dataset(d: &Value) -> String {
    let mut out = format!("{} ({})\n", s(&d["name"]), s(&d["id"]));
    if let Some(src) = d["datasource"].as_object() {
        let _ = writeln!(out, "datasource  {} ({})", s(&src["name"]), s(&src["datasource_id"]));
    }
    let _ = writeln!(out, "visibility  {}  roles {}", s(&d["visibility"]), s(&d["roles"]));
    let rows: Vec<Vec<String>> = d["versions"]
        .as_array()
        .map(|vs| {
            vs.iter()
                .map(|v| {
                    vec![
                        s(&v["label"]),
                        s(&v["parent"]),
                        v["media_refs"].as_array().map_or(0, Vec::len).to_string(),
                        provenance(&v["provenance"]),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    out + &table(&["VERSION", "PARENT", "MEDIA", "PROVENANCE"], &rows)
}

pub fn lineage(l: &Value) -> String {
    let mut out = String::new();
    lineage_into(l, 0, &mut out);
    out
}

fn lineage_into(l: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}dataset {} ({})", s(&l["name"]), s(&l["dataset_id"]));
    if let Some(src) = l["datasource"].as_object() {
        let _ = writeln!(out, "{pad}  datasource {} ({})", s(&src["name"]), s(&src["datasource_id"]));
    }
    for v in l["versions"].as_array().into_iter().flatten() {
        let _ = writeln!(
            out,
            "{pad}  {} <- {}  {} media  {}",
            s(&v["label"]),
            s(&v["parent"]),
            s(&v["media_count"]),
            provenance(&v["provenance"])
        );
        for a in v["annotations"].as_array().into_iter().flatten() {
            let mark = if a["is_default"].as_bool() == Some(true) { " (default)" } else { "" };
            let _ = writeln!(out, "{pad}    annotation {} {} {}{mark}", s(&a["id"]), s(&a["type"]), s(&a["name"]));
        }
    }
    if let Some(d) = l["derived_from"].as_object() {
        let _ = writeln!(out, "{pad}  derived from {}@{}", s(&d["dataset_id"]), s(&d["version"]));
        if !d["lineage"].is_null() {
            lineage_into(&d["lineage"], depth + 2, out);
        }
    }
}

pub fn hits(result: &Value) -> String {
    let rows: Vec<Vec<String>> = result["hits"]
        .as_array()
        .map(|hs| {
            hs.iter()
                .map(|h| {
                    vec![
                        s(&h["rank"]),
                        format!("{:.6}", h["score"].as_f64().unwrap_or(0.0)),
                        s(&h["uri"]),
                        segment(&h["segment"]),
                        s(&h["record_id"]),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    if rows.is_empty() {
        return "no results\n".to_string();
    }
    table(&["RANK", "SCORE", "URI", "SEGMENT", "RECORD"], &rows)
}

pub fn annotations(page: &Value) -> String {
    let rows: Vec<Vec<String>> = items(page)
        .iter()
        .map(|a| {
            vec![
                s(&a["id"]),
                s(&a["type"]),
                s(&a["name"]),
                if a["is_default"].as_bool() == Some(true) { "yes".into() } else { "".into() },
            ]
        })
        .collect();
    table(&["ID", "TYPE", "NAME", "DEFAULT"], &rows) + &page_footer(page)
}

pub fn operation(op: &Value) -> String {
    let mut out = format!(
        "{}  {}  {}  {}/{} done, {} failed\n",
        s(&op["operation_id"]),
        s(&op["kind"]),
        s(&op["status"]),
        s(&op["items_done"]),
        s(&op["items_total"]),
        s(&op["items_failed"]),
    );
    if let Some(e) = op["error"].as_str() {
        let _ = writeln!(out, "error: {e}");
    }
    for e in op["item_errors"].as_array().into_iter().flatten() {
        let _ = writeln!(out, "  {}: {}", s(&e["item"]), s(&e["message"]));
    }
    out
}

fn items(page: &Value) -> Vec<Value> {
    page["items"].as_array().cloned().unwrap_or_default()
}
