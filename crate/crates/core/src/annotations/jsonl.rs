//! JSONL media manifests: one object per line with a required `uri` and
//! optional `attributes`, `boxes`, `width`, `height`.

use std::path::Path;

use serde_json::{Map, Value};

use super::{AnnotationError, BoxLabel, LabelSet, LabeledItem};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub line: usize,
    /// `uri` exactly as written.
    pub raw_uri: String,
    /// `uri` resolved against the manifest's directory.
    pub uri: String,
    pub attributes: Map<String, Value>,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub boxes: Vec<BoxLabel>,
}

pub fn resolve_uri(base_dir: Option<&Path>, uri: &str) -> String {
    match base_dir {
        Some(base) if !uri.contains("://") && !Path::new(uri).is_absolute() => {
            base.join(uri).to_string_lossy().into_owned()
        }
        _ => uri.to_string(),
    }
}

pub fn parse_jsonl(text: &str, base_dir: Option<&Path>) -> Result<Vec<ManifestEntry>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let parse_err = |message: String| AnnotationError::Parse {
            line: Some(line),
            message,
        };
        if raw.trim().is_empty() {
            return Err(parse_err("blank line".into()));
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(parse_err("expected a JSON object".into()));
        };
        let raw_uri = match obj.remove("uri") {
            Some(Value::String(s)) if !s.is_empty() => s,
            _ => return Err(AnnotationError::MissingUri { line }),
        };
        let attributes = match obj.remove("attributes") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => return Err(parse_err("\"attributes\" must be an object".into())),
        };
        let dim = |v: Option<Value>, key: &str| -> Result<Option<u32>, AnnotationError> {
            match v {
                None | Some(Value::Null) => Ok(None),
                Some(v) => v
                    .as_u64()
                    .and_then(|n| u32::try_from(n).ok())
                    .map(Some)
                    .ok_or_else(|| parse_err(format!("{key:?} must be a non-negative integer"))),
            }
        };
        let width = dim(obj.remove("width"), "width")?;
        let height = dim(obj.remove("height"), "height")?;
        let boxes: Vec<BoxLabel> = match obj.remove("boxes") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => serde_json::from_value(v).map_err(|e| parse_err(format!("boxes: {e}")))?,
        };
        if !boxes.is_empty() {
            let (Some(w), Some(h)) = (width, height) else {
                return Err(AnnotationError::BadBbox {
                    item: raw_uri,
                    message: "boxes need \"width\" and \"height\"".into(),
                });
            };
            for b in &boxes {
                super::validate_box(b, w, h, &raw_uri)?;
            }
        }
        out.push(ManifestEntry {
            line,
            uri: resolve_uri(base_dir, &raw_uri),
            raw_uri,
            attributes,
            width,
            height,
            boxes,
        });
    }
    Ok(out)
}

/// Canonical form of the entries that carry image sizes.
pub fn to_label_set(entries: &[ManifestEntry]) -> LabelSet {
    let items = entries
        .iter()
        .filter_map(|e| {
            Some(LabeledItem {
                file_name: e.raw_uri.clone(),
                uri: e.uri.clone(),
                content_hash: None,
                width: e.width?,
                height: e.height?,
                boxes: e.boxes.clone(),
                attributes: e.attributes.clone(),
            })
        })
        .collect();
    LabelSet::from_items(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_in_order() {
        let text = "{\"uri\": \"a.jpg\"}\n{\"uri\": \"/abs/b.jpg\", \"attributes\": {\"k\": 1}}\n{\"uri\": \"gs://bucket/c.jpg\"}\n";
        let entries = parse_jsonl(text, Some(Path::new("/base"))).unwrap();
        let uris: Vec<_> = entries.iter().map(|e| e.uri.as_str()).collect();
        assert_eq!(uris, vec!["/base/a.jpg", "/abs/b.jpg", "gs://bucket/c.jpg"]);
        assert_eq!(entries[1].attributes["k"], 1);
    }

    #[test]
    fn missing_uri_names_line() {
        let text = "{\"uri\": \"a.jpg\"}\n{\"attributes\": {}}\n";
        assert_eq!(
            parse_jsonl(text, None).unwrap_err(),
            AnnotationError::MissingUri { line: 2 }
        );
    }

    #[test]
    fn blank_and_malformed_lines_rejected() {
        let err = parse_jsonl("{\"uri\": \"a\"}\n\n{\"uri\": \"b\"}\n", None).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert_eq!(err.details().unwrap()["line"], 2);
        assert_eq!(parse_jsonl("[1,2]", None).unwrap_err().code(), "PARSE_ERROR");
        assert_eq!(parse_jsonl("{nope", None).unwrap_err().code(), "PARSE_ERROR");
    }

    #[test]
    fn boxes_validated() {
        let ok = r#"{"uri": "a.jpg", "width": 640, "height": 480, "boxes": [{"category": "car", "x": 320, "y": 120, "w": 64, "h": 48}]}"#;
        let entries = parse_jsonl(ok, None).unwrap();
        assert_eq!(entries[0].boxes.len(), 1);
        assert_eq!(to_label_set(&entries).categories, vec!["car"]);

        let bad = r#"{"uri": "a.jpg", "width": 640, "height": 480, "boxes": [{"category": "car", "x": 630, "y": 0, "w": 20, "h": 20}]}"#;
        assert_eq!(parse_jsonl(bad, None).unwrap_err().code(), "BAD_BBOX");
        let sizeless = r#"{"uri": "a.jpg", "boxes": [{"category": "car", "x": 0, "y": 0, "w": 2, "h": 2}]}"#;
        assert_eq!(parse_jsonl(sizeless, None).unwrap_err().code(), "BAD_BBOX");
    }
}
