//! Annotation parsers and exporters.
//!
//! Every format converts to and from one canonical form, [`LabelSet`]: pixel
//! boxes with a top-left origin. COCO, YOLO and JSONL manifests are supported;
//! query annotations carry provenance only and have no file form.

pub mod coco;
pub mod jsonl;
pub mod yolo;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Slack allowed on the bounds check for boxes derived from normalized
/// coordinates.
const BOUNDS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotationError {
    #[error("parse error{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("dangling references: image ids {image_ids:?}, category ids {category_ids:?}")]
    DanglingRef {
        image_ids: Vec<i64>,
        category_ids: Vec<i64>,
    },
    #[error("bad bounding box on {item}: {message}")]
    BadBbox { item: String, message: String },
    #[error("{file}:{line}: {message}")]
    BadLine {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: class index {class} out of range for {classes} classes")]
    ClassOutOfRange {
        file: String,
        line: usize,
        class: usize,
        classes: usize,
    },
    #[error("{file}:{line}: normalized value {value} outside [0, 1]")]
    NormalizedOutOfRange {
        file: String,
        line: usize,
        value: f64,
    },
    #[error("line {line}: missing \"uri\"")]
    MissingUri { line: usize },
}

impl AnnotationError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::Parse { .. } => "PARSE_ERROR",
            AnnotationError::DanglingRef { .. } => "DANGLING_REF",
            AnnotationError::BadBbox { .. } => "BAD_BBOX",
            AnnotationError::BadLine { .. } => "BAD_LINE",
            AnnotationError::ClassOutOfRange { .. } => "CLASS_OUT_OF_RANGE",
            AnnotationError::NormalizedOutOfRange { .. } => "NORMALIZED_OUT_OF_RANGE",
            AnnotationError::MissingUri { .. } => "MISSING_URI",
        }
    }

    pub fn details(&self) -> Option<Value> {
        use serde_json::json;
        match self {
            AnnotationError::Parse { line: Some(l), .. } | AnnotationError::MissingUri { line: l } => {
                Some(json!({ "line": l }))
            }
            AnnotationError::DanglingRef {
                image_ids,
                category_ids,
            } => Some(json!({ "image_ids": image_ids, "category_ids": category_ids })),
            AnnotationError::BadLine { file, line, .. }
            | AnnotationError::ClassOutOfRange { file, line, .. }
            | AnnotationError::NormalizedOutOfRange { file, line, .. } => {
                Some(json!({ "file": file, "line": line }))
            }
            _ => None,
        }
    }

    pub(crate) fn parse(message: impl Into<String>) -> Self {
        AnnotationError::Parse {
            line: None,
            message: message.into(),
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, AnnotationError> {
    std::fs::read_to_string(path)
        .map_err(|e| AnnotationError::parse(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnnotationType {
    Coco,
    Yolo,
    Jsonl,
    Query,
}

impl AnnotationType {
    /// Property keys each type must carry, exactly.
    pub fn required_properties(self) -> &'static [&'static str] {
        match self {
            AnnotationType::Coco => &["coco_file_path", "root_dir"],
            AnnotationType::Yolo => &["labels_dir", "classes_file"],
            AnnotationType::Jsonl => &["manifest_path"],
            AnnotationType::Query => &["query_used", "datasource_info"],
        }
    }

    pub fn parse_name(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "COCO" => Some(AnnotationType::Coco),
            "YOLO" => Some(AnnotationType::Yolo),
            "JSONL" => Some(AnnotationType::Jsonl),
            "QUERY" | "SQL" => Some(AnnotationType::Query),
            _ => None,
        }
    }
}

/// Pixel box, top-left origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLabel {
    pub category: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// Uninterpreted per-box fields (segmentation, iscrowd, keypoints, ...).
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    /// Name as written in the source file, relative to its root.
    pub file_name: String,
    /// Resolved location.
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BoxLabel>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub attributes: Map<String, Value>,
}

impl LabeledItem {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        for b in &self.boxes {
            validate_box(b, self.width, self.height, &self.file_name)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_box(
    b: &BoxLabel,
    width: u32,
    height: u32,
    item: &str,
) -> Result<(), AnnotationError> {
    let bad = |message: String| AnnotationError::BadBbox {
        item: item.to_string(),
        message,
    };
    if b.category.is_empty() {
        return Err(bad("empty category".into()));
    }
    let finite = [b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite());
    if !finite || b.w <= 0.0 || b.h <= 0.0 {
        return Err(bad(format!("non-positive size {}x{}", b.w, b.h)));
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    if b.x < -BOUNDS_EPS || b.x + b.w > wf + BOUNDS_EPS {
        return Err(bad(format!(
            "x range [{}, {}] outside image width {width}",
            b.x,
            b.x + b.w
        )));
    }
    if b.y < -BOUNDS_EPS || b.y + b.h > hf + BOUNDS_EPS {
        return Err(bad(format!(
            "y range [{}, {}] outside image height {height}",
            b.y,
            b.y + b.h
        )));
    }
    Ok(())
}

/// Canonical annotation content: category names (sorted, unique) plus items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub categories: Vec<String>,
    pub items: Vec<LabeledItem>,
}

impl LabelSet {
    /// Builds a set whose categories are exactly those used by `items`.
    pub fn from_items(items: Vec<LabeledItem>) -> Self {
        let mut categories: Vec<String> = items
            .iter()
            .flat_map(|i| i.boxes.iter().map(|b| b.category.clone()))
            .collect();
        categories.sort();
        categories.dedup();
        Self { categories, items }
    }

    pub fn box_count(&self) -> usize {
        self.items.iter().map(|i| i.boxes.len()).sum()
    }

    pub fn has_boxes(&self) -> bool {
        self.box_count() > 0
    }
}
