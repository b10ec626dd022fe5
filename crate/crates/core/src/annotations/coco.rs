//! COCO detection subset: `images`, `annotations` (bbox `[x, y, w, h]`
//! pixels) and `categories`. Unrecognised fields ride along untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{read_text, AnnotationError, BoxLabel, LabelSet, LabeledItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: i64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: i64,
    pub image_id: i64,
    pub category_id: i64,
    pub bbox: [f64; 4],
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: i64,
    pub name: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

pub fn parse_coco_file(path: &Path, root_dir: &str) -> Result<LabelSet, AnnotationError> {
    parse_coco(&read_text(path)?, root_dir)
}

/// Parses COCO JSON into the canonical form, items ordered by image id.
pub fn parse_coco(text: &str, root_dir: &str) -> Result<LabelSet, AnnotationError> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| AnnotationError::Parse {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    from_coco(file, root_dir)
}

pub fn from_coco(file: CocoFile, root_dir: &str) -> Result<LabelSet, AnnotationError> {
    let mut categories: HashMap<i64, String> = HashMap::new();
    for c in &file.categories {
        if categories.insert(c.id, c.name.clone()).is_some() {
            return Err(AnnotationError::parse(format!("duplicate category id {}", c.id)));
        }
    }
    let mut images: BTreeMap<i64, LabeledItem> = BTreeMap::new();
    for img in file.images {
        let item = LabeledItem {
            uri: resolve(root_dir, &img.file_name),
            file_name: img.file_name,
            content_hash: None,
            width: img.width,
            height: img.height,
            boxes: Vec::new(),
            attributes: img.extra,
        };
        if images.insert(img.id, item).is_some() {
            return Err(AnnotationError::parse(format!("duplicate image id {}", img.id)));
        }
    }

    let mut dangling_images = BTreeSet::new();
    let mut dangling_categories = BTreeSet::new();
    for a in &file.annotations {
        if !images.contains_key(&a.image_id) {
            dangling_images.insert(a.image_id);
        }
        if !categories.contains_key(&a.category_id) {
            dangling_categories.insert(a.category_id);
        }
    }
    if !dangling_images.is_empty() || !dangling_categories.is_empty() {
        return Err(AnnotationError::DanglingRef {
            image_ids: dangling_images.into_iter().collect(),
            category_ids: dangling_categories.into_iter().collect(),
        });
    }

    let mut annotations = file.annotations;
    annotations.sort_by_key(|a| a.id);
    for a in annotations {
        let item = images.get_mut(&a.image_id).expect("checked above");
        let [x, y, w, h] = a.bbox;
        let b = BoxLabel {
            category: categories[&a.category_id].clone(),
            x,
            y,
            w,
            h,
            extra: a.extra,
        };
        super::validate_box(&b, item.width, item.height, &item.file_name)?;
        item.boxes.push(b);
    }

    let mut names: Vec<String> = categories.into_values().collect();
    names.sort();
    names.dedup();
    Ok(LabelSet {
        categories: names,
        items: images.into_values().collect(),
    })
}

fn resolve(root_dir: &str, file_name: &str) -> String {
    if root_dir.is_empty() || Path::new(file_name).is_absolute() || file_name.contains("://") {
        file_name.to_string()
    } else {
        Path::new(root_dir).join(file_name).to_string_lossy().into_owned()
    }
}

/// Exports with dense ids from 1 and categories sorted by name.
pub fn export_coco(set: &LabelSet) -> CocoFile {
    let mut names: Vec<&str> = set
        .categories
        .iter()
        .map(String::as_str)
        .chain(set.items.iter().flat_map(|i| i.boxes.iter().map(|b| b.category.as_str())))
        .collect();
    names.sort();
    names.dedup();
    let category_id: HashMap<&str, i64> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i as i64 + 1))
        .collect();

    let mut images = Vec::with_capacity(set.items.len());
    let mut annotations = Vec::new();
    for (idx, item) in set.items.iter().enumerate() {
        let image_id = idx as i64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: item.file_name.clone(),
            width: item.width,
            height: item.height,
            extra: item.attributes.clone(),
        });
        for b in &item.boxes {
            annotations.push(CocoAnnotation {
                id: annotations.len() as i64 + 1,
                image_id,
                category_id: category_id[b.category.as_str()],
                bbox: [b.x, b.y, b.w, b.h],
                extra: b.extra.clone(),
            });
        }
    }
    CocoFile {
        images,
        annotations,
        categories: names
            .iter()
            .map(|n| CocoCategory {
                id: category_id[n],
                name: n.to_string(),
                extra: Map::new(),
            })
            .collect(),
        extra: Map::new(),
    }
}
