//! Annotations linked to dataset versions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::model::{Annotation, Principal};
use super::{decode, new_id, Catalog};
use crate::annotations::{coco, jsonl, read_text, yolo, AnnotationError, AnnotationType, LabelSet};
use crate::error::{Error, Result};
use crate::store::Collection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Coco,
    Yolo,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coco" => Ok(ExportFormat::Coco),
            "yolo" => Ok(ExportFormat::Yolo),
            "jsonl" => Ok(ExportFormat::Jsonl),
            _ => Err(Error::InvalidArgument(format!("unknown export format {s:?}"))),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Coco => "coco",
            ExportFormat::Yolo => "yolo",
            ExportFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "format", content = "content", rename_all = "lowercase")]
pub enum AnnotationExport {
    Coco(coco::CocoFile),
    /// `classes.txt` plus one label file per image.
    Yolo {
        classes: String,
        files: BTreeMap<String, String>,
    },
    /// Manifest text, one JSON object per line.
    Jsonl(String),
}

fn property<'a>(props: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    props
        .get(key)
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::InvalidProperties(format!("{key:?} must be a non-empty string")))
}

fn export_jsonl(set: &LabelSet) -> String {
    let mut out = String::new();
    for item in &set.items {
        let line = json!({
            "uri": item.uri,
            "width": item.width,
            "height": item.height,
            "boxes": item.boxes,
            "attributes": item.attributes,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

impl Catalog {
    pub(crate) fn annotations_of(&self, dataset_id: &str) -> Vec<Annotation> {
        let mut all: Vec<Annotation> = self
            .store
            .records
            .list(Collection::Annotations)
            .into_iter()
            .filter_map(|r| decode::<Annotation>(r.body).ok())
            .filter(|a| a.dataset_id == dataset_id)
            .collect();
        all.sort_by(|a, b| a.create_date.cmp(&b.create_date).then(a.id.cmp(&b.id)));
        all
    }

    /// Validates `properties` for `kind`, parses any referenced files and
    /// links the annotation to the version.
    #[allow(clippy::too_many_arguments)]
    pub fn attach_annotation(
        &self,
        principal: &Principal,
        dataset_id: &str,
        version: &str,
        kind: &str,
        name: &str,
        properties: Map<String, Value>,
        make_default: bool,
    ) -> Result<Annotation> {
        let dataset = self.get_dataset(principal, dataset_id)?;
        if dataset.version(version).is_none() {
            return Err(Error::UnknownVersion {
                dataset_id: dataset.id,
                version: version.to_string(),
            });
        }
        let kind = AnnotationType::parse_name(kind)
            .ok_or_else(|| Error::InvalidProperties(format!("unknown annotation type {kind:?}")))?;
        let mut expected: Vec<&str> = kind.required_properties().to_vec();
        expected.sort_unstable();
        let mut given: Vec<&str> = properties.keys().map(String::as_str).collect();
        given.sort_unstable();
        if given != expected {
            return Err(Error::InvalidProperties(format!(
                "{kind:?} annotations take exactly {expected:?}, got {given:?}"
            )));
        }
        if name.trim().is_empty() {
            return Err(Error::InvalidArgument("annotation name must not be empty".into()));
        }

        let canonical = match kind {
            AnnotationType::Coco => Some(coco::parse_coco_file(
                Path::new(property(&properties, "coco_file_path")?),
                property(&properties, "root_dir")?,
            )?),
            AnnotationType::Jsonl => {
                let path = Path::new(property(&properties, "manifest_path")?);
                let entries = jsonl::parse_jsonl(&read_text(path)?, path.parent())?;
                Some(jsonl::to_label_set(&entries))
            }
            AnnotationType::Yolo => self.parse_yolo_for(&dataset.id, version, &properties)?,
            AnnotationType::Query => {
                property(&properties, "query_used")?;
                if properties["datasource_info"].is_null() {
                    return Err(Error::InvalidProperties("\"datasource_info\" must not be null".into()));
                }
                None
            }
        };
        self.store_annotation(&dataset.id, version, kind, name, properties, make_default, canonical)
    }

    /// YOLO labels are validated line by line; pixel boxes are produced only
    /// when another annotation on the version supplies image sizes.
    fn parse_yolo_for(
        &self,
        dataset_id: &str,
        version: &str,
        properties: &Map<String, Value>,
    ) -> Result<Option<LabelSet>> {
        let labels_dir = Path::new(property(properties, "labels_dir")?);
        let classes_file = Path::new(property(properties, "classes_file")?);
        let classes = yolo::parse_classes(&read_text(classes_file)?);
        let entries = std::fs::read_dir(labels_dir)
            .map_err(|e| AnnotationError::parse(format!("cannot read {}: {e}", labels_dir.display())))?;
        let mut names: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt") && p.as_path() != classes_file)
            .filter(|p| p.file_name().is_some_and(|n| n != "classes.txt"))
            .collect();
        names.sort();
        for path in &names {
            let file = path.file_name().unwrap_or_default().to_string_lossy();
            yolo::parse_label_file(&read_text(path)?, &file, classes.len())?;
        }
        let sized = self
            .annotations_of(dataset_id)
            .into_iter()
            .filter(|a| a.version == version)
            .find_map(|a| a.canonical);
        let Some(sized) = sized else {
            return Ok(None);
        };
        let images: Vec<yolo::ImageInfo> = sized
            .items
            .iter()
            .map(|i| yolo::ImageInfo {
                file_name: i.file_name.clone(),
                uri: i.uri.clone(),
                width: i.width,
                height: i.height,
            })
            .collect();
        Ok(Some(yolo::parse_yolo(labels_dir, classes_file, &images)?))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn store_annotation(
        &self,
        dataset_id: &str,
        version: &str,
        kind: AnnotationType,
        name: &str,
        properties: Map<String, Value>,
        make_default: bool,
        canonical: Option<LabelSet>,
    ) -> Result<Annotation> {
        let lock = self.dataset_lock(dataset_id);
        let _guard = lock.lock();
        if make_default {
            for mut other in self.annotations_of(dataset_id) {
                if other.version == version && other.is_default {
                    other.is_default = false;
                    self.put(Collection::Annotations, &other.id.clone(), &other)?;
                }
            }
        }
        let annotation = Annotation {
            id: new_id("ann"),
            dataset_id: dataset_id.to_string(),
            version: version.to_string(),
            name: name.to_string(),
            is_default: make_default,
            kind,
            properties,
            create_date: Utc::now(),
            canonical,
        };
        self.put(Collection::Annotations, &annotation.id, &annotation)?;
        self.store.records.update(Collection::Datasets, dataset_id, |cur| {
            let cur = cur.ok_or_else(|| Error::UnknownDataset(dataset_id.to_string()))?;
            let mut body = cur.body.clone();
            if body["has_annotations"] == Value::Bool(true) {
                return Ok(None);
            }
            body["has_annotations"] = Value::Bool(true);
            body["last_modified"] = serde_json::to_value(Utc::now())?;
            Ok(Some(body))
        })?;
        Ok(annotation)
    }

    pub fn list_annotations(&self, principal: &Principal, dataset_id: &str, version: &str) -> Result<Vec<Annotation>> {
        let dataset = self.get_dataset(principal, dataset_id)?;
        if dataset.version(version).is_none() {
            return Err(Error::UnknownVersion {
                dataset_id: dataset.id,
                version: version.to_string(),
            });
        }
        Ok(self
            .annotations_of(&dataset.id)
            .into_iter()
            .filter(|a| a.version == version)
            .collect())
    }

    /// Exports one annotation, or the version's default (then first
    /// exportable) annotation when `annotation_id` is absent.
    pub fn export_annotation(
        &self,
        principal: &Principal,
        dataset_id: &str,
        version: &str,
        annotation_id: Option<&str>,
        format: ExportFormat,
    ) -> Result<AnnotationExport> {
        let listed = self.list_annotations(principal, dataset_id, version)?;
        let chosen = match annotation_id {
            Some(id) => listed
                .into_iter()
                .find(|a| a.id == id)
                .ok_or_else(|| Error::UnknownAnnotation(id.to_string()))?,
            None => {
                let default = listed.iter().position(|a| a.is_default && a.canonical.is_some());
                let first = listed.iter().position(|a| a.canonical.is_some());
                match default.or(first) {
                    Some(i) => listed.into_iter().nth(i).expect("index in range"),
                    None => return Err(Error::NoAnnotations(format!("{dataset_id}@{version}"))),
                }
            }
        };
        let Some(set) = chosen.canonical else {
            return Err(match chosen.kind {
                AnnotationType::Query => Error::InvalidArgument("QUERY annotations have no file form".into()),
                _ => Error::InvalidArgument(format!(
                    "annotation {} has no image sizes to export from",
                    chosen.id
                )),
            });
        };
        Ok(match format {
            ExportFormat::Coco => AnnotationExport::Coco(coco::export_coco(&set)),
            ExportFormat::Yolo => {
                let y = yolo::export_yolo(&set);
                AnnotationExport::Yolo {
                    classes: y.classes,
                    files: y.files,
                }
            }
            ExportFormat::Jsonl => AnnotationExport::Jsonl(export_jsonl(&set)),
        })
    }
}
