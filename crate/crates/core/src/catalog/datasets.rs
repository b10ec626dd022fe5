//! Dataset creation paths, versioning and lineage.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::model::*;
use super::search::SearchScope;
use super::{check, decode, new_id, Catalog};
use crate::annotations::{coco, jsonl, AnnotationType, LabelSet};
use crate::error::{Error, Result};
use crate::jobs::{OperationKind, TOPIC_VERSION_CREATED};
use crate::media::{infer_media_type, is_remote, read_media_bytes, MediaType};
use crate::query;
use crate::store::{content_hash, Collection, Owner};
use crate::vector::{Scope, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FileFormat {
    Jsonl,
    Coco,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "JSONL" => Ok(FileFormat::Jsonl),
            "COCO" => Ok(FileFormat::Coco),
            _ => Err(Error::InvalidArgument(format!("unknown import format {s:?}"))),
        }
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileFormat::Jsonl => "JSONL",
            FileFormat::Coco => "COCO",
        })
    }
}

/// A manifest given either as a readable path or inline text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportRequest {
    pub format: FileFormat,
    #[serde(default)]
    pub manifest_path: Option<String>,
    #[serde(default)]
    pub manifest: Option<String>,
    /// Directory relative media paths resolve against. Defaults to the
    /// manifest's directory.
    #[serde(default)]
    pub base_dir: Option<String>,
}

/// One chosen search hit, by record id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub record_id: String,
}

impl ImportRequest {
    fn load(&self) -> Result<(String, Option<PathBuf>, String)> {
        let base = self.base_dir.as_ref().map(PathBuf::from);
        match (&self.manifest_path, &self.manifest) {
            (Some(path), _) => {
                let p = Path::new(path);
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::InvalidArgument(format!("cannot read manifest {path}: {e}")))?;
                let dir = p.parent().map(Path::to_path_buf);
                let name = p.file_name().map_or(path.clone(), |n| n.to_string_lossy().into_owned());
                Ok((text, base.or(dir), name))
            }
            (None, Some(text)) => Ok((text.clone(), base, "inline".to_string())),
            (None, None) => Err(Error::InvalidArgument("manifest_path or manifest is required".into())),
        }
    }
}

struct NewDataset {
    spec: DatasetSpec,
    refs: Vec<MediaRef>,
    provenance: Provenance,
    datasource: Option<DatasourceInfo>,
    visibility: Visibility,
    roles: Vec<String>,
    storage_system: StorageSystem,
    embeddings_enabled: bool,
    inherited_sources: Vec<Scope>,
    derived_from: Option<(String, String)>,
    captions: HashMap<String, String>,
}

fn dedup_refs(refs: Vec<MediaRef>) -> Vec<MediaRef> {
    let mut seen = BTreeSet::new();
    refs.into_iter().filter(|r| seen.insert(r.key())).collect()
}

fn local_path(uri: &str) -> &Path {
    Path::new(uri.strip_prefix("file://").unwrap_or(uri))
}

impl Catalog {
    pub fn datasets(&self) -> Vec<Dataset> {
        let mut all: Vec<Dataset> = self
            .store
            .records
            .list(Collection::Datasets)
            .into_iter()
            .filter_map(|r| decode(r.body).ok())
            .collect();
        all.sort_by(|a: &Dataset, b| a.name.cmp(&b.name).then(a.id.cmp(&b.id)));
        all
    }

    pub fn list_datasets(&self, principal: &Principal) -> Vec<Dataset> {
        self.datasets().into_iter().filter(|d| d.allows(principal)).collect()
    }

    pub(crate) fn get_dataset_unchecked(&self, id_or_name: &str) -> Result<Dataset> {
        if let Some(rec) = self.store.records.get(Collection::Datasets, id_or_name) {
            return decode(rec.body);
        }
        self.datasets()
            .into_iter()
            .find(|d| d.name == id_or_name)
            .ok_or_else(|| Error::UnknownDataset(id_or_name.to_string()))
    }

    pub fn get_dataset(&self, principal: &Principal, id_or_name: &str) -> Result<Dataset> {
        let ds = self.get_dataset_unchecked(id_or_name)?;
        check(ds.allows(principal), principal, &format!("dataset {}", ds.id))?;
        Ok(ds)
    }

    pub fn create_dataset_from_file(
        &self,
        principal: &Principal,
        spec: DatasetSpec,
        request: ImportRequest,
    ) -> Result<Dataset> {
        let (text, base_dir, source_name) = request.load()?;
        let mut captions = HashMap::new();
        let (uris, labels): (Vec<String>, Option<LabelSet>) = match request.format {
            FileFormat::Jsonl => {
                let entries = jsonl::parse_jsonl(&text, base_dir.as_deref())?;
                for e in &entries {
                    if let Some(Value::String(c)) = e.attributes.get("caption") {
                        captions.insert(e.uri.clone(), c.clone());
                    }
                }
                let set = jsonl::to_label_set(&entries);
                (entries.into_iter().map(|e| e.uri).collect(), Some(set).filter(LabelSet::has_boxes))
            }
            FileFormat::Coco => {
                let root = base_dir.as_ref().map_or(String::new(), |b| b.to_string_lossy().into_owned());
                let set = coco::parse_coco(&text, &root)?;
                (set.items.iter().map(|i| i.uri.clone()).collect(), Some(set).filter(LabelSet::has_boxes))
            }
        };
        if uris.is_empty() {
            return Err(Error::InvalidArgument("manifest lists no media".into()));
        }

        let mut missing = Vec::new();
        let mut loaded = Vec::new();
        for uri in &uris {
            if is_remote(uri) {
                missing.push(uri.clone());
                continue;
            }
            let path = local_path(uri);
            match read_media_bytes(path) {
                Ok(bytes) if !bytes.is_empty() => loaded.push((uri.clone(), path.to_path_buf(), bytes)),
                _ => missing.push(uri.clone()),
            }
        }
        if !missing.is_empty() {
            missing.dedup();
            return Err(Error::MediaNotFound(missing));
        }
        let mut refs = Vec::with_capacity(loaded.len());
        for (uri, path, bytes) in loaded {
            let hash = self.store.blobs.put_blob(&bytes)?;
            refs.push(MediaRef {
                content_hash: hash,
                uri,
                media_type: infer_media_type(&path).unwrap_or(MediaType::Image),
                segment: None,
            });
        }
        let embeddings_enabled = spec.embeddings_enabled.unwrap_or(false);
        let dataset = self.insert_dataset(
            principal,
            NewDataset {
                visibility: spec.visibility.unwrap_or_default(),
                roles: spec.roles.clone(),
                storage_system: spec.storage_system.unwrap_or_default(),
                spec,
                refs,
                provenance: Provenance::FileImport {
                    format: request.format.to_string(),
                    source_name: source_name.clone(),
                },
                datasource: None,
                embeddings_enabled,
                inherited_sources: Vec::new(),
                derived_from: None,
                captions,
            },
        )?;
        if let (FileFormat::Coco, Some(set)) = (request.format, labels) {
            let mut properties = Map::new();
            properties.insert(
                "coco_file_path".into(),
                Value::String(request.manifest_path.clone().unwrap_or_else(|| source_name.clone())),
            );
            properties.insert(
                "root_dir".into(),
                Value::String(base_dir.map_or(String::new(), |b| b.to_string_lossy().into_owned())),
            );
            self.store_annotation(&dataset.id, "v1", AnnotationType::Coco, &source_name, properties, true, Some(set))?;
            return self.get_dataset_unchecked(&dataset.id);
        }
        Ok(dataset)
    }

    pub fn create_dataset_from_query(
        &self,
        principal: &Principal,
        spec: DatasetSpec,
        datasource: &str,
        query_text: &str,
    ) -> Result<Dataset> {
        let source = self.get_datasource(principal, datasource)?;
        let expr = query::parse(query_text)?;
        let rows = self.crawler.build_view(&source.id, &source.media_uri_field);
        let selected = query::materialize(&rows, &expr)?;
        let mut captions = HashMap::new();
        let refs = selected
            .iter()
            .map(|row| {
                if let Some(c) = row.caption() {
                    captions.insert(row.media_uri.clone(), c.to_string());
                }
                MediaRef {
                    content_hash: row.content_hash.clone(),
                    uri: row.media_uri.clone(),
                    media_type: row.media_type,
                    segment: None,
                }
            })
            .collect();
        self.insert_dataset(
            principal,
            NewDataset {
                embeddings_enabled: spec.embeddings_enabled.unwrap_or(source.embeddings_enabled),
                spec,
                refs,
                provenance: Provenance::Query {
                    query_used: query_text.to_string(),
                    datasource_id: source.id.clone(),
                },
                datasource: Some(source.info()),
                visibility: match source.access_level {
                    AccessLevel::Unrestricted => Visibility::Public,
                    AccessLevel::Gated => Visibility::Restricted,
                },
                roles: source.roles.clone(),
                storage_system: source.storage_system,
                inherited_sources: vec![Scope::datasource(&source.id)],
                derived_from: None,
                captions,
            },
        )
    }

    /// Mints a dataset from chosen hits of a search over `scope`.
    pub fn create_dataset_from_search(
        &self,
        principal: &Principal,
        spec: DatasetSpec,
        scope: &str,
        query_text: &str,
        selection: &[Selection],
    ) -> Result<Dataset> {
        if selection.is_empty() {
            return Err(Error::InvalidArgument("selection is empty".into()));
        }
        let resolved = self.resolve_scope(principal, scope)?;
        let sources = resolved.sources();
        let members = resolved.members();
        let mut by_id = HashMap::new();
        for s in &sources {
            for row in self.index.rows(s) {
                if members.as_ref().is_none_or(|m| m.contains(&row)) {
                    by_id.entry(row.id.clone()).or_insert(row);
                }
            }
        }
        let mut refs = Vec::with_capacity(selection.len());
        for sel in selection {
            let row = by_id
                .get(&sel.record_id)
                .ok_or_else(|| Error::UnknownSegment(sel.record_id.clone()))?;
            let media_type = match row.segment {
                Some(_) => MediaType::Video,
                None => infer_media_type(local_path(&row.uri)).unwrap_or(MediaType::Image),
            };
            refs.push(MediaRef {
                content_hash: row.content_hash.clone(),
                uri: row.uri.clone(),
                media_type,
                segment: row.segment,
            });
        }
        let scope_text = resolved.scope().to_string();
        let new = match &resolved {
            SearchScope::Datasource(ds) => NewDataset {
                embeddings_enabled: spec.embeddings_enabled.unwrap_or(true),
                spec,
                refs,
                provenance: Provenance::SearchSelection {
                    query_text: query_text.to_string(),
                    source_scope: scope_text,
                },
                datasource: Some(ds.info()),
                visibility: match ds.access_level {
                    AccessLevel::Unrestricted => Visibility::Public,
                    AccessLevel::Gated => Visibility::Restricted,
                },
                roles: ds.roles.clone(),
                storage_system: ds.storage_system,
                inherited_sources: sources,
                derived_from: None,
                captions: HashMap::new(),
            },
            SearchScope::Dataset(src, version) => NewDataset {
                embeddings_enabled: spec.embeddings_enabled.unwrap_or(true),
                spec,
                refs,
                provenance: Provenance::SearchSelection {
                    query_text: query_text.to_string(),
                    source_scope: scope_text,
                },
                datasource: src.datasource.clone(),
                visibility: src.visibility,
                roles: src.roles.clone(),
                storage_system: src.storage_system,
                inherited_sources: sources,
                derived_from: Some((src.id.clone(), version.clone())),
                captions: HashMap::new(),
            },
        };
        self.insert_dataset(principal, new)
    }

    fn insert_dataset(&self, principal: &Principal, new: NewDataset) -> Result<Dataset> {
        let name = new.spec.name.trim().to_string();
        if name.is_empty() {
            return Err(Error::InvalidArgument("dataset name must not be empty".into()));
        }
        if new.visibility == Visibility::Restricted && new.roles.is_empty() && new.datasource.is_none() {
            return Err(Error::GatedWithoutRoles);
        }
        let refs = dedup_refs(new.refs);
        if refs.is_empty() {
            return Err(Error::InvalidArgument("dataset would contain no media".into()));
        }
        let now = Utc::now();
        let mut roles = new.roles;
        roles.sort();
        roles.dedup();
        let dataset = {
            let _guard = self.create_lock.lock();
            if self.datasets().iter().any(|d| d.name == name) {
                return Err(Error::DuplicateName(name));
            }
            let id = new_id("dset");
            let own = Scope::dataset(&id, "v1");
            let mut embedding_sources = vec![own];
            embedding_sources.extend(new.inherited_sources);
            let dataset = Dataset {
                creator_id: principal.user_id.clone(),
                name,
                description: new.spec.description,
                tags: new.spec.tags,
                license: new.spec.license,
                versions: vec![DatasetVersion {
                    label: "v1".into(),
                    created_at: now,
                    parent: None,
                    media_refs: refs,
                    provenance: new.provenance,
                    applied_operations: Vec::new(),
                    embedding_sources,
                }],
                datasource: new.datasource,
                visibility: new.visibility,
                roles,
                storage_system: new.storage_system,
                embeddings_enabled: new.embeddings_enabled,
                has_annotations: false,
                derived_from: new.derived_from,
                create_date: now,
                last_modified: now,
                id,
            };
            self.reference_version(&dataset.id, dataset.latest())?;
            self.store
                .records
                .put_if(Collection::Datasets, &dataset.id, serde_json::to_value(&dataset)?, 0)?;
            dataset
        };
        self.after_version(&dataset, "v1", &new.captions)?;
        self.get_dataset_unchecked(&dataset.id)
    }

    fn reference_version(&self, dataset_id: &str, version: &DatasetVersion) -> Result<()> {
        let owner = Owner::version(dataset_id, &version.label);
        let hashes: BTreeSet<&str> = version.media_refs.iter().map(|r| r.content_hash.as_str()).collect();
        for h in hashes {
            self.store.blobs.add_reference(h, &owner)?;
        }
        Ok(())
    }

    /// Announces a new version and enqueues embeddings the version cannot
    /// inherit.
    fn after_version(&self, dataset: &Dataset, label: &str, captions: &HashMap<String, String>) -> Result<()> {
        let version = dataset.version(label).expect("version just written");
        let _ = self.jobs.bus().publish(
            TOPIC_VERSION_CREATED,
            json!({"dataset_id": dataset.id, "version": label, "media_count": version.media_refs.len()}),
        );
        if dataset.embeddings_enabled {
            let items = self.missing_items(&version.media_refs, &version.embedding_sources, captions);
            if !items.is_empty() {
                self.jobs.submit_batch(
                    OperationKind::Embedding,
                    &Scope::dataset(&dataset.id, label),
                    items,
                    self,
                )?;
            }
        }
        Ok(())
    }

    pub fn add_version(&self, principal: &Principal, dataset_id: &str, changeset: Changeset) -> Result<DatasetVersion> {
        if changeset.add.is_empty() && changeset.remove.is_empty() {
            return Err(Error::EmptyChangeset);
        }
        let id = self.get_dataset(principal, dataset_id)?.id;
        let lock = self.dataset_lock(&id);
        let _guard = lock.lock();
        let dataset = self.get_dataset_unchecked(&id)?;
        let parent = dataset.latest().clone();

        let mut refs = parent.media_refs.clone();
        for r in &changeset.remove {
            let key = r.key();
            let pos = refs
                .iter()
                .position(|p| p.key() == key)
                .ok_or_else(|| Error::UnknownMedia(format!("{} ({})", r.uri, r.content_hash)))?;
            refs.remove(pos);
        }
        let mut missing = Vec::new();
        for r in &changeset.add {
            if self.store.blobs.contains(&r.content_hash) {
                continue;
            }
            let stored = !is_remote(&r.uri)
                && read_media_bytes(local_path(&r.uri))
                    .ok()
                    .filter(|b| content_hash(b) == r.content_hash)
                    .map(|b| self.store.blobs.put_blob(&b))
                    .transpose()?
                    .is_some();
            if !stored {
                missing.push(r.uri.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Error::MediaNotFound(missing));
        }
        refs.extend(changeset.add);
        let refs = dedup_refs(refs);

        let label = format!("v{}", dataset.versions.len() + 1);
        let mut embedding_sources = vec![Scope::dataset(&id, &label)];
        embedding_sources.extend(parent.embedding_sources.iter().cloned());
        let version = DatasetVersion {
            label: label.clone(),
            created_at: Utc::now(),
            parent: Some(parent.label.clone()),
            media_refs: refs,
            provenance: changeset.provenance.unwrap_or(Provenance::Derived {
                operation_id: None,
                extractor_kind: None,
                note: None,
            }),
            applied_operations: Vec::new(),
            embedding_sources,
        };
        self.reference_version(&id, &version)?;
        self.store.records.update(Collection::Datasets, &id, |cur| {
            let cur = cur.ok_or_else(|| Error::UnknownDataset(id.clone()))?;
            let mut d: Dataset = decode(cur.body.clone())?;
            d.versions.push(version);
            d.last_modified = Utc::now();
            Ok(Some(serde_json::to_value(&d)?))
        })?;
        let dataset = self.get_dataset_unchecked(&id)?;
        self.after_version(&dataset, &label, &HashMap::new())?;
        Ok(self.get_dataset_unchecked(&id)?.version(&label).cloned().expect("stored"))
    }

    /// Origin and version history of a dataset. Search-derived datasets nest
    /// the lineage of the dataset they were selected from.
    pub fn lineage(&self, principal: &Principal, dataset_id: &str) -> Result<Value> {
        let dataset = self.get_dataset(principal, dataset_id)?;
        self.lineage_of(&dataset, 0)
    }

    fn lineage_of(&self, dataset: &Dataset, depth: usize) -> Result<Value> {
        let annotations = self.annotations_of(&dataset.id);
        let versions: Vec<Value> = dataset
            .versions
            .iter()
            .map(|v| {
                let mut chain = vec![v.label.clone()];
                let mut cur = v.parent.clone();
                while let Some(p) = cur {
                    chain.push(p.clone());
                    cur = dataset.version(&p).and_then(|pv| pv.parent.clone());
                }
                json!({
                    "label": v.label,
                    "parent": v.parent,
                    "created_at": v.created_at,
                    "provenance": v.provenance,
                    "media_count": v.media_refs.len(),
                    "applied_operations": v.applied_operations,
                    "chain": chain,
                    "annotations": annotations
                        .iter()
                        .filter(|a| a.version == v.label)
                        .map(|a| json!({"id": a.id, "name": a.name, "type": a.kind, "is_default": a.is_default}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        let derived_from = match &dataset.derived_from {
            Some((src, version)) if depth < 16 => {
                let nested = match self.get_dataset_unchecked(src) {
                    Ok(parent) => self.lineage_of(&parent, depth + 1)?,
                    Err(_) => Value::Null,
                };
                json!({"dataset_id": src, "version": version, "lineage": nested})
            }
            _ => Value::Null,
        };
        Ok(json!({
            "dataset_id": dataset.id,
            "name": dataset.name,
            "datasource": dataset.datasource,
            "derived_from": derived_from,
            "versions": versions,
        }))
    }
}

/// Membership test for rows of a dataset version: exact segment for
/// segment refs, any segment for whole-media refs.
pub(crate) struct Members {
    whole: BTreeSet<String>,
    segments: BTreeSet<(String, Option<(u64, u64)>)>,
}

impl Members {
    pub(crate) fn of(version: &DatasetVersion) -> Self {
        let mut whole = BTreeSet::new();
        let mut segments = BTreeSet::new();
        for r in &version.media_refs {
            match r.segment {
                None => {
                    whole.insert(r.content_hash.clone());
                }
                Some(_) => {
                    segments.insert((r.content_hash.clone(), Segment::key(r.segment)));
                }
            }
        }
        Self { whole, segments }
    }

    pub(crate) fn contains(&self, row: &crate::vector::RowMeta) -> bool {
        self.whole.contains(&row.content_hash)
            || self.segments.contains(&(row.content_hash.clone(), Segment::key(row.segment)))
    }
}
