//! Catalog services: governed datasources, logical versioned datasets,
//! lineage, access control, annotations and embedding search, composed over
//! the store, crawler, vector index and job runner.

mod annotate;
mod datasets;
mod model;
mod search;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub use annotate::{AnnotationExport, ExportFormat};
pub use datasets::{FileFormat, ImportRequest, Selection};
pub use model::{
    AccessLevel, Annotation, Changeset, DataSource, DataSourceSpec, Dataset, DatasetSpec,
    DatasetVersion, DatasourceInfo, MediaRef, Principal, Provenance, StorageSystem, Visibility,
};
pub use search::{SearchResult, SearchScope};

use crate::config::Config;
use crate::crawler::{Crawler, ScanReport, ViewRow};
use crate::error::{Error, Result};
use crate::jobs::{
    media_items, BatchItem, Bus, JobRunner, Operation, OperationKind, OperationStatus, ScopeCatalog,
    TOPIC_MEDIA_ADDED,
};
use crate::media::is_remote;
use crate::query;
use crate::store::{Collection, Store};
use crate::vector::{Embedder, Scope, StubEmbedder, VectorIndex};

pub const DEFAULT_MEDIA_URI_FIELD: &str = "media_uri";

pub struct Catalog {
    config: Config,
    store: Arc<Store>,
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    jobs: Arc<JobRunner>,
    crawler: Crawler,
    /// Serializes name-uniqueness checks with their inserts.
    create_lock: Mutex<()>,
    /// Serializes read-modify-write of one dataset's versions/annotations.
    dataset_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", &uuid::Uuid::new_v4().simple().to_string()[..12])
}

fn decode<T: DeserializeOwned>(body: Value) -> Result<T> {
    Ok(serde_json::from_value(body)?)
}

impl Catalog {
    /// Opens every service under `config.store.root`.
    pub fn open(config: Config) -> Result<Arc<Self>> {
        let root = config.store.root.clone();
        let store = Arc::new(Store::open(&root)?);
        let index = Arc::new(VectorIndex::open(
            root.join("index"),
            config.embed.dimension,
            config.ann.clone(),
        )?);
        let embedder: Arc<dyn Embedder> = Arc::new(StubEmbedder::from_config(&config));
        let bus = Bus::from_config(&config, Some(&root.join("bus")))?;
        let jobs = JobRunner::start(store.clone(), index.clone(), embedder.clone(), bus, config.jobs.workers)?;
        Ok(Arc::new(Self {
            crawler: Crawler::new(store.clone()),
            config,
            store,
            index,
            embedder,
            jobs,
            create_lock: Mutex::new(()),
            dataset_locks: Mutex::new(HashMap::new()),
        }))
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn index(&self) -> &Arc<VectorIndex> {
        &self.index
    }

    pub fn jobs(&self) -> &Arc<JobRunner> {
        &self.jobs
    }

    pub fn crawler(&self) -> &Crawler {
        &self.crawler
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    fn dataset_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.dataset_locks.lock().entry(id.to_string()).or_default().clone()
    }

    fn put<T: Serialize>(&self, c: Collection, id: &str, body: &T) -> Result<()> {
        self.store.records.put(c, id, serde_json::to_value(body)?)?;
        Ok(())
    }

    // ---- datasources ----

    pub fn create_datasource(&self, principal: &Principal, spec: DataSourceSpec) -> Result<DataSource> {
        if spec.name.trim().is_empty() {
            return Err(Error::InvalidArgument("datasource name must not be empty".into()));
        }
        if spec.access_level == AccessLevel::Gated && spec.roles.is_empty() {
            return Err(Error::GatedWithoutRoles);
        }
        for loc in spec.storage_locations.iter().filter(|l| !is_remote(l)) {
            let path = Path::new(loc.strip_prefix("file://").unwrap_or(loc));
            if std::fs::read_dir(path).is_err() {
                return Err(Error::UnreadableLocation(loc.clone()));
            }
        }
        if spec.storage_system == StorageSystem::OnPrem {
            if let Some(remote) = spec.storage_locations.iter().find(|l| is_remote(l)) {
                return Err(Error::UnreadableLocation(format!("{remote}: remote location on ON_PREM storage")));
            }
        }
        let now = Utc::now();
        let ds = {
            let _guard = self.create_lock.lock();
            if self.datasources().iter().any(|d| d.name == spec.name) {
                return Err(Error::DuplicateName(spec.name));
            }
            let mut roles = spec.roles;
            roles.sort();
            roles.dedup();
            let ds = DataSource {
                id: new_id("ds"),
                view: spec.view.unwrap_or_else(|| format!("{}_view", spec.name)),
                media_uri_field: spec
                    .media_uri_field
                    .unwrap_or_else(|| DEFAULT_MEDIA_URI_FIELD.to_string()),
                name: spec.name,
                description: spec.description,
                security_category_level: spec.security_category_level,
                namespace_id: spec.namespace_id,
                collection_name: spec.collection_name,
                storage_locations: spec.storage_locations,
                visualization_link: spec.visualization_link,
                region: spec.region,
                data_owner: if spec.data_owner.is_empty() {
                    principal.user_id.clone()
                } else {
                    spec.data_owner
                },
                organization: spec.organization,
                storage_system: spec.storage_system,
                access_level: spec.access_level,
                roles,
                media_count: 0,
                embeddings_enabled: spec.embeddings_enabled,
                attributes_file: spec.attributes_file,
                operation_ids: Vec::new(),
                last_modified: now,
                create_date: now,
            };
            self.store
                .records
                .put_if(Collection::Datasources, &ds.id, serde_json::to_value(&ds)?, 0)?;
            ds
        };
        let lease = self.crawler.lease(&ds.id)?;
        let op = self.jobs.create_operation(OperationKind::Crawl, Scope::datasource(&ds.id), ds.storage_locations.len())?;
        self.record_operation(&Scope::datasource(&ds.id), &op.operation_id)?;
        self.run_crawl(&ds.id, ds.attributes_file.clone(), &op.operation_id, lease);
        let op = self.jobs.get_operation(&op.operation_id)?;
        if op.status == OperationStatus::Failed {
            tracing::warn!(datasource = %ds.id, error = ?op.error, "initial crawl incomplete");
        }
        self.get_datasource_unchecked(&ds.id)
    }

    pub fn datasources(&self) -> Vec<DataSource> {
        let mut all: Vec<DataSource> = self
            .store
            .records
            .list(Collection::Datasources)
            .into_iter()
            .filter_map(|r| decode(r.body).ok())
            .collect();
        all.sort_by(|a: &DataSource, b| a.name.cmp(&b.name).then(a.id.cmp(&b.id)));
        all
    }

    /// Datasources `principal` may read, by name.
    pub fn list_datasources(&self, principal: &Principal) -> Vec<DataSource> {
        self.datasources().into_iter().filter(|d| d.allows(principal)).collect()
    }

    pub(crate) fn get_datasource_unchecked(&self, id_or_name: &str) -> Result<DataSource> {
        if let Some(rec) = self.store.records.get(Collection::Datasources, id_or_name) {
            return decode(rec.body);
        }
        self.datasources()
            .into_iter()
            .find(|d| d.name == id_or_name)
            .ok_or_else(|| Error::UnknownDatasource(id_or_name.to_string()))
    }

    pub fn get_datasource(&self, principal: &Principal, id_or_name: &str) -> Result<DataSource> {
        let ds = self.get_datasource_unchecked(id_or_name)?;
        check(ds.allows(principal), principal, &format!("datasource {}", ds.id))?;
        Ok(ds)
    }

    /// Starts an asynchronous crawl of every storage location, returning
    /// its operation id. Only one crawl per datasource runs at a time.
    pub fn crawl(
        self: &Arc<Self>,
        principal: &Principal,
        id_or_name: &str,
        attributes_file: Option<String>,
    ) -> Result<String> {
        let ds = self.get_datasource(principal, id_or_name)?;
        let lease = self.crawler.lease(&ds.id)?;
        let scope = Scope::datasource(&ds.id);
        let op = self
            .jobs
            .create_operation(OperationKind::Crawl, scope.clone(), ds.storage_locations.len())?;
        self.record_operation(&scope, &op.operation_id)?;
        let me = self.clone();
        let op_id = op.operation_id.clone();
        std::thread::Builder::new()
            .name(format!("crawl-{}", ds.id))
            .spawn(move || me.run_crawl(&ds.id, attributes_file, &op_id, lease))
            .map_err(|e| Error::StorageIo(e.to_string()))?;
        Ok(op.operation_id)
    }

    fn run_crawl(
        &self,
        ds_id: &str,
        attributes_file: Option<String>,
        op_id: &str,
        _lease: crate::crawler::CrawlLease,
    ) {
        if let Err(e) = self.try_crawl(ds_id, attributes_file, op_id) {
            let _ = self.jobs.mutate(op_id, |op| {
                op.error = Some(e.to_string());
                if op.status == OperationStatus::Pending {
                    op.transition(OperationStatus::Running)?;
                }
                op.transition(OperationStatus::Failed)
            });
        }
    }

    fn try_crawl(&self, ds_id: &str, attributes_file: Option<String>, op_id: &str) -> Result<()> {
        self.jobs.mutate(op_id, |op| op.transition(OperationStatus::Running))?;
        let ds = self.get_datasource_unchecked(ds_id)?;
        let mut report = ScanReport::default();
        let mut item_errors = Vec::new();
        for loc in &ds.storage_locations {
            let outcome = if is_remote(loc) {
                Err(Error::UnreadableLocation(format!("{loc}: no fetcher for remote locations")))
            } else {
                self.crawler.scan_location(&ds.id, loc)
            };
            match outcome {
                Ok(r) => {
                    report.merge(r);
                    self.jobs.mutate(op_id, |op| {
                        op.items_done += 1;
                        Ok(())
                    })?;
                }
                Err(e) => {
                    item_errors.push(crate::jobs::ItemError {
                        item: loc.clone(),
                        code: e.code().to_string(),
                        message: e.to_string(),
                    });
                    self.jobs.mutate(op_id, |op| {
                        op.items_failed += 1;
                        Ok(())
                    })?;
                }
            }
        }
        let attributes = match attributes_file.as_deref().or(ds.attributes_file.as_deref()) {
            Some(file) if attributes_file.is_some() || report.added + report.modified > 0 => Some(
                self.crawler
                    .load_attributes(&ds.id, &ds.media_uri_field, Path::new(file), &ds.storage_locations)?,
            ),
            _ => None,
        };
        let view = self.crawler.build_view(&ds.id, &ds.media_uri_field);
        self.store.records.update(Collection::Datasources, &ds.id, |cur| {
            let Some(cur) = cur else {
                return Ok(None);
            };
            let mut d: DataSource = decode(cur.body.clone())?;
            d.media_count = view.len();
            d.last_modified = Utc::now();
            if let Some(f) = &attributes_file {
                d.attributes_file = Some(f.clone());
            }
            Ok(Some(serde_json::to_value(&d)?))
        })?;

        let mut embedding_op = None;
        if !report.changed.is_empty() {
            let _ = self.jobs.bus().publish(
                TOPIC_MEDIA_ADDED,
                json!({"datasource_id": ds.id, "uris": report.changed.iter().map(|o| &o.uri).collect::<Vec<_>>()}),
            );
        }
        if ds.embeddings_enabled && !report.changed.is_empty() {
            let captions: HashMap<&str, &ViewRow> = view.iter().map(|r| (r.media_uri.as_str(), r)).collect();
            let mut items = Vec::new();
            for obj in &report.changed {
                let caption = captions.get(obj.uri.as_str()).and_then(|r| r.caption());
                match media_items(self.embedder.as_ref(), &obj.content_hash, &obj.uri, caption) {
                    Ok(mut i) => items.append(&mut i),
                    Err(e) => item_errors.push(crate::jobs::ItemError {
                        item: obj.uri.clone(),
                        code: e.code().to_string(),
                        message: e.to_string(),
                    }),
                }
            }
            if !items.is_empty() {
                embedding_op = Some(self.jobs.submit_batch(
                    OperationKind::Embedding,
                    &Scope::datasource(&ds.id),
                    items,
                    self,
                )?);
            }
        }
        self.jobs.mutate(op_id, |op| {
            op.result = Some(json!({
                "added": report.added,
                "modified": report.modified,
                "deleted": report.deleted,
                "media_count": view.len(),
                "attributes": attributes,
                "embedding_operation_id": embedding_op,
            }));
            if !item_errors.is_empty() {
                op.error = Some(format!("{} problem(s) during crawl", item_errors.len()));
            }
            op.item_errors = item_errors;
            op.transition(op.outcome())
        })?;
        Ok(())
    }

    /// Extended-attribute view rows, optionally filtered by a query.
    pub fn view(&self, principal: &Principal, id_or_name: &str, query_text: Option<&str>) -> Result<Vec<ViewRow>> {
        let ds = self.get_datasource(principal, id_or_name)?;
        let rows = self.crawler.build_view(&ds.id, &ds.media_uri_field);
        match query_text.filter(|q| !q.trim().is_empty()) {
            None => Ok(rows),
            Some(q) => Ok(query::materialize(&rows, &query::parse(q)?)?),
        }
    }

    /// Rescans every local datasource on the configured interval, skipping
    /// any that is already being crawled.
    pub fn spawn_monitor(self: &Arc<Self>) -> Option<std::thread::JoinHandle<()>> {
        let secs = self.config.crawl.interval_seconds;
        if secs == 0 {
            return None;
        }
        let weak = Arc::downgrade(self);
        std::thread::Builder::new()
            .name("crawl-monitor".into())
            .spawn(move || loop {
                std::thread::sleep(Duration::from_secs(secs));
                let Some(me) = weak.upgrade() else {
                    return;
                };
                for ds in me.datasources() {
                    if ds.storage_locations.iter().all(|l| is_remote(l)) {
                        continue;
                    }
                    let Ok(lease) = me.crawler.lease(&ds.id) else {
                        continue;
                    };
                    let scope = Scope::datasource(&ds.id);
                    let Ok(op) = me.jobs.create_operation(OperationKind::Crawl, scope.clone(), ds.storage_locations.len()) else {
                        continue;
                    };
                    let _ = me.record_operation(&scope, &op.operation_id);
                    me.run_crawl(&ds.id, None, &op.operation_id, lease);
                }
            })
            .ok()
    }

    pub fn get_operation(&self, operation_id: &str) -> Result<Operation> {
        self.jobs.get_operation(operation_id)
    }

    /// An operation, visible to principals who can read its scope.
    pub fn operation(&self, principal: &Principal, operation_id: &str) -> Result<Operation> {
        let op = self.jobs.get_operation(operation_id)?;
        match &op.scope {
            Scope::Datasource { id } => {
                self.get_datasource(principal, id)?;
            }
            Scope::Dataset { id, .. } => {
                self.get_dataset(principal, id)?;
            }
        }
        Ok(op)
    }

    pub fn wait_operation(&self, operation_id: &str, timeout: Duration) -> Result<Operation> {
        self.jobs.wait(operation_id, timeout)
    }

    // ---- access ----

    pub fn check_datasource_access(&self, principal: &Principal, ds: &DataSource) -> bool {
        ds.allows(principal)
    }

    pub fn check_dataset_access(&self, principal: &Principal, ds: &Dataset) -> bool {
        ds.allows(principal)
    }

    /// Raw bytes of a stored blob, if any datasource or dataset holding it
    /// is readable by `principal`.
    pub fn media(&self, principal: &Principal, content_hash: &str) -> Result<Vec<u8>> {
        let owners = self.store.blobs.owners(content_hash);
        if self.store.blobs.entry(content_hash).is_none() {
            return Err(Error::UnknownHash(content_hash.to_string()));
        }
        let readable = owners.iter().any(|o| match o {
            crate::store::Owner::ObjectTable { datasource_id } => self
                .get_datasource_unchecked(datasource_id)
                .is_ok_and(|d| d.allows(principal)),
            crate::store::Owner::DatasetVersion { dataset_id, .. } => self
                .get_dataset_unchecked(dataset_id)
                .is_ok_and(|d| d.allows(principal)),
        });
        check(readable, principal, &format!("media {content_hash}"))?;
        self.store.blobs.get_blob(content_hash)
    }

    /// Embedding items for `refs` that no scope in `sources` holds yet, one
    /// per unique (content_hash, segment).
    fn missing_items(&self, refs: &[MediaRef], sources: &[Scope], captions: &HashMap<String, String>) -> Vec<BatchItem> {
        let model = self.embedder.model_id().to_string();
        let mut seen = BTreeSet::new();
        let mut items = Vec::new();
        for r in refs {
            let expanded = match r.segment {
                Some(_) => vec![BatchItem {
                    content_hash: r.content_hash.clone(),
                    uri: r.uri.clone(),
                    segment: r.segment,
                    caption: captions.get(&r.uri).cloned(),
                }],
                None => media_items(self.embedder.as_ref(), &r.content_hash, &r.uri, captions.get(&r.uri).map(String::as_str))
                    .unwrap_or_else(|_| {
                        vec![BatchItem {
                            content_hash: r.content_hash.clone(),
                            uri: r.uri.clone(),
                            segment: None,
                            caption: captions.get(&r.uri).cloned(),
                        }]
                    }),
            };
            for item in expanded {
                let key = (item.content_hash.clone(), crate::vector::Segment::key(item.segment));
                if !seen.insert(key) {
                    continue;
                }
                if sources
                    .iter()
                    .any(|s| self.index.contains(s, &item.content_hash, item.segment, &model))
                {
                    continue;
                }
                items.push(item);
            }
        }
        items
    }
}

fn check(allowed: bool, principal: &Principal, what: &str) -> Result<()> {
    if allowed {
        Ok(())
    } else {
        Err(Error::AccessDenied(format!("{} may not access {what}", principal.user_id)))
    }
}

impl ScopeCatalog for Catalog {
    fn scope_exists(&self, scope: &Scope) -> bool {
        match scope {
            Scope::Datasource { id } => self.store.records.get(Collection::Datasources, id).is_some(),
            Scope::Dataset { id, version } => self
                .get_dataset_unchecked(id)
                .is_ok_and(|d| d.version(version).is_some()),
        }
    }

    fn record_operation(&self, scope: &Scope, operation_id: &str) -> Result<()> {
        match scope {
            Scope::Datasource { id } => {
                self.store.records.update(Collection::Datasources, id, |cur| {
                    let Some(cur) = cur else {
                        return Err(Error::UnknownScope(scope.to_string()));
                    };
                    let mut d: DataSource = decode(cur.body.clone())?;
                    d.operation_ids.push(operation_id.to_string());
                    Ok(Some(serde_json::to_value(&d)?))
                })?;
            }
            Scope::Dataset { id, version } => {
                self.store.records.update(Collection::Datasets, id, |cur| {
                    let Some(cur) = cur else {
                        return Err(Error::UnknownScope(scope.to_string()));
                    };
                    let mut d: Dataset = decode(cur.body.clone())?;
                    let v = d
                        .versions
                        .iter_mut()
                        .find(|v| &v.label == version)
                        .ok_or_else(|| Error::UnknownScope(scope.to_string()))?;
                    v.applied_operations.push(operation_id.to_string());
                    Ok(Some(serde_json::to_value(&d)?))
                })?;
            }
        }
        Ok(())
    }
}
