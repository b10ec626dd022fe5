//! Message bus and batch job runner with operation tracking.
//!
//! `submit_batch` persists a PENDING operation, links it to its scope and
//! publishes `embeddings.requested`; the runner's subscription picks the
//! batch up and processes items on a bounded worker pool. Index writes for a
//! batch happen once, after all items finish, so the index never holds half
//! a batch and its files do not depend on worker scheduling.

mod bus;
mod operation;

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Weak};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use bus::{
    read_journal, Bus, Handler, Message, SubscriptionId, TOPIC_EMBEDDINGS_COMPLETED,
    TOPIC_EMBEDDINGS_REQUESTED, TOPIC_MEDIA_ADDED, TOPIC_VERSION_CREATED,
};
pub use operation::{ItemError, Operation, OperationKind, OperationStatus};

use crate::error::{Error, Result};
use crate::media::{is_remote, read_media_bytes};
use crate::store::{content_hash, Collection, Store};
use crate::vector::{Embedder, EmbeddingRecord, Scope, Segment, VectorIndex};

/// One unit of batch work: a media object, or one segment of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub content_hash: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
    /// Caption used when the media has no sidecar caption file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl BatchItem {
    fn label(&self) -> String {
        match self.segment {
            Some(s) => format!("{}#{}-{}", self.uri, s.start_seconds, s.end_seconds),
            None => self.uri.clone(),
        }
    }
}

/// What the runner needs to know about the catalog.
pub trait ScopeCatalog: Send + Sync {
    fn scope_exists(&self, scope: &Scope) -> bool;
    /// Stores `operation_id` on the scope's catalog record.
    fn record_operation(&self, scope: &Scope, operation_id: &str) -> Result<()>;
}

pub struct JobRunner {
    store: Arc<Store>,
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
    bus: Bus,
    workers: usize,
    extractors: RwLock<BTreeSet<String>>,
    ops: Mutex<HashMap<String, Operation>>,
    changed: Condvar,
    queued: Mutex<HashMap<String, Vec<BatchItem>>>,
    journal: Mutex<Option<File>>,
}

impl JobRunner {
    /// Creates the runner and attaches it to `embeddings.requested`.
    /// Operations left unfinished by a previous process are marked FAILED.
    pub fn start(
        store: Arc<Store>,
        index: Arc<VectorIndex>,
        embedder: Arc<dyn Embedder>,
        bus: Bus,
        workers: usize,
    ) -> Result<Arc<Self>> {
        let journal = match bus.dir() {
            Some(dir) => Some(OpenOptions::new().create(true).append(true).open(dir.join("jobs.jsonl"))?),
            None => None,
        };
        let runner = Arc::new(Self {
            store,
            index,
            embedder,
            bus: bus.clone(),
            workers: workers.max(1),
            extractors: RwLock::new(BTreeSet::new()),
            ops: Mutex::new(HashMap::new()),
            changed: Condvar::new(),
            queued: Mutex::new(HashMap::new()),
            journal: Mutex::new(journal),
        });
        runner.recover()?;
        let weak: Weak<Self> = Arc::downgrade(&runner);
        bus.subscribe(TOPIC_EMBEDDINGS_REQUESTED, move |msg| {
            let Some(runner) = weak.upgrade() else {
                return Ok(());
            };
            let Some(op_id) = msg.payload["operation_id"].as_str() else {
                return Ok(());
            };
            // At-least-once: a redelivered request finds nothing queued.
            let Some(items) = runner.queued.lock().remove(op_id) else {
                return Ok(());
            };
            let op_id = op_id.to_string();
            std::thread::Builder::new()
                .name(format!("batch-{op_id}"))
                .spawn(move || runner.execute(&op_id, &items))
                .map(|_| ())
                .map_err(|e| e.to_string())
        });
        Ok(runner)
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Makes `EXTRACTOR(name)` batches acceptable. Extractors are no-ops.
    pub fn register_extractor(&self, name: &str) {
        self.extractors.write().insert(name.to_string());
    }

    fn recover(&self) -> Result<()> {
        for rec in self.store.records.list(Collection::Operations) {
            let Ok(mut op) = serde_json::from_value::<Operation>(rec.body) else {
                continue;
            };
            if op.status.is_terminal() {
                continue;
            }
            if op.status == OperationStatus::Pending {
                op.transition(OperationStatus::Running)?;
            }
            op.error = Some("interrupted by service restart".into());
            op.transition(OperationStatus::Failed)?;
            self.store
                .records
                .put(Collection::Operations, &op.operation_id, serde_json::to_value(&op)?)?;
        }
        Ok(())
    }

    /// Persists and tracks a new PENDING operation.
    pub fn create_operation(&self, kind: OperationKind, scope: Scope, items_total: usize) -> Result<Operation> {
        let op = Operation::new(kind, scope, items_total);
        self.store
            .records
            .put(Collection::Operations, &op.operation_id, serde_json::to_value(&op)?)?;
        self.ops.lock().insert(op.operation_id.clone(), op.clone());
        Ok(op)
    }

    /// Applies `f` to a tracked operation, persists the result and wakes
    /// waiters. Terminal operations are immutable.
    pub fn mutate<F>(&self, operation_id: &str, f: F) -> Result<Operation>
    where
        F: FnOnce(&mut Operation) -> Result<()>,
    {
        let mut ops = self.ops.lock();
        let op = ops
            .get_mut(operation_id)
            .ok_or_else(|| Error::UnknownOperation(operation_id.to_string()))?;
        if op.status.is_terminal() {
            return Err(Error::InvalidArgument(format!("operation {operation_id} is finished")));
        }
        let mut next = op.clone();
        f(&mut next)?;
        self.store
            .records
            .put(Collection::Operations, operation_id, serde_json::to_value(&next)?)?;
        *op = next.clone();
        self.changed.notify_all();
        Ok(next)
    }

    pub fn get_operation(&self, operation_id: &str) -> Result<Operation> {
        if let Some(op) = self.ops.lock().get(operation_id) {
            return Ok(op.clone());
        }
        let rec = self
            .store
            .records
            .get(Collection::Operations, operation_id)
            .ok_or_else(|| Error::UnknownOperation(operation_id.to_string()))?;
        Ok(serde_json::from_value(rec.body)?)
    }

    /// Blocks until the operation is terminal or `timeout` passes, returning
    /// the latest snapshot either way.
    pub fn wait(&self, operation_id: &str, timeout: Duration) -> Result<Operation> {
        let deadline = Instant::now() + timeout;
        let mut ops = self.ops.lock();
        loop {
            let Some(op) = ops.get(operation_id) else {
                drop(ops);
                return self.get_operation(operation_id);
            };
            if op.status.is_terminal() {
                return Ok(op.clone());
            }
            if self.changed.wait_until(&mut ops, deadline).timed_out() {
                return Ok(ops[operation_id].clone());
            }
        }
    }

    pub fn submit_batch(
        &self,
        kind: OperationKind,
        scope: &Scope,
        items: Vec<BatchItem>,
        catalog: &dyn ScopeCatalog,
    ) -> Result<String> {
        if items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !catalog.scope_exists(scope) {
            return Err(Error::UnknownScope(scope.to_string()));
        }
        match &kind {
            OperationKind::Embedding => {}
            OperationKind::Extractor(name) if self.extractors.read().contains(name) => {}
            OperationKind::Extractor(name) => return Err(Error::UnknownExtractor(name.clone())),
            OperationKind::Crawl => {
                return Err(Error::InvalidArgument("crawls are not submitted as batches".into()))
            }
        }
        let op = self.create_operation(kind, scope.clone(), items.len())?;
        catalog.record_operation(scope, &op.operation_id)?;
        self.journal_items(&op, &items)?;
        self.queued.lock().insert(op.operation_id.clone(), items);
        self.bus.publish(
            TOPIC_EMBEDDINGS_REQUESTED,
            json!({"operation_id": op.operation_id, "scope": scope, "kind": op.kind}),
        )?;
        Ok(op.operation_id)
    }

    fn journal_items(&self, op: &Operation, items: &[BatchItem]) -> Result<()> {
        let mut journal = self.journal.lock();
        let Some(f) = journal.as_mut() else {
            return Ok(());
        };
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(
                &mut buf,
                &json!({"operation_id": op.operation_id, "kind": op.kind, "scope": op.scope, "item": item}),
            )?;
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
        Ok(())
    }

    fn execute(&self, operation_id: &str, items: &[BatchItem]) {
        if let Err(e) = self.try_execute(operation_id, items) {
            tracing::error!(operation_id, error = %e, "batch aborted");
            let _ = self.mutate(operation_id, |op| {
                op.error = Some(e.to_string());
                if op.status == OperationStatus::Pending {
                    op.transition(OperationStatus::Running)?;
                }
                op.transition(OperationStatus::Failed)
            });
        }
        if let Ok(op) = self.get_operation(operation_id) {
            let _ = self.bus.publish(
                TOPIC_EMBEDDINGS_COMPLETED,
                json!({
                    "operation_id": op.operation_id,
                    "scope": op.scope,
                    "status": op.status,
                    "records_added": op.records_added,
                }),
            );
        }
    }

    fn try_execute(&self, operation_id: &str, items: &[BatchItem]) -> Result<()> {
        let op = self.mutate(operation_id, |op| op.transition(OperationStatus::Running))?;
        let next = AtomicUsize::new(0);
        let produced: Mutex<Vec<EmbeddingRecord>> = Mutex::new(Vec::new());
        let failures: Mutex<Vec<(usize, ItemError)>> = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..self.workers.min(items.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(item) = items.get(i) else {
                        break;
                    };
                    let outcome = self.process(&op.kind, &op.scope, item);
                    let _ = self.mutate(operation_id, |o| {
                        match &outcome {
                            Ok(_) => o.items_done += 1,
                            Err(_) => o.items_failed += 1,
                        }
                        Ok(())
                    });
                    match outcome {
                        Ok(records) => produced.lock().extend(records),
                        Err(e) => failures.lock().push((
                            i,
                            ItemError {
                                item: item.label(),
                                code: e.code().to_string(),
                                message: e.to_string(),
                            },
                        )),
                    }
                });
            }
        });
        let records = produced.into_inner();
        let added = if records.is_empty() {
            0
        } else {
            self.index.add(&op.scope, records)?
        };
        let mut failures = failures.into_inner();
        failures.sort_by_key(|(i, _)| *i);
        self.mutate(operation_id, |o| {
            o.records_added = added;
            o.item_errors = failures.into_iter().map(|(_, e)| e).collect();
            if o.items_failed > 0 {
                o.error = Some(format!("{} of {} items failed", o.items_failed, o.items_total));
            }
            o.transition(o.outcome())
        })?;
        Ok(())
    }

    fn process(&self, kind: &OperationKind, scope: &Scope, item: &BatchItem) -> Result<Vec<EmbeddingRecord>> {
        match kind {
            OperationKind::Extractor(_) | OperationKind::Crawl => Ok(Vec::new()),
            OperationKind::Embedding => self.embed_item(scope, item),
        }
    }

    /// An item already present in the index is done without recomputation.
    fn embed_item(&self, scope: &Scope, item: &BatchItem) -> Result<Vec<EmbeddingRecord>> {
        let model = self.embedder.model_id().to_string();
        if self.index.contains(scope, &item.content_hash, item.segment, &model) {
            return Ok(Vec::new());
        }
        if is_remote(&item.uri) {
            return Err(Error::UnreadableMedia(item.uri.clone()));
        }
        let path = Path::new(item.uri.strip_prefix("file://").unwrap_or(&item.uri));
        let bytes = read_media_bytes(path)?;
        if content_hash(&bytes) != item.content_hash {
            return Err(Error::UnreadableMedia(format!("{}: content changed since it was catalogued", item.uri)));
        }
        let key = Segment::key(item.segment);
        let (segment, vector) = self
            .embedder
            .embed_media(path, item.caption.as_deref())?
            .into_iter()
            .find(|(seg, _)| Segment::key(*seg) == key)
            .ok_or_else(|| Error::UnknownSegment(item.label()))?;
        Ok(vec![EmbeddingRecord::new(
            scope.clone(),
            &item.content_hash,
            &item.uri,
            segment,
            vector,
            &model,
        )])
    }
}

/// Batch items for one media object: one per segment the embedder would
/// produce.
pub fn media_items(
    embedder: &dyn Embedder,
    content_hash: &str,
    uri: &str,
    caption: Option<&str>,
) -> Result<Vec<BatchItem>> {
    let path = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
    let segments = if is_remote(uri) { vec![None] } else { embedder.media_segments(path)? };
    Ok(segments
        .into_iter()
        .map(|segment| BatchItem {
            content_hash: content_hash.to_string(),
            uri: uri.to_string(),
            segment,
            caption: caption.map(str::to_string),
        })
        .collect())
}
