//! Storage crawler: keeps a per-datasource object table of media with
//! per-uri generation ids, loads business attributes, and joins both into
//! the queryable extended-attribute view.
//!
//! Object-table and attribute records are keyed `<datasource_id>:<uri>`.
//! Every object-table change is also appended to
//! `<root>/crawl/<datasource_id>/history.jsonl`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::media::{infer_media_type, is_remote, read_media_bytes, MediaType};
use crate::query::{KeyedRow, Row};
use crate::store::{content_hash, Collection, Owner, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaObjectRecord {
    pub datasource_id: String,
    pub uri: String,
    pub generation_id: u64,
    pub content_hash: String,
    pub size_bytes: u64,
    pub modified_time: DateTime<Utc>,
    pub media_type: MediaType,
    pub deleted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Change {
    Added,
    Modified,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub uri: String,
    pub generation_id: u64,
    pub content_hash: String,
    pub change: Change,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub added: usize,
    pub modified: usize,
    pub deleted: usize,
    /// Rows that were added or modified by this scan.
    #[serde(skip)]
    pub changed: Vec<MediaObjectRecord>,
}

impl ScanReport {
    pub fn merge(&mut self, other: ScanReport) {
        self.added += other.added;
        self.modified += other.modified;
        self.deleted += other.deleted;
        self.changed.extend(other.changed);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub loaded: usize,
    pub unmatched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AttributeRecord {
    datasource_id: String,
    uri: String,
    generation_id: u64,
    attributes: Map<String, Value>,
}

/// One row of the extended-attribute view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRow {
    pub generation_id: u64,
    pub media_uri: String,
    pub content_hash: String,
    pub media_type: MediaType,
    pub size_bytes: u64,
    pub attributes: Map<String, Value>,
    /// Query columns: `content_hash`, `media_type`, `generation_id`, the
    /// attributes, and the datasource's media-uri field.
    #[serde(skip)]
    columns: Map<String, Value>,
}

impl ViewRow {
    fn new(obj: &MediaObjectRecord, attributes: Map<String, Value>, uri_field: &str) -> Self {
        let mut columns = Map::new();
        columns.insert("content_hash".into(), Value::from(obj.content_hash.clone()));
        columns.insert("generation_id".into(), Value::from(obj.generation_id));
        columns.insert("media_type".into(), serde_json::to_value(obj.media_type).unwrap_or(Value::Null));
        columns.insert("size_bytes".into(), Value::from(obj.size_bytes));
        for (k, v) in &attributes {
            columns.insert(k.clone(), v.clone());
        }
        columns.insert(uri_field.to_string(), Value::from(obj.uri.clone()));
        Self {
            generation_id: obj.generation_id,
            media_uri: obj.uri.clone(),
            content_hash: obj.content_hash.clone(),
            media_type: obj.media_type,
            size_bytes: obj.size_bytes,
            attributes,
            columns,
        }
    }

    pub fn caption(&self) -> Option<&str> {
        self.attributes.get("caption").and_then(Value::as_str)
    }
}

impl Row for ViewRow {
    fn get(&self, field: &str) -> Option<&Value> {
        self.columns.get(field)
    }
}

impl KeyedRow for ViewRow {
    fn uri(&self) -> &str {
        &self.media_uri
    }

    fn generation_id(&self) -> u64 {
        self.generation_id
    }
}

/// Held for the duration of one crawl of a datasource.
pub struct CrawlLease {
    active: Arc<Mutex<HashSet<String>>>,
    datasource_id: String,
}

impl Drop for CrawlLease {
    fn drop(&mut self) {
        self.active.lock().remove(&self.datasource_id);
    }
}

pub struct Crawler {
    store: Arc<Store>,
    active: Arc<Mutex<HashSet<String>>>,
}

fn row_id(datasource_id: &str, uri: &str) -> String {
    format!("{datasource_id}:{uri}")
}

impl Crawler {
    pub fn new(store: Arc<Store>) -> Self {
        Self {
            store,
            active: Arc::new(Mutex::new(HashSet::new())),
        }
    }

    /// Exclusive crawl right for `datasource_id`.
    pub fn lease(&self, datasource_id: &str) -> Result<CrawlLease> {
        if !self.active.lock().insert(datasource_id.to_string()) {
            return Err(Error::CrawlInProgress(datasource_id.to_string()));
        }
        Ok(CrawlLease {
            active: self.active.clone(),
            datasource_id: datasource_id.to_string(),
        })
    }

    pub fn history_path(&self, datasource_id: &str) -> PathBuf {
        self.store
            .root()
            .join("crawl")
            .join(sanitize(datasource_id))
            .join("history.jsonl")
    }

    pub fn history(&self, datasource_id: &str) -> Result<Vec<HistoryEntry>> {
        let text = match std::fs::read_to_string(self.history_path(datasource_id)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }

    fn append_history(&self, datasource_id: &str, entries: &[HistoryEntry]) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let path = self.history_path(datasource_id);
        std::fs::create_dir_all(path.parent().expect("history path has a parent"))?;
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        f.write_all(&buf)?;
        f.sync_data()?;
        Ok(())
    }

    /// All object-table rows of a datasource, including deleted ones.
    pub fn objects(&self, datasource_id: &str) -> Vec<MediaObjectRecord> {
        self.store
            .records
            .list_prefix(Collection::ObjectTable, &format!("{datasource_id}:"))
            .into_iter()
            .filter_map(|r| serde_json::from_value(r.body).ok())
            .collect()
    }

    pub fn live_objects(&self, datasource_id: &str) -> Vec<MediaObjectRecord> {
        self.objects(datasource_id).into_iter().filter(|o| !o.deleted).collect()
    }

    /// Synchronizes the object table with one storage location. Readable
    /// entries are applied even when others fail, in which case the result
    /// is `PARTIAL_SCAN` and rows under the unreadable paths are left as
    /// they were.
    pub fn scan_location(&self, datasource_id: &str, location: &str) -> Result<ScanReport> {
        if is_remote(location) {
            return Err(Error::UnreadableLocation(format!("{location}: no fetcher for remote locations")));
        }
        let root = canonical_location(location)?;
        let mut found = BTreeMap::new();
        let mut unreadable = Vec::new();
        walk(&root, &mut found, &mut unreadable);

        let owner = Owner::object_table(datasource_id);
        let existing: BTreeMap<String, MediaObjectRecord> = self
            .objects(datasource_id)
            .into_iter()
            .map(|o| (o.uri.clone(), o))
            .collect();
        let mut report = ScanReport::default();
        let mut history = Vec::new();
        let mut released = Vec::new();
        let now = Utc::now();

        for (uri, (path, media_type)) in &found {
            let bytes = match read_media_bytes(path) {
                Ok(b) if !b.is_empty() => b,
                Ok(_) => continue,
                Err(_) => {
                    unreadable.push(uri.clone());
                    continue;
                }
            };
            let hash = content_hash(&bytes);
            let prev = existing.get(uri);
            let (generation_id, change) = match prev {
                Some(p) if !p.deleted && p.content_hash == hash => continue,
                Some(p) if !p.deleted => (p.generation_id + 1, Change::Modified),
                Some(p) => (p.generation_id + 1, Change::Added),
                None => (1, Change::Added),
            };
            self.store.blobs.put_blob(&bytes)?;
            self.store.blobs.add_reference(&hash, &owner)?;
            if let Some(p) = prev.filter(|p| !p.deleted) {
                released.push(p.content_hash.clone());
            }
            let modified_time = std::fs::metadata(path)
                .and_then(|m| m.modified())
                .map(DateTime::<Utc>::from)
                .unwrap_or(now);
            let rec = MediaObjectRecord {
                datasource_id: datasource_id.to_string(),
                uri: uri.clone(),
                generation_id,
                content_hash: hash.clone(),
                size_bytes: bytes.len() as u64,
                modified_time,
                media_type: *media_type,
                deleted: false,
            };
            self.store
                .records
                .put(Collection::ObjectTable, &row_id(datasource_id, uri), serde_json::to_value(&rec)?)?;
            history.push(HistoryEntry {
                uri: uri.clone(),
                generation_id,
                content_hash: hash,
                change,
                at: now,
            });
            match change {
                Change::Added => report.added += 1,
                _ => report.modified += 1,
            }
            report.changed.push(rec);
        }

        let root_prefix = format!("{}/", root.to_string_lossy().trim_end_matches('/'));
        for (uri, prev) in &existing {
            let under_root = uri.starts_with(&root_prefix);
            let shadowed = unreadable.iter().any(|u| uri == u || uri.starts_with(&format!("{u}/")));
            if prev.deleted || !under_root || shadowed || found.contains_key(uri) {
                continue;
            }
            let mut rec = prev.clone();
            rec.deleted = true;
            self.store
                .records
                .put(Collection::ObjectTable, &row_id(datasource_id, uri), serde_json::to_value(&rec)?)?;
            released.push(prev.content_hash.clone());
            history.push(HistoryEntry {
                uri: uri.clone(),
                generation_id: prev.generation_id,
                content_hash: prev.content_hash.clone(),
                change: Change::Deleted,
                at: now,
            });
            report.deleted += 1;
        }

        // A hash stays referenced while any live row of the datasource uses it.
        let live: HashSet<String> = self
            .live_objects(datasource_id)
            .into_iter()
            .map(|o| o.content_hash)
            .collect();
        let released: BTreeSet<String> = released.into_iter().filter(|h| !live.contains(h)).collect();
        for hash in released {
            if self.store.blobs.owners(&hash).contains(&owner) {
                self.store.blobs.release_reference(&hash, &owner)?;
            }
        }
        self.append_history(datasource_id, &history)?;

        if unreadable.is_empty() {
            Ok(report)
        } else {
            unreadable.sort();
            Err(Error::PartialScan { unreadable })
        }
    }

    /// Loads a JSONL or CSV attribute file (CSV when the extension is
    /// `.csv`). Rows are matched to live objects by the `uri_field` value,
    /// with relative values resolved against `locations`; matched rows are
    /// stamped with the object's current generation.
    pub fn load_attributes(
        &self,
        datasource_id: &str,
        uri_field: &str,
        file: &Path,
        locations: &[String],
    ) -> Result<AttributeReport> {
        let text = std::fs::read_to_string(file)
            .map_err(|e| Error::UnreadableLocation(format!("{}: {e}", file.display())))?;
        let is_csv = file
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let rows = if is_csv {
            parse_csv_attributes(&text, uri_field)?
        } else {
            parse_jsonl_attributes(&text, uri_field)?
        };
        let live: BTreeMap<String, MediaObjectRecord> = self
            .live_objects(datasource_id)
            .into_iter()
            .map(|o| (o.uri.clone(), o))
            .collect();
        let roots: Vec<PathBuf> = locations
            .iter()
            .filter(|l| !is_remote(l))
            .filter_map(|l| canonical_location(l).ok())
            .collect();
        let mut report = AttributeReport::default();
        for (raw_uri, attributes) in rows {
            let Some(obj) = resolve_against(&raw_uri, &roots).and_then(|u| live.get(&u)) else {
                report.unmatched.push(raw_uri);
                continue;
            };
            let rec = AttributeRecord {
                datasource_id: datasource_id.to_string(),
                uri: obj.uri.clone(),
                generation_id: obj.generation_id,
                attributes,
            };
            self.store.records.put(
                Collection::Attributes,
                &row_id(datasource_id, &obj.uri),
                serde_json::to_value(&rec)?,
            )?;
            report.loaded += 1;
        }
        Ok(report)
    }

    /// Live objects left-joined with attributes of the same generation, in
    /// (uri, generation_id) order.
    pub fn build_view(&self, datasource_id: &str, uri_field: &str) -> Vec<ViewRow> {
        let attributes: BTreeMap<String, AttributeRecord> = self
            .store
            .records
            .list_prefix(Collection::Attributes, &format!("{datasource_id}:"))
            .into_iter()
            .filter_map(|r| serde_json::from_value::<AttributeRecord>(r.body).ok())
            .map(|a| (a.uri.clone(), a))
            .collect();
        let mut rows: Vec<ViewRow> = self
            .live_objects(datasource_id)
            .iter()
            .map(|obj| {
                let attrs = attributes
                    .get(&obj.uri)
                    .filter(|a| a.generation_id == obj.generation_id)
                    .map(|a| a.attributes.clone())
                    .unwrap_or_default();
                ViewRow::new(obj, attrs, uri_field)
            })
            .collect();
        rows.sort_by(|a, b| a.media_uri.cmp(&b.media_uri).then(a.generation_id.cmp(&b.generation_id)));
        rows
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn canonical_location(location: &str) -> Result<PathBuf> {
    let path = Path::new(location.strip_prefix("file://").unwrap_or(location));
    let canon = path
        .canonicalize()
        .map_err(|e| Error::UnreadableLocation(format!("{location}: {e}")))?;
    if !canon.is_dir() {
        return Err(Error::UnreadableLocation(format!("{location}: not a directory")));
    }
    std::fs::read_dir(&canon).map_err(|e| Error::UnreadableLocation(format!("{location}: {e}")))?;
    Ok(canon)
}

/// Collects media under `dir`; frame directories count as one video and are
/// not descended into.
fn walk(dir: &Path, found: &mut BTreeMap<String, (PathBuf, MediaType)>, unreadable: &mut Vec<String>) {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => {
            unreadable.push(dir.to_string_lossy().into_owned());
            return;
        }
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        match infer_media_type(&path) {
            Some(t) => {
                found.insert(path.to_string_lossy().into_owned(), (path, t));
            }
            None if path.is_dir() => walk(&path, found, unreadable),
            None => {}
        }
    }
}

fn resolve_against(raw: &str, roots: &[PathBuf]) -> Option<String> {
    let raw = raw.strip_prefix("file://").unwrap_or(raw);
    let p = Path::new(raw);
    if p.is_absolute() {
        return Some(p.canonicalize().unwrap_or_else(|_| p.to_path_buf()).to_string_lossy().into_owned());
    }
    roots
        .iter()
        .map(|r| r.join(p))
        .find(|c| c.exists())
        .map(|c| c.canonicalize().unwrap_or(c).to_string_lossy().into_owned())
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn parse_jsonl_attributes(text: &str, uri_field: &str) -> Result<Vec<(String, Map<String, Value>)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| Error::FormatError { line, message };
        let Value::Object(mut obj) = serde_json::from_str(raw).map_err(|e| fmt(e.to_string()))? else {
            return Err(fmt("expected a JSON object".into()));
        };
        let uri = match obj.remove(uri_field) {
            Some(Value::String(s)) if !s.is_empty() => s,
            Some(_) => return Err(fmt(format!("{uri_field:?} must be a non-empty string"))),
            None => return Err(Error::MissingUriColumn(uri_field.to_string())),
        };
        if let Some((k, _)) = obj.iter().find(|(_, v)| !is_scalar(v)) {
            return Err(fmt(format!("attribute {k:?} is not a scalar")));
        }
        out.push((uri, obj));
    }
    Ok(out)
}

/// Cells become numbers, then booleans, then strings; empty cells are
/// omitted.
fn parse_csv_attributes(text: &str, uri_field: &str) -> Result<Vec<(String, Map<String, Value>)>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::FormatError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let uri_col = headers
        .iter()
        .position(|h| h == uri_field)
        .ok_or_else(|| Error::MissingUriColumn(uri_field.to_string()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::FormatError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let uri = record.get(uri_col).unwrap_or("").to_string();
        if uri.is_empty() {
            return Err(Error::FormatError {
                line,
                message: format!("empty {uri_field:?}"),
            });
        }
        let mut attrs = Map::new();
        for (i, (h, cell)) in headers.iter().zip(record.iter()).enumerate() {
            if i == uri_col || cell.is_empty() {
                continue;
            }
            attrs.insert(h.to_string(), infer_scalar(cell));
        }
        out.push((uri, attrs));
    }
    Ok(out)
}

fn infer_scalar(cell: &str) -> Value {
    if let Ok(n) = cell.parse::<i64>() {
        return Value::from(n);
    }
    if let Some(n) = cell.parse::<f64>().ok().filter(|n| n.is_finite()) {
        return Value::from(n);
    }
    match cell {
        "true" | "TRUE" | "True" => Value::Bool(true),
        "false" | "FALSE" | "False" => Value::Bool(false),
        _ => Value::from(cell),
    }
}
