//! Journaled document collections.
//!
//! Every collection is one append-only `<name>.jsonl` file. Each line is a
//! full `{id, revision, body, ts}` document; on open the journal is replayed and
//! the last line per id wins. A torn final line (crash mid-append) is dropped
//! and truncated away.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Collection {
    Datasources,
    Datasets,
    Annotations,
    ObjectTable,
    Attributes,
    EmbeddingsMeta,
    Operations,
}

impl Collection {
    pub const ALL: [Collection; 7] = [
        Collection::Datasources,
        Collection::Datasets,
        Collection::Annotations,
        Collection::ObjectTable,
        Collection::Attributes,
        Collection::EmbeddingsMeta,
        Collection::Operations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Collection::Datasources => "datasources",
            Collection::Datasets => "datasets",
            Collection::Annotations => "annotations",
            Collection::ObjectTable => "object_table",
            Collection::Attributes => "attributes",
            Collection::EmbeddingsMeta => "embeddings_meta",
            Collection::Operations => "operations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub revision: u64,
    pub body: Value,
    pub ts: DateTime<Utc>,
}

struct CollectionState {
    records: RwLock<BTreeMap<String, Record>>,
    journal: Mutex<File>,
}

pub struct RecordStore {
    dir: PathBuf,
    collections: HashMap<Collection, CollectionState>,
}

impl RecordStore {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut collections = HashMap::new();
        for c in Collection::ALL {
            let path = dir.join(format!("{}.jsonl", c.name()));
            let (records, file) = replay(&path)?;
            collections.insert(
                c,
                CollectionState {
                    records: RwLock::new(records),
                    journal: Mutex::new(file),
                },
            );
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            collections,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn state(&self, c: Collection) -> &CollectionState {
        &self.collections[&c]
    }

    /// Writes `body` under `id`, returning the new revision.
    pub fn put(&self, c: Collection, id: &str, body: Value) -> Result<u64> {
        self.write(c, id, body, None)
    }

    /// Optimistic write: succeeds only if the current revision equals
    /// `expected` (0 meaning "must not exist yet").
    pub fn put_if(&self, c: Collection, id: &str, body: Value, expected: u64) -> Result<u64> {
        self.write(c, id, body, Some(expected))
    }

    fn write(&self, c: Collection, id: &str, body: Value, expected: Option<u64>) -> Result<u64> {
        let state = self.state(c);
        let mut journal = state.journal.lock();
        let current = state.records.read().get(id).map_or(0, |r| r.revision);
        if let Some(expected) = expected {
            if expected != current {
                return Err(Error::Conflict {
                    collection: c.name().to_string(),
                    id: id.to_string(),
                    expected,
                    found: current,
                });
            }
        }
        self.append_locked(state, &mut journal, id, current + 1, body)
    }

    /// Atomic read-modify-write of one record. `f` sees the current record (if
    /// any) and returns the new body, or `None` to leave the record untouched.
    pub fn update<F>(&self, c: Collection, id: &str, f: F) -> Result<Option<u64>>
    where
        F: FnOnce(Option<&Record>) -> Result<Option<Value>>,
    {
        let state = self.state(c);
        let mut journal = state.journal.lock();
        let current = state.records.read().get(id).cloned();
        let next = current.as_ref().map_or(0, |r| r.revision) + 1;
        match f(current.as_ref())? {
            Some(body) => self
                .append_locked(state, &mut journal, id, next, body)
                .map(Some),
            None => Ok(None),
        }
    }

    fn append_locked(
        &self,
        state: &CollectionState,
        journal: &mut File,
        id: &str,
        revision: u64,
        body: Value,
    ) -> Result<u64> {
        if id.is_empty() {
            return Err(Error::InvalidArgument("record id must be non-empty".into()));
        }
        let record = Record {
            id: id.to_string(),
            revision,
            body,
            ts: Utc::now(),
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        journal.write_all(&line)?;
        journal.sync_data()?;
        state.records.write().insert(id.to_string(), record);
        Ok(revision)
    }

    pub fn get(&self, c: Collection, id: &str) -> Option<Record> {
        self.state(c).records.read().get(id).cloned()
    }

    pub fn list(&self, c: Collection) -> Vec<Record> {
        self.state(c).records.read().values().cloned().collect()
    }

    /// Records whose id starts with `prefix`, in id order.
    pub fn list_prefix(&self, c: Collection, prefix: &str) -> Vec<Record> {
        self.state(c)
            .records
            .read()
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn len(&self, c: Collection) -> usize {
        self.state(c).records.read().len()
    }

    pub fn is_empty(&self, c: Collection) -> bool {
        self.len(c) == 0
    }
}

fn replay(path: &Path) -> Result<(BTreeMap<String, Record>, File)> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)?;
    let mut records = BTreeMap::new();
    let mut good_len = 0u64;
    let mut torn = false;
    {
        let mut reader = BufReader::new(&file);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            if torn {
                return Err(Error::StorageIo(format!(
                    "{}: corrupt journal entry before offset {good_len}",
                    path.display()
                )));
            }
            let complete = buf.last() == Some(&b'\n');
            match serde_json::from_slice::<Record>(&buf) {
                Ok(rec) if complete => {
                    good_len += n as u64;
                    records.insert(rec.id.clone(), rec);
                }
                _ => torn = true,
            }
        }
    }
    if torn {
        tracing::warn!(path = %path.display(), offset = good_len, "dropping torn journal tail");
        file.set_len(good_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok((records, file))
}
