//! Content-addressed blob storage with owner-based reference counting.
//!
//! Blobs live at `blobs/<hh>/<hash>`; reference changes are appended to
//! `blobs/refs.jsonl`. A blob's `ref_count` is the number of distinct owners
//! holding it. Zero-ref blobs stay on disk until [`BlobStore::collect_garbage`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Holder of a blob reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Owner {
    DatasetVersion { dataset_id: String, version: String },
    ObjectTable { datasource_id: String },
}

impl Owner {
    pub fn version(dataset_id: &str, version: &str) -> Self {
        Owner::DatasetVersion {
            dataset_id: dataset_id.to_string(),
            version: version.to_string(),
        }
    }

    pub fn object_table(datasource_id: &str) -> Self {
        Owner::ObjectTable {
            datasource_id: datasource_id.to_string(),
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::DatasetVersion {
                dataset_id,
                version,
            } => write!(f, "{dataset_id}@{version}"),
            Owner::ObjectTable { datasource_id } => write!(f, "object_table:{datasource_id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub content_hash: String,
    pub size_bytes: u64,
    pub ref_count: usize,
    pub stored_at: DateTime<Utc>,
}

#[derive(Debug)]
struct BlobState {
    size_bytes: u64,
    stored_at: DateTime<Utc>,
    owners: BTreeSet<Owner>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RefOp {
    Add,
    Release,
}

#[derive(Serialize, Deserialize)]
struct RefLine {
    op: RefOp,
    hash: String,
    owner: Owner,
    ts: DateTime<Utc>,
}

struct Inner {
    blobs: HashMap<String, BlobState>,
    journal: File,
}

pub struct BlobStore {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl BlobStore {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir.join("tmp"))?;
        let mut blobs = HashMap::new();
        for shard in std::fs::read_dir(dir)? {
            let shard = shard?;
            let name = shard.file_name().to_string_lossy().to_string();
            if name.len() != 2 || !shard.file_type()?.is_dir() {
                continue;
            }
            for entry in std::fs::read_dir(shard.path())? {
                let entry = entry?;
                let meta = entry.metadata()?;
                let stored_at = meta
                    .modified()
                    .map(DateTime::<Utc>::from)
                    .unwrap_or_else(|_| Utc::now());
                blobs.insert(
                    entry.file_name().to_string_lossy().to_string(),
                    BlobState {
                        size_bytes: meta.len(),
                        stored_at,
                        owners: BTreeSet::new(),
                    },
                );
            }
        }

        let journal_path = dir.join("refs.jsonl");
        if journal_path.exists() {
            let reader = BufReader::new(File::open(&journal_path)?);
            for line in reader.lines() {
                let line = line?;
                // a torn final append is the only way a line fails to parse
                let Ok(entry) = serde_json::from_str::<RefLine>(&line) else {
                    break;
                };
                if let Some(state) = blobs.get_mut(&entry.hash) {
                    match entry.op {
                        RefOp::Add => state.owners.insert(entry.owner),
                        RefOp::Release => state.owners.remove(&entry.owner),
                    };
                }
            }
        }
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inner: Mutex::new(Inner { blobs, journal }),
        })
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.dir.join(&hash[..2]).join(hash)
    }

    /// Stores `bytes` once per distinct content and returns its digest.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String> {
        if bytes.is_empty() {
            return Err(Error::EmptyBlob);
        }
        let hash = content_hash(bytes);
        let mut inner = self.inner.lock();
        if inner.blobs.contains_key(&hash) {
            return Ok(hash);
        }
        let tmp = self.dir.join("tmp").join(&hash);
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        let dest = self.blob_path(&hash);
        std::fs::create_dir_all(dest.parent().expect("sharded path"))?;
        std::fs::rename(&tmp, &dest)?;
        inner.blobs.insert(
            hash.clone(),
            BlobState {
                size_bytes: bytes.len() as u64,
                stored_at: Utc::now(),
                owners: BTreeSet::new(),
            },
        );
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>> {
        if !self.inner.lock().blobs.contains_key(hash) {
            return Err(Error::UnknownHash(hash.to_string()));
        }
        Ok(std::fs::read(self.blob_path(hash))?)
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.inner.lock().blobs.contains_key(hash)
    }

    /// Records that `owner` references `hash`. Re-adding by the same owner is a
    /// no-op.
    pub fn add_reference(&self, hash: &str, owner: &Owner) -> Result<usize> {
        let mut inner = self.inner.lock();
        let Inner { blobs, journal } = &mut *inner;
        let state = blobs
            .get_mut(hash)
            .ok_or_else(|| Error::UnknownHash(hash.to_string()))?;
        if !state.owners.contains(owner) {
            append_ref(journal, RefOp::Add, hash, owner)?;
            state.owners.insert(owner.clone());
        }
        Ok(state.owners.len())
    }

    /// Drops `owner`'s reference. Releasing a reference the owner does not
    /// hold is an underflow.
    pub fn release_reference(&self, hash: &str, owner: &Owner) -> Result<usize> {
        let mut inner = self.inner.lock();
        let Inner { blobs, journal } = &mut *inner;
        let state = blobs
            .get_mut(hash)
            .ok_or_else(|| Error::UnknownHash(hash.to_string()))?;
        if !state.owners.contains(owner) {
            return Err(Error::Underflow {
                hash: hash.to_string(),
                owner: owner.to_string(),
            });
        }
        append_ref(journal, RefOp::Release, hash, owner)?;
        state.owners.remove(owner);
        Ok(state.owners.len())
    }

    pub fn entry(&self, hash: &str) -> Option<BlobEntry> {
        self.inner.lock().blobs.get(hash).map(|s| to_entry(hash, s))
    }

    pub fn owners(&self, hash: &str) -> Vec<Owner> {
        self.inner
            .lock()
            .blobs
            .get(hash)
            .map(|s| s.owners.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// All entries sorted by hash.
    pub fn entries(&self) -> Vec<BlobEntry> {
        let inner = self.inner.lock();
        let mut out: Vec<_> = inner.blobs.iter().map(|(h, s)| to_entry(h, s)).collect();
        out.sort_by(|a, b| a.content_hash.cmp(&b.content_hash));
        out
    }

    pub fn blob_count(&self) -> usize {
        self.inner.lock().blobs.len()
    }

    pub fn total_references(&self) -> usize {
        self.inner.lock().blobs.values().map(|s| s.owners.len()).sum()
    }

    /// Re-hashes every stored blob; returns hashes whose bytes no longer match.
    pub fn verify(&self) -> Result<Vec<String>> {
        let hashes: Vec<String> = self.inner.lock().blobs.keys().cloned().collect();
        let mut bad = Vec::new();
        for hash in hashes {
            let bytes = std::fs::read(self.blob_path(&hash))?;
            if content_hash(&bytes) != hash {
                bad.push(hash);
            }
        }
        bad.sort();
        Ok(bad)
    }

    /// Deletes every blob with no live references. Never runs implicitly.
    pub fn collect_garbage(&self) -> Result<Vec<String>> {
        let mut inner = self.inner.lock();
        let dead: Vec<String> = inner
            .blobs
            .iter()
            .filter(|(_, s)| s.owners.is_empty())
            .map(|(h, _)| h.clone())
            .collect();
        for hash in &dead {
            std::fs::remove_file(self.blob_path(hash))?;
            inner.blobs.remove(hash);
        }
        let mut dead = dead;
        dead.sort();
        Ok(dead)
    }
}

fn to_entry(hash: &str, s: &BlobState) -> BlobEntry {
    BlobEntry {
        content_hash: hash.to_string(),
        size_bytes: s.size_bytes,
        ref_count: s.owners.len(),
        stored_at: s.stored_at,
    }
}

fn append_ref(journal: &mut File, op: RefOp, hash: &str, owner: &Owner) -> Result<()> {
    let line = RefLine {
        op,
        hash: hash.to_string(),
        owner: owner.clone(),
        ts: Utc::now(),
    };
    let mut bytes = serde_json::to_vec(&line)?;
    bytes.push(b'\n');
    journal.write_all(&bytes)?;
    journal.sync_data()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open() -> (tempfile::TempDir, BlobStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = BlobStore::open(&dir.path().join("blobs")).unwrap();
        (dir, store)
    }

    #[test]
    fn identical_bytes_stored_once() {
        let (_d, store) = open();
        let a = store.put_blob(b"hello").unwrap();
        let b = store.put_blob(b"hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(store.blob_count(), 1);
        assert_eq!(store.entry(&a).unwrap().ref_count, 0);
        assert_eq!(store.get_blob(&a).unwrap(), b"hello");
    }

    #[test]
    fn one_byte_difference_gives_distinct_hashes() {
        let (_d, store) = open();
        let a = store.put_blob(b"hello").unwrap();
        let b = store.put_blob(b"hellp").unwrap();
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(store.blob_count(), 2);
    }

    #[test]
    fn empty_blob_rejected() {
        let (_d, store) = open();
        assert_eq!(store.put_blob(b"").unwrap_err().code(), "EMPTY_BLOB");
    }

    #[test]
    fn reference_counting_by_owner() {
        let (_d, store) = open();
        let h = store.put_blob(b"x").unwrap();
        let a = Owner::version("ds1", "v1");
        let b = Owner::version("ds2", "v1");
        assert_eq!(store.add_reference(&h, &a).unwrap(), 1);
        assert_eq!(store.add_reference(&h, &a).unwrap(), 1);
        assert_eq!(store.add_reference(&h, &b).unwrap(), 2);
        assert_eq!(store.release_reference(&h, &b).unwrap(), 1);
        assert_eq!(store.release_reference(&h, &a).unwrap(), 0);
        assert_eq!(store.release_reference(&h, &a).unwrap_err().code(), "UNDERFLOW");
        assert_eq!(
            store.add_reference(&"0".repeat(64), &a).unwrap_err().code(),
            "UNKNOWN_HASH"
        );
    }

    #[test]
    fn gc_is_explicit_and_only_removes_unreferenced() {
        let (_d, store) = open();
        let keep = store.put_blob(b"keep").unwrap();
        let drop_me = store.put_blob(b"drop").unwrap();
        let owner = Owner::object_table("src");
        store.add_reference(&keep, &owner).unwrap();
        store.add_reference(&drop_me, &owner).unwrap();
        store.release_reference(&drop_me, &owner).unwrap();
        // release alone never deletes
        assert!(store.contains(&drop_me));
        assert_eq!(store.collect_garbage().unwrap(), vec![drop_me.clone()]);
        assert!(!store.contains(&drop_me));
        assert!(store.contains(&keep));
    }

    #[test]
    fn references_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs");
        let h;
        {
            let store = BlobStore::open(&path).unwrap();
            h = store.put_blob(b"persist").unwrap();
            store.add_reference(&h, &Owner::version("d", "v1")).unwrap();
            store.add_reference(&h, &Owner::version("d", "v2")).unwrap();
            store.release_reference(&h, &Owner::version("d", "v1")).unwrap();
        }
        let store = BlobStore::open(&path).unwrap();
        assert_eq!(store.entry(&h).unwrap().ref_count, 1);
        assert_eq!(store.owners(&h), vec![Owner::version("d", "v2")]);
        assert!(store.verify().unwrap().is_empty());
    }

    #[test]
    fn verify_detects_tampering() {
        let (dir, store) = open();
        let h = store.put_blob(b"original").unwrap();
        std::fs::write(dir.path().join("blobs").join(&h[..2]).join(&h), b"tampered").unwrap();
        assert_eq!(store.verify().unwrap(), vec![h]);
    }
}
