//! Durable persistence for catalog documents and deduplicated media blobs.
//!
//! Layout under the store root:
//!
//! ```text
//! collections/<name>.jsonl   journal of {id, revision, body, ts}
//! blobs/<hh>/<hash>          raw bytes
//! blobs/refs.jsonl           reference journal
//! ```

mod blobs;
mod records;

use std::path::{Path, PathBuf};

pub use blobs::{content_hash, BlobEntry, BlobStore, Owner};
pub use records::{Collection, Record, RecordStore};

use crate::error::Result;

pub struct Store {
    root: PathBuf,
    pub records: RecordStore,
    pub blobs: BlobStore,
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            records: RecordStore::open(&root.join("collections"))?,
            blobs: BlobStore::open(&root.join("blobs"))?,
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
