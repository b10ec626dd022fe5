//! Per-scope vector index with exact and LSH-pruned search.
//!
//! Each scope is an immutable snapshot behind an `Arc`; a write builds the
//! next snapshot, persists it, then swaps it in, so readers only ever see
//! whole batches. Rows are kept in canonical key order, which makes the
//! persisted files independent of insertion order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::lsh::Lsh;
use super::{check_vector, score, EmbeddingRecord, Scope, SearchHit, SearchMode, Segment};
use crate::config::AnnConfig;
use crate::error::{Error, Result};

/// One `records.jsonl` line; row order matches `vectors.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub id: String,
    pub scope: Scope,
    pub content_hash: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
    pub model_id: String,
}

type RowKey = (String, Option<(u64, u64)>, String);

impl RowMeta {
    fn key(&self) -> RowKey {
        (self.content_hash.clone(), Segment::key(self.segment), self.model_id.clone())
    }

    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let seg = |m: &RowMeta| m.segment.map(|s| (s.start_seconds, s.end_seconds));
        self.content_hash
            .cmp(&other.content_hash)
            .then_with(|| match (seg(self), seg(other)) {
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some(a), Some(b)) => a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)),
            })
            .then_with(|| self.model_id.cmp(&other.model_id))
    }
}

#[derive(Debug, Default)]
struct ScopeIndex {
    rows: Vec<RowMeta>,
    vectors: Vec<f32>,
    lsh: OnceLock<Lsh>,
}

pub struct VectorIndex {
    dir: PathBuf,
    dim: usize,
    ann: AnnConfig,
    scopes: RwLock<BTreeMap<Scope, Arc<ScopeIndex>>>,
    writers: Mutex<HashMap<Scope, Arc<Mutex<()>>>>,
}

impl VectorIndex {
    /// Opens (or creates) the index directory and loads every scope in it.
    pub fn open(dir: impl AsRef<Path>, dim: usize, ann: AnnConfig) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut scopes = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if !path.join("records.jsonl").is_file() {
                continue;
            }
            let idx = load_scope(&path, dim)?;
            if let Some(first) = idx.rows.first() {
                scopes.insert(first.scope.clone(), Arc::new(idx));
            }
        }
        Ok(Self {
            dir,
            dim,
            ann,
            scopes: RwLock::new(scopes),
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn scope_dir(&self, scope: &Scope) -> PathBuf {
        self.dir.join(scope.dir_name())
    }

    pub fn scopes(&self) -> Vec<Scope> {
        self.scopes.read().keys().cloned().collect()
    }

    pub fn len(&self, scope: &Scope) -> usize {
        self.snapshot(scope).map_or(0, |s| s.rows.len())
    }

    pub fn rows(&self, scope: &Scope) -> Vec<RowMeta> {
        self.snapshot(scope).map_or_else(Vec::new, |s| s.rows.clone())
    }

    pub fn contains(&self, scope: &Scope, content_hash: &str, segment: Option<Segment>, model_id: &str) -> bool {
        let key = (content_hash.to_string(), Segment::key(segment), model_id.to_string());
        self.snapshot(scope)
            .is_some_and(|s| s.rows.iter().any(|r| r.key() == key))
    }

    /// Vector stored for a record id in `scope`.
    pub fn vector(&self, scope: &Scope, record_id: &str) -> Option<Vec<f32>> {
        let snap = self.snapshot(scope)?;
        let row = snap.rows.iter().position(|r| r.id == record_id)?;
        Some(snap.vectors[row * self.dim..(row + 1) * self.dim].to_vec())
    }

    fn snapshot(&self, scope: &Scope) -> Option<Arc<ScopeIndex>> {
        self.scopes.read().get(scope).cloned()
    }

    /// Upserts `records` into `scope` on their (content_hash, segment,
    /// model_id) key. The batch is validated as a whole before anything is
    /// written. Returns the number of records accepted.
    pub fn add(&self, scope: &Scope, records: Vec<EmbeddingRecord>) -> Result<usize> {
        for r in &records {
            check_vector(&r.vector, self.dim)?;
        }
        if records.is_empty() {
            return Ok(0);
        }
        let writer = self.writers.lock().entry(scope.clone()).or_default().clone();
        let _guard = writer.lock();

        let mut merged: BTreeMap<RowKey, (RowMeta, Vec<f32>)> = BTreeMap::new();
        if let Some(current) = self.snapshot(scope) {
            for (row, meta) in current.rows.iter().enumerate() {
                let v = current.vectors[row * self.dim..(row + 1) * self.dim].to_vec();
                merged.insert(meta.key(), (meta.clone(), v));
            }
        }
        let count = records.len();
        for r in records {
            let meta = RowMeta {
                id: r.id,
                scope: scope.clone(),
                content_hash: r.content_hash,
                uri: r.uri,
                segment: r.segment,
                model_id: r.model_id,
            };
            merged.insert(meta.key(), (meta, r.vector));
        }
        let mut entries: Vec<(RowMeta, Vec<f32>)> = merged.into_values().collect();
        entries.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        let mut next = ScopeIndex::default();
        for (meta, v) in entries {
            next.rows.push(meta);
            next.vectors.extend_from_slice(&v);
        }
        persist_scope(&self.scope_dir(scope), &next)?;
        self.scopes.write().insert(scope.clone(), Arc::new(next));
        Ok(count)
    }

    /// Top-`k` hits for `query` within one scope. An unindexed scope yields
    /// no hits.
    pub fn knn(&self, scope: &Scope, query: &[f32], k: usize, mode: SearchMode) -> Result<Vec<SearchHit>> {
        self.knn_filtered(std::slice::from_ref(scope), query, k, mode, None)
    }

    /// Top-`k` over the union of `scopes`, keeping only rows accepted by
    /// `filter`. A (content_hash, segment, model_id) key present in several
    /// scopes is reported once, from the first scope listed.
    pub fn knn_filtered(
        &self,
        scopes: &[Scope],
        query: &[f32],
        k: usize,
        mode: SearchMode,
        filter: Option<&dyn Fn(&RowMeta) -> bool>,
    ) -> Result<Vec<SearchHit>> {
        if k < 1 {
            return Err(Error::BadK);
        }
        check_vector(query, self.dim)?;
        let snaps: Vec<Arc<ScopeIndex>> = scopes.iter().filter_map(|s| self.snapshot(s)).collect();
        let accept = |m: &RowMeta| filter.is_none_or(|f| f(m));

        if mode == SearchMode::Approx {
            let mut scored = Vec::new();
            for snap in &snaps {
                let lsh = snap
                    .lsh
                    .get_or_init(|| Lsh::build(&self.ann, self.dim, &snap.vectors));
                for row in lsh.candidates(query) {
                    let row = row as usize;
                    if accept(&snap.rows[row]) {
                        scored.push(self.scored(snap, row, query));
                    }
                }
            }
            let hits = rank(scored, k);
            if hits.len() >= k {
                return Ok(hits);
            }
        }
        let mut scored = Vec::new();
        for snap in &snaps {
            for row in 0..snap.rows.len() {
                if accept(&snap.rows[row]) {
                    scored.push(self.scored(snap, row, query));
                }
            }
        }
        Ok(rank(scored, k))
    }

    fn scored<'a>(&self, snap: &'a ScopeIndex, row: usize, query: &[f32]) -> (f64, &'a RowMeta) {
        let v = &snap.vectors[row * self.dim..(row + 1) * self.dim];
        (score(v, query), &snap.rows[row])
    }
}

fn rank(mut scored: Vec<(f64, &RowMeta)>, k: usize) -> Vec<SearchHit> {
    // Stable sort keeps scope-list order among equal keys for the dedup below.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.canonical_cmp(b.1)));
    let mut seen = HashSet::new();
    let mut hits = Vec::with_capacity(k);
    for (s, meta) in scored {
        if hits.len() == k {
            break;
        }
        if !seen.insert(meta.key()) {
            continue;
        }
        hits.push(SearchHit {
            rank: hits.len() + 1,
            score: s,
            uri: meta.uri.clone(),
            content_hash: meta.content_hash.clone(),
            segment: meta.segment,
            record_id: meta.id.clone(),
            model_id: meta.model_id.clone(),
            scope: meta.scope.clone(),
        });
    }
    hits
}

fn persist_scope(dir: &Path, idx: &ScopeIndex) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bin = Vec::with_capacity(idx.vectors.len() * 4);
    for x in &idx.vectors {
        bin.extend_from_slice(&x.to_le_bytes());
    }
    let mut jsonl = Vec::new();
    for r in &idx.rows {
        serde_json::to_writer(&mut jsonl, r)?;
        jsonl.push(b'\n');
    }
    // vectors first: a records file never describes rows that are missing
    write_atomic(&dir.join("vectors.bin"), &bin)?;
    write_atomic(&dir.join("records.jsonl"), &jsonl)?;
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_scope(dir: &Path, dim: usize) -> Result<ScopeIndex> {
    let text = std::fs::read_to_string(dir.join("records.jsonl"))?;
    let rows: Vec<RowMeta> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;
    let bin = std::fs::read(dir.join("vectors.bin"))?;
    // A crash between the two renames can leave a longer vectors file; the
    // leading rows still line up because rows are only ever rewritten whole.
    if bin.len() < rows.len() * dim * 4 {
        return Err(Error::StorageIo(format!(
            "{}: vectors.bin holds fewer than {} rows",
            dir.display(),
            rows.len()
        )));
    }
    let vectors = bin[..rows.len() * dim * 4]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(ScopeIndex {
        rows,
        vectors,
        lsh: OnceLock::new(),
    })
}
