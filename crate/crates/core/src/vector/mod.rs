//! Shared text/media embedding space and segment-level nearest-neighbour
//! retrieval.

mod embedder;
mod index;
mod lsh;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use embedder::{
    fnv1a64, l2_normalize, sidecar_path, tokenize, windows, Embedder, Frame, StubEmbedder,
    VideoManifest,
};
pub use index::{RowMeta, VectorIndex};
pub use lsh::{probe_sequence, Lsh};

use crate::error::{Error, Result};

/// Tolerance on `‖v‖₂ = 1` for indexed and query vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Where an embedding lives: a datasource, or one version of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    Datasource { id: String },
    Dataset { id: String, version: String },
}

impl Scope {
    pub fn datasource(id: &str) -> Self {
        Scope::Datasource { id: id.to_string() }
    }

    pub fn dataset(id: &str, version: &str) -> Self {
        Scope::Dataset {
            id: id.to_string(),
            version: version.to_string(),
        }
    }

    /// File-system-safe directory name.
    pub fn dir_name(&self) -> String {
        let raw = match self {
            Scope::Datasource { id } => format!("ds-{id}"),
            Scope::Dataset { id, version } => format!("dataset-{id}-{version}"),
        };
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect()
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Datasource { id } => write!(f, "ds:{id}"),
            Scope::Dataset { id, version } => write!(f, "dataset:{id}@{version}"),
        }
    }
}

/// Accepts `ds:<id>`, `datasource:<id>` and `dataset:<id>@<version>`.
impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownScope(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() {
            return Err(bad());
        }
        match kind {
            "ds" | "datasource" => Ok(Scope::datasource(rest)),
            "dataset" => match rest.rsplit_once('@') {
                Some((id, v)) if !id.is_empty() && !v.is_empty() => Ok(Scope::dataset(id, v)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Time slice of a video, `[start_seconds, end_seconds)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_seconds: f64,
    pub end_seconds: f64,
}

impl Segment {
    pub(crate) fn key(seg: Option<Segment>) -> Option<(u64, u64)> {
        seg.map(|s| (s.start_seconds.to_bits(), s.end_seconds.to_bits()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub scope: Scope,
    pub content_hash: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
    pub vector: Vec<f32>,
    pub model_id: String,
}

impl EmbeddingRecord {
    /// Builds a record whose id is derived from its unique key, so
    /// re-embedding the same item lands on the same id.
    pub fn new(
        scope: Scope,
        content_hash: &str,
        uri: &str,
        segment: Option<Segment>,
        vector: Vec<f32>,
        model_id: &str,
    ) -> Self {
        Self {
            id: record_id(&scope, content_hash, segment, model_id),
            scope,
            content_hash: content_hash.to_string(),
            uri: uri.to_string(),
            segment,
            vector,
            model_id: model_id.to_string(),
        }
    }
}

pub fn record_id(scope: &Scope, content_hash: &str, segment: Option<Segment>, model_id: &str) -> String {
    let seg = segment.map_or_else(String::new, |s| format!("{}-{}", s.start_seconds, s.end_seconds));
    let key = format!("{scope}|{content_hash}|{seg}|{model_id}");
    crate::store::content_hash(key.as_bytes())[..32].to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub score: f64,
    pub uri: String,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
    pub record_id: String,
    pub model_id: String,
    pub scope: Scope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SearchMode {
    Exact,
    #[default]
    Approx,
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EXACT" => Ok(SearchMode::Exact),
            "APPROX" => Ok(SearchMode::Approx),
            _ => Err(Error::InvalidArgument(format!("unknown search mode {s:?}"))),
        }
    }
}

/// Cosine of unit vectors, rounded to 6 decimal places.
pub fn score(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    (dot * 1e6).round() / 1e6
}

pub fn check_vector(v: &[f32], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_text_round_trip() {
        for s in [Scope::datasource("demo"), Scope::dataset("abc", "v2")] {
            assert_eq!(s.to_string().parse::<Scope>().unwrap(), s);
        }
        assert_eq!("datasource:x".parse::<Scope>().unwrap(), Scope::datasource("x"));
        for bad in ["", "ds:", "dataset:x", "foo:bar", "dataset:@v1"] {
            assert_eq!(bad.parse::<Scope>().unwrap_err().code(), "UNKNOWN_SCOPE", "{bad}");
        }
        assert_eq!(Scope::dataset("a/b", "v1").dir_name(), "dataset-a_b-v1");
    }

    #[test]
    fn record_ids_follow_key() {
        let s = Scope::datasource("d");
        let seg = Some(Segment {
            start_seconds: 0.0,
            end_seconds: 5.0,
        });
        assert_eq!(record_id(&s, "h", seg, "m"), record_id(&s, "h", seg, "m"));
        assert_ne!(record_id(&s, "h", seg, "m"), record_id(&s, "h", None, "m"));
        assert_ne!(record_id(&s, "h", None, "m"), record_id(&Scope::datasource("e"), "h", None, "m"));
    }

    #[test]
    fn vector_checks() {
        assert_eq!(check_vector(&[1.0, 0.0], 3).unwrap_err().code(), "DIMENSION_MISMATCH");
        assert_eq!(check_vector(&[0.5, 0.0], 2).unwrap_err().code(), "NOT_NORMALIZED");
        check_vector(&[0.6, 0.8], 2).unwrap();
    }
}
