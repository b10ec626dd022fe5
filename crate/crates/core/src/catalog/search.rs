//! Semantic search over a datasource or a dataset version.

use serde::Serialize;

use super::datasets::Members;
use super::model::{DataSource, Dataset, Principal};
use super::{check, Catalog};
use crate::error::{Error, Result};
use crate::vector::{RowMeta, Scope, SearchHit, SearchMode};

/// A scope resolved against the catalog and checked for access.
#[derive(Debug, Clone)]
pub enum SearchScope {
    Datasource(DataSource),
    Dataset(Dataset, String),
}

impl SearchScope {
    pub fn scope(&self) -> Scope {
        match self {
            SearchScope::Datasource(ds) => Scope::datasource(&ds.id),
            SearchScope::Dataset(ds, v) => Scope::dataset(&ds.id, v),
        }
    }

    /// Index scopes holding embeddings for this scope.
    pub(crate) fn sources(&self) -> Vec<Scope> {
        match self {
            SearchScope::Datasource(ds) => vec![Scope::datasource(&ds.id)],
            SearchScope::Dataset(ds, v) => ds.version(v).map(|v| v.embedding_sources.clone()).unwrap_or_default(),
        }
    }

    pub(crate) fn members(&self) -> Option<Members> {
        match self {
            SearchScope::Datasource(_) => None,
            SearchScope::Dataset(ds, v) => ds.version(v).map(Members::of),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub scope: Scope,
    pub query: String,
    pub mode: SearchMode,
    pub hits: Vec<SearchHit>,
}

impl Catalog {
    /// Resolves `ds:<id|name>`, `datasource:<id|name>` or
    /// `dataset:<id|name>[@<version>]`.
    pub fn resolve_scope(&self, principal: &Principal, text: &str) -> Result<SearchScope> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("ds:").or_else(|| text.strip_prefix("datasource:")) {
            let ds = self
                .get_datasource_unchecked(rest)
                .map_err(|_| Error::UnknownScope(text.to_string()))?;
            check(ds.allows(principal), principal, &format!("datasource {}", ds.id))?;
            return Ok(SearchScope::Datasource(ds));
        }
        if let Some(rest) = text.strip_prefix("dataset:") {
            let (name, version) = match rest.rsplit_once('@') {
                Some((n, v)) => (n, Some(v)),
                None => (rest, None),
            };
            let ds = self
                .get_dataset_unchecked(name)
                .map_err(|_| Error::UnknownScope(text.to_string()))?;
            check(ds.allows(principal), principal, &format!("dataset {}", ds.id))?;
            let version = match version {
                Some(v) if ds.version(v).is_some() => v.to_string(),
                Some(_) => return Err(Error::UnknownScope(text.to_string())),
                None => ds.latest().label.clone(),
            };
            return Ok(SearchScope::Dataset(ds, version));
        }
        Err(Error::UnknownScope(text.to_string()))
    }

    /// Top-`k` media segments for `query_text`. Dataset scopes search the
    /// embeddings their version inherits, restricted to the version's media.
    pub fn search(
        &self,
        principal: &Principal,
        scope: &str,
        query_text: &str,
        k: usize,
        mode: SearchMode,
    ) -> Result<SearchResult> {
        if query_text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        if k < 1 {
            return Err(Error::BadK);
        }
        let resolved = self.resolve_scope(principal, scope)?;
        let vector = self.embedder.embed_text(query_text)?;
        let members = resolved.members();
        let filter = members.as_ref().map(|m| move |row: &RowMeta| m.contains(row));
        let filter_ref = filter.as_ref().map(|f| f as &dyn Fn(&RowMeta) -> bool);
        let requested = resolved.scope();
        let mut hits = self.index.knn_filtered(&resolved.sources(), &vector, k, mode, filter_ref)?;
        for h in &mut hits {
            h.scope = requested.clone();
        }
        Ok(SearchResult {
            scope: requested,
            query: query_text.to_string(),
            mode,
            hits,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::super::model::DatasetSpec;
    use super::super::testkit::*;
    use super::super::Selection;
    use super::*;

    fn seeded() -> (Env, DataSource) {
        let env = env();
        for (n, c) in [
            ("truck.jpg", "red truck on highway"),
            ("car.jpg", "blue car in parking lot"),
            ("bike.jpg", "green bicycle near tree"),
            ("bus.jpg", "yellow school bus"),
        ] {
            env.write_image(n, n, Some(c));
        }
        let mut s = spec(&env, "demo");
        s.embeddings_enabled = true;
        let ds = env.catalog.create_datasource(&owner(), s).unwrap();
        env.catalog.wait_operation(&ds.operation_ids[1], Duration::from_secs(30)).unwrap();
        (env, ds)
    }

    #[test]
    fn caption_match_ranks_first() {
        let (env, _) = seeded();
        let r = env.catalog.search(&owner(), "ds:demo", "red truck", 3, SearchMode::Exact).unwrap();
        assert_eq!(r.hits.len(), 3);
        assert!(r.hits[0].uri.ends_with("truck.jpg"));
        assert_eq!(r.hits.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(
            env.catalog.search(&owner(), "ds:demo", "  ", 3, SearchMode::Exact).unwrap_err().code(),
            "EMPTY_QUERY"
        );
        assert_eq!(
            env.catalog.search(&owner(), "ds:nope", "x", 3, SearchMode::Exact).unwrap_err().code(),
            "UNKNOWN_SCOPE"
        );
    }

    #[test]
    fn dataset_from_hits_searches_only_its_media() {
        let (env, _) = seeded();
        let r = env.catalog.search(&owner(), "ds:demo", "red truck", 2, SearchMode::Exact).unwrap();
        let selection: Vec<Selection> = r.hits.iter().map(|h| Selection { record_id: h.record_id.clone() }).collect();
        let spec = DatasetSpec {
            name: "picked".into(),
            ..Default::default()
        };
        let ds = env
            .catalog
            .create_dataset_from_search(&owner(), spec, "ds:demo", "red truck", &selection)
            .unwrap();
        assert_eq!(ds.latest().media_refs.len(), 2);
        let again = env
            .catalog
            .search(&owner(), &format!("dataset:{}", ds.id), "yellow school bus", 10, SearchMode::Exact)
            .unwrap();
        assert_eq!(again.hits.len(), 2);
        assert!(again.hits.iter().all(|h| h.scope == Scope::dataset(&ds.id, "v1")));

        let bad = vec![Selection { record_id: "nope".into() }];
        let spec = DatasetSpec {
            name: "bad".into(),
            ..Default::default()
        };
        assert_eq!(
            env.catalog
                .create_dataset_from_search(&owner(), spec, "ds:demo", "x", &bad)
                .unwrap_err()
                .code(),
            "UNKNOWN_SEGMENT"
        );
    }
}
