//! Catalog documents as persisted in the metadata store.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::annotations::{AnnotationType, LabelSet};
use crate::media::MediaType;
use crate::vector::{Scope, Segment};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub user_id: String,
    pub roles: Vec<String>,
}

impl Principal {
    pub fn new(user_id: &str, roles: &[&str]) -> Self {
        let mut roles: Vec<String> = roles.iter().map(|r| r.to_string()).collect();
        roles.sort();
        roles.dedup();
        Self {
            user_id: user_id.to_string(),
            roles,
        }
    }

    fn shares_role(&self, roles: &[String]) -> bool {
        self.roles.iter().any(|r| roles.contains(r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StorageSystem {
    Cloud,
    #[default]
    OnPrem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AccessLevel {
    #[default]
    Unrestricted,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Visibility {
    #[default]
    Public,
    Restricted,
}

/// Caller-supplied fields of a new datasource.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSourceSpec {
    pub name: String,
    pub description: String,
    pub security_category_level: u32,
    pub namespace_id: String,
    pub collection_name: String,
    pub view: Option<String>,
    pub media_uri_field: Option<String>,
    pub storage_locations: Vec<String>,
    pub visualization_link: Option<String>,
    pub region: Vec<String>,
    pub data_owner: String,
    pub organization: String,
    pub storage_system: StorageSystem,
    pub access_level: AccessLevel,
    pub roles: Vec<String>,
    pub embeddings_enabled: bool,
    /// JSONL or CSV business attributes loaded after the first crawl.
    pub attributes_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub id: String,
    pub name: String,
    pub description: String,
    pub security_category_level: u32,
    pub namespace_id: String,
    pub collection_name: String,
    pub view: String,
    pub media_uri_field: String,
    pub storage_locations: Vec<String>,
    pub visualization_link: Option<String>,
    pub region: Vec<String>,
    pub data_owner: String,
    pub organization: String,
    pub storage_system: StorageSystem,
    pub access_level: AccessLevel,
    pub roles: Vec<String>,
    pub media_count: usize,
    pub embeddings_enabled: bool,
    pub attributes_file: Option<String>,
    pub operation_ids: Vec<String>,
    pub last_modified: DateTime<Utc>,
    pub create_date: DateTime<Utc>,
}

impl DataSource {
    pub fn allows(&self, p: &Principal) -> bool {
        self.access_level == AccessLevel::Unrestricted
            || p.user_id == self.data_owner
            || p.shares_role(&self.roles)
    }

    pub fn info(&self) -> DatasourceInfo {
        DatasourceInfo {
            datasource_id: self.id.clone(),
            name: self.name.clone(),
            data_owner: self.data_owner.clone(),
            roles: self.roles.clone(),
            access_level: self.access_level,
        }
    }
}

/// Snapshot of the parent datasource taken when a dataset is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasourceInfo {
    pub datasource_id: String,
    pub name: String,
    pub data_owner: String,
    pub roles: Vec<String>,
    pub access_level: AccessLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRef {
    pub content_hash: String,
    pub uri: String,
    pub media_type: MediaType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
}

impl MediaRef {
    pub(crate) fn key(&self) -> (String, String, Option<(u64, u64)>) {
        (self.content_hash.clone(), self.uri.clone(), Segment::key(self.segment))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    FileImport {
        format: String,
        source_name: String,
    },
    Query {
        query_used: String,
        datasource_id: String,
    },
    SearchSelection {
        query_text: String,
        source_scope: String,
    },
    Derived {
        #[serde(default)]
        operation_id: Option<String>,
        #[serde(default)]
        extractor_kind: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetVersion {
    pub label: String,
    pub created_at: DateTime<Utc>,
    pub parent: Option<String>,
    pub media_refs: Vec<MediaRef>,
    pub provenance: Provenance,
    pub applied_operations: Vec<String>,
    /// Index scopes whose embeddings serve this version, own scope first.
    pub embedding_sources: Vec<Scope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub creator_id: String,
    pub name: String,
    pub description: String,
    pub tags: Vec<String>,
    pub license: Option<String>,
    pub versions: Vec<DatasetVersion>,
    pub datasource: Option<DatasourceInfo>,
    pub visibility: Visibility,
    pub roles: Vec<String>,
    pub storage_system: StorageSystem,
    pub embeddings_enabled: bool,
    pub has_annotations: bool,
    /// Dataset version a search-derived dataset was selected from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<(String, String)>,
    pub create_date: DateTime<Utc>,
    pub last_modified: DateTime<Utc>,
}

impl Dataset {
    pub fn allows(&self, p: &Principal) -> bool {
        self.visibility == Visibility::Public
            || p.user_id == self.creator_id
            || self.datasource.as_ref().is_some_and(|d| d.data_owner == p.user_id)
            || p.shares_role(&self.roles)
    }

    pub fn version(&self, label: &str) -> Option<&DatasetVersion> {
        self.versions.iter().find(|v| v.label == label)
    }

    pub fn latest(&self) -> &DatasetVersion {
        self.versions.last().expect("datasets always have v1")
    }
}

/// Caller-supplied descriptive fields shared by all dataset creation paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub name: String,
    pub description: String,
    pub tags: Vec<String>,
    pub license: Option<String>,
    pub visibility: Option<Visibility>,
    pub roles: Vec<String>,
    pub storage_system: Option<StorageSystem>,
    pub embeddings_enabled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub dataset_id: String,
    pub version: String,
    pub name: String,
    pub is_default: bool,
    #[serde(rename = "type")]
    pub kind: AnnotationType,
    pub properties: Map<String, Value>,
    pub create_date: DateTime<Utc>,
    /// Parsed boxes captured at attach time, for file-backed types that
    /// carry image sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<LabelSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Changeset {
    pub add: Vec<MediaRef>,
    pub remove: Vec<MediaRef>,
    pub provenance: Option<Provenance>,
}
