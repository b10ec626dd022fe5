//! Error taxonomy shared by every service in the crate.
//!
//! Each variant maps to a stable machine code (see [`Error::code`]) which the
//! HTTP layer surfaces unchanged.

use crate::annotations::AnnotationError;
use crate::query::QueryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("storage I/O failure: {0}")]
    StorageIo(String),
    #[error("revision conflict on {collection}/{id}: expected {expected}, found {found}")]
    Conflict {
        collection: String,
        id: String,
        expected: u64,
        found: u64,
    },
    #[error("refusing to store an empty blob")]
    EmptyBlob,
    #[error("unknown content hash {0}")]
    UnknownHash(String),
    #[error("reference underflow on {hash} for owner {owner}")]
    Underflow { hash: String, owner: String },

    #[error("a datasource named {0:?} already exists")]
    DuplicateName(String),
    #[error("gated access requires at least one role")]
    GatedWithoutRoles,
    #[error("location is not readable: {0}")]
    UnreadableLocation(String),
    #[error("media not found: {}", .0.join(", "))]
    MediaNotFound(Vec<String>),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("unknown datasource {0}")]
    UnknownDatasource(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("unknown version {version} of dataset {dataset_id}")]
    UnknownVersion { dataset_id: String, version: String },
    #[error("unknown segment {0}")]
    UnknownSegment(String),
    #[error("changeset is empty")]
    EmptyChangeset,
    #[error("media not present in parent version: {0}")]
    UnknownMedia(String),
    #[error("unknown annotation {0}")]
    UnknownAnnotation(String),
    #[error("invalid properties: {0}")]
    InvalidProperties(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scan incomplete, unreadable entries: {}", .unreadable.join(", "))]
    PartialScan { unreadable: Vec<String> },
    #[error("attribute file format error at line {line}: {message}")]
    FormatError { line: usize, message: String },
    #[error("attribute file has no {0:?} column")]
    MissingUriColumn(String),
    #[error("a crawl is already running for datasource {0}")]
    CrawlInProgress(String),

    #[error("query text is empty")]
    EmptyQuery,
    #[error("cannot read media {0}")]
    UnreadableMedia(String),
    #[error("no caption source for {0}")]
    MissingCaptionSource(String),
    #[error("vector has dimension {found}, index expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector norm {0} is not 1")]
    NotNormalized(f64),
    #[error("k must be at least 1")]
    BadK,
    #[error("unknown scope {0}")]
    UnknownScope(String),

    #[error("batch has no items")]
    EmptyBatch,
    #[error("unknown operation {0}")]
    UnknownOperation(String),
    #[error("unknown extractor {0}")]
    UnknownExtractor(String),

    #[error("no annotations to export for {0}")]
    NoAnnotations(String),

    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::StorageIo(_) => "STORAGE_IO",
            Error::Conflict { .. } => "CONFLICT",
            Error::EmptyBlob => "EMPTY_BLOB",
            Error::UnknownHash(_) => "UNKNOWN_HASH",
            Error::Underflow { .. } => "UNDERFLOW",
            Error::DuplicateName(_) => "DUPLICATE_NAME",
            Error::GatedWithoutRoles => "GATED_WITHOUT_ROLES",
            Error::UnreadableLocation(_) => "UNREADABLE_LOCATION",
            Error::MediaNotFound(_) => "MEDIA_NOT_FOUND",
            Error::AccessDenied(_) => "ACCESS_DENIED",
            Error::UnknownDatasource(_) => "UNKNOWN_DATASOURCE",
            Error::UnknownDataset(_) => "UNKNOWN_DATASET",
            Error::UnknownVersion { .. } => "UNKNOWN_VERSION",
            Error::UnknownSegment(_) => "UNKNOWN_SEGMENT",
            Error::EmptyChangeset => "EMPTY_CHANGESET",
            Error::UnknownMedia(_) => "UNKNOWN_MEDIA",
            Error::UnknownAnnotation(_) => "UNKNOWN_ANNOTATION",
            Error::InvalidProperties(_) => "INVALID_PROPERTIES",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::PartialScan { .. } => "PARTIAL_SCAN",
            Error::FormatError { .. } => "FORMAT_ERROR",
            Error::MissingUriColumn(_) => "MISSING_URI_COLUMN",
            Error::CrawlInProgress(_) => "CRAWL_IN_PROGRESS",
            Error::EmptyQuery => "EMPTY_QUERY",
            Error::UnreadableMedia(_) => "UNREADABLE_MEDIA",
            Error::MissingCaptionSource(_) => "MISSING_CAPTION_SOURCE",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::NotNormalized(_) => "NOT_NORMALIZED",
            Error::BadK => "BAD_K",
            Error::UnknownScope(_) => "UNKNOWN_SCOPE",
            Error::EmptyBatch => "EMPTY_BATCH",
            Error::UnknownOperation(_) => "UNKNOWN_OPERATION",
            Error::UnknownExtractor(_) => "UNKNOWN_EXTRACTOR",
            Error::NoAnnotations(_) => "NO_ANNOTATIONS",
            Error::Query(e) => e.code(),
            Error::Annotation(e) => e.code(),
        }
    }

    /// Structured details for API consumers, when the variant carries any.
    pub fn details(&self) -> Option<serde_json::Value> {
        use serde_json::json;
        match self {
            Error::MediaNotFound(uris) => Some(json!({ "missing": uris })),
            Error::PartialScan { unreadable } => Some(json!({ "unreadable": unreadable })),
            Error::FormatError { line, .. } => Some(json!({ "line": line })),
            Error::Query(QueryError::Parse {
                offset, expected, ..
            }) => Some(json!({ "offset": offset, "expected": expected })),
            Error::Query(QueryError::Type { field, .. }) => Some(json!({ "field": field })),
            Error::Annotation(e) => e.details(),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::StorageIo(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::StorageIo(format!("serialization: {e}"))
    }
}
