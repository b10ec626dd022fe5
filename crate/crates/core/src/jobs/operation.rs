//! Long-running operation records and their status machine.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Scope;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum OperationKind {
    Embedding,
    Extractor(String),
    Crawl,
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperationKind::Embedding => f.write_str("EMBEDDING"),
            OperationKind::Extractor(name) => write!(f, "EXTRACTOR({name})"),
            OperationKind::Crawl => f.write_str("CRAWL"),
        }
    }
}

impl FromStr for OperationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "EMBEDDING" => Ok(OperationKind::Embedding),
            "CRAWL" => Ok(OperationKind::Crawl),
            _ => s
                .strip_prefix("EXTRACTOR(")
                .and_then(|r| r.strip_suffix(')'))
                .filter(|n| !n.is_empty())
                .map(|n| OperationKind::Extractor(n.to_string()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown operation kind {s:?}"))),
        }
    }
}

impl From<OperationKind> for String {
    fn from(k: OperationKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for OperationKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperationStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
}

impl OperationStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, OperationStatus::Succeeded | OperationStatus::Failed)
    }

    pub fn can_become(self, next: OperationStatus) -> bool {
        use OperationStatus::*;
        matches!((self, next), (Pending, Running) | (Running, Succeeded) | (Running, Failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub item: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub operation_id: String,
    pub kind: OperationKind,
    pub scope: Scope,
    pub status: OperationStatus,
    pub items_total: usize,
    pub items_done: usize,
    pub items_failed: usize,
    /// Index records written by this operation.
    pub records_added: usize,
    pub item_errors: Vec<ItemError>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    pub created: DateTime<Utc>,
    pub started: Option<DateTime<Utc>>,
    pub finished: Option<DateTime<Utc>>,
}

impl Operation {
    pub fn new(kind: OperationKind, scope: Scope, items_total: usize) -> Self {
        Self {
            operation_id: format!("op-{}", uuid::Uuid::new_v4().simple()),
            kind,
            scope,
            status: OperationStatus::Pending,
            items_total,
            items_done: 0,
            items_failed: 0,
            records_added: 0,
            item_errors: Vec::new(),
            error: None,
            result: None,
            created: Utc::now(),
            started: None,
            finished: None,
        }
    }

    /// Applies a legal transition, stamping the matching timestamp.
    pub fn transition(&mut self, next: OperationStatus) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(Error::InvalidArgument(format!(
                "illegal operation transition {:?} -> {next:?}",
                self.status
            )));
        }
        self.status = next;
        match next {
            OperationStatus::Running => self.started = Some(Utc::now()),
            _ => self.finished = Some(Utc::now()),
        }
        Ok(())
    }

    /// Terminal status implied by the item counters.
    pub fn outcome(&self) -> OperationStatus {
        if self.items_failed == 0 && self.error.is_none() && self.items_done == self.items_total {
            OperationStatus::Succeeded
        } else {
            OperationStatus::Failed
        }
    }
}
