//! Core services for a data-centric media dataset platform: governed
//! datasources fed by a storage crawler, logical versioned datasets over a
//! deduplicating blob store, embedding search, a job pipeline and annotation
//! parsers.

pub mod annotations;
pub mod catalog;
pub mod config;
pub mod crawler;
pub mod error;
pub mod jobs;
pub mod media;
pub mod query;
pub mod store;
pub mod vector;

pub use config::Config;
pub use error::{Error, Result};
