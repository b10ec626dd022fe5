//! Platform configuration, loaded from a TOML file with per-key defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub server: ServerConfig,
    pub store: StoreConfig,
    pub auth: AuthConfig,
    pub crawl: CrawlConfig,
    pub embed: EmbedConfig,
    pub video: VideoConfig,
    pub ann: AnnConfig,
    pub bus: BusConfig,
    pub jobs: JobsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { port: 8080 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub root: PathBuf,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("./metapix-data"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AuthConfig {
    pub tokens_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlConfig {
    pub interval_seconds: u64,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            interval_seconds: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dimension: usize,
    pub model_id: String,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dimension: 256,
            model_id: "stub-fnv1a-v1".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoConfig {
    pub window_seconds: f64,
    pub stride_seconds: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            window_seconds: 5.0,
            stride_seconds: 5.0,
        }
    }
}

/// Random-hyperplane LSH parameters for approximate search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnConfig {
    pub tables: usize,
    pub bits: usize,
    pub seed: u64,
    /// Buckets probed per table, nearest-margin perturbations first. `1`
    /// probes only the query's own bucket.
    pub probes: usize,
}

impl Default for AnnConfig {
    fn default() -> Self {
        Self {
            tables: 16,
            bits: 12,
            seed: 0x6d65_7461_7069_78,
            probes: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BusConfig {
    pub max_attempts: u32,
    pub ttl_seconds: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            ttl_seconds: 3600,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JobsConfig {
    pub workers: usize,
}

impl Default for JobsConfig {
    fn default() -> Self {
        Self { workers: 4 }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::StorageIo(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// A default configuration rooted at `root`.
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        Self {
            store: StoreConfig { root: root.into() },
            ..Self::default()
        }
    }
}
