//! Media typing and byte access shared by the crawler and dataset import.
//!
//! A video is a directory holding a `manifest.jsonl` of frames; its content
//! bytes are the manifest bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VIDEO_MANIFEST: &str = "manifest.jsonl";

const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "bmp"];
const VIDEO_EXTENSIONS: &[&str] = &["mp4", "avi", "mov", "mkv"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MediaType {
    Image,
    Video,
}

pub fn is_video_dir(path: &Path) -> bool {
    path.is_dir() && path.join(VIDEO_MANIFEST).is_file()
}

/// Classifies a path by extension allowlist, or as a frame-directory video.
pub fn infer_media_type(path: &Path) -> Option<MediaType> {
    if is_video_dir(path) {
        return Some(MediaType::Video);
    }
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
        Some(MediaType::Image)
    } else if VIDEO_EXTENSIONS.contains(&ext.as_str()) {
        Some(MediaType::Video)
    } else {
        None
    }
}

/// Bytes that identify a media object's content.
pub fn read_media_bytes(path: &Path) -> Result<Vec<u8>> {
    let target = if path.is_dir() {
        path.join(VIDEO_MANIFEST)
    } else {
        path.to_path_buf()
    };
    std::fs::read(&target).map_err(|_| Error::UnreadableMedia(path.display().to_string()))
}

/// Pluggable access to media by URI. Only local paths ship.
pub trait MediaFetcher: Send + Sync {
    fn can_fetch(&self, uri: &str) -> bool;
    fn read(&self, uri: &str) -> Result<Vec<u8>>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LocalFetcher;

impl MediaFetcher for LocalFetcher {
    fn can_fetch(&self, uri: &str) -> bool {
        !is_remote(uri)
    }

    fn read(&self, uri: &str) -> Result<Vec<u8>> {
        read_media_bytes(Path::new(uri.strip_prefix("file://").unwrap_or(uri)))
    }
}

pub fn is_remote(uri: &str) -> bool {
    uri.contains("://") && !uri.starts_with("file://")
}
