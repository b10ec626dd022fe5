//! Text/media embedders sharing one vector space.
//!
//! [`StubEmbedder`] is a deterministic token-hash model: text and media
//! captions land in the same space, so related captions and queries score
//! high without model weights.

use std::path::Path;

use serde::Deserialize;

use super::Segment;
use crate::error::{Error, Result};
use crate::media::{is_video_dir, VIDEO_MANIFEST};

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f32>>;
    /// One entry per image, or one per time window for a video. `caption` is
    /// the fallback caption source when the media has no sidecar.
    fn embed_media(&self, path: &Path, caption: Option<&str>) -> Result<Vec<(Option<Segment>, Vec<f32>)>>;
    /// Segments `embed_media` would produce, without embedding.
    fn media_segments(&self, path: &Path) -> Result<Vec<Option<Segment>>>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn l2_normalize(v: &[f64]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| (x / norm) as f32).collect())
}

#[derive(Debug, Clone)]
pub struct StubEmbedder {
    model_id: String,
    dimension: usize,
    window_seconds: f64,
    stride_seconds: f64,
}

#[derive(Deserialize)]
struct FrameLine {
    t: Option<f64>,
    #[allow(dead_code)]
    frame: Option<String>,
    caption: Option<String>,
    duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoManifest {
    pub frames: Vec<Frame>,
    pub duration: f64,
}

impl VideoManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(VIDEO_MANIFEST))
            .map_err(|_| Error::UnreadableMedia(dir.display().to_string()))?;
        Self::parse(&text).map_err(|m| Error::UnreadableMedia(format!("{}: {m}", dir.display())))
    }

    /// Lines are `{"t", "frame", "caption"}`; an optional `{"duration"}` line
    /// fixes the clip length, otherwise it is the last frame time plus the
    /// last frame spacing (1 s for a single frame).
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut frames = Vec::new();
        let mut duration = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: FrameLine =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if let Some(d) = f.duration {
                duration = Some(d);
            }
            if let Some(t) = f.t {
                if !t.is_finite() || t < 0.0 {
                    return Err(format!("line {}: bad frame time {t}", i + 1));
                }
                frames.push(Frame { t, caption: f.caption });
            }
        }
        frames.sort_by(|a, b| a.t.total_cmp(&b.t));
        let duration = duration.unwrap_or_else(|| match frames.as_slice() {
            [] => 0.0,
            [only] => only.t + 1.0,
            [.., prev, last] => last.t + (last.t - prev.t).max(f64::EPSILON),
        });
        Ok(Self { frames, duration })
    }
}

/// Windows `[start, min(start + window, duration))` every `stride` seconds.
pub fn windows(duration: f64, window: f64, stride: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    if window <= 0.0 || stride <= 0.0 {
        return out;
    }
    let mut i = 0u32;
    loop {
        let start = f64::from(i) * stride;
        if start >= duration {
            break;
        }
        out.push(Segment {
            start_seconds: start,
            end_seconds: (start + window).min(duration),
        });
        i += 1;
    }
    out
}

impl StubEmbedder {
    pub fn new(model_id: impl Into<String>, dimension: usize, window_seconds: f64, stride_seconds: f64) -> Self {
        Self {
            model_id: model_id.into(),
            dimension,
            window_seconds,
            stride_seconds,
        }
    }

    pub fn from_config(cfg: &crate::Config) -> Self {
        Self::new(
            cfg.embed.model_id.clone(),
            cfg.embed.dimension,
            cfg.video.window_seconds,
            cfg.video.stride_seconds,
        )
    }

    /// Unnormalized token-hash accumulation.
    fn accumulate(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0f64; self.dimension];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let sign = if h >> 63 & 1 == 1 { 1.0 } else { -1.0 };
            v[(h % self.dimension as u64) as usize] += sign;
        }
        v
    }

    /// Segment bounds a video would be embedded under.
    pub fn video_segments(&self, dir: &Path) -> Result<Vec<Segment>> {
        let manifest = VideoManifest::read(dir)?;
        Ok(self.occupied_windows(&manifest).into_iter().map(|(s, _)| s).collect())
    }

    fn occupied_windows<'m>(&self, manifest: &'m VideoManifest) -> Vec<(Segment, Vec<&'m Frame>)> {
        windows(manifest.duration, self.window_seconds, self.stride_seconds)
            .into_iter()
            .filter_map(|seg| {
                let frames: Vec<&Frame> = manifest
                    .frames
                    .iter()
                    .filter(|f| f.t >= seg.start_seconds && f.t < seg.end_seconds)
                    .collect();
                (!frames.is_empty()).then_some((seg, frames))
            })
            .collect()
    }

    fn embed_video(&self, dir: &Path) -> Result<Vec<(Option<Segment>, Vec<f32>)>> {
        let manifest = VideoManifest::read(dir)?;
        let mut out = Vec::new();
        for (seg, frames) in self.occupied_windows(&manifest) {
            let mut mean = vec![0f64; self.dimension];
            for f in frames {
                let caption = f
                    .caption
                    .as_deref()
                    .filter(|c| !tokenize(c).is_empty())
                    .ok_or_else(|| {
                        Error::MissingCaptionSource(format!("{} frame at t={}", dir.display(), f.t))
                    })?;
                let v = self.embed_text(caption)?;
                for (m, x) in mean.iter_mut().zip(&v) {
                    *m += f64::from(*x);
                }
            }
            let v = l2_normalize(&mean).ok_or_else(|| {
                Error::MissingCaptionSource(format!("{} window {seg:?}", dir.display()))
            })?;
            out.push((Some(seg), v));
        }
        Ok(out)
    }
}

impl Embedder for StubEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        l2_normalize(&self.accumulate(text)).ok_or(Error::EmptyQuery)
    }

    fn media_segments(&self, path: &Path) -> Result<Vec<Option<Segment>>> {
        if is_video_dir(path) {
            Ok(self.video_segments(path)?.into_iter().map(Some).collect())
        } else {
            Ok(vec![None])
        }
    }

    fn embed_media(&self, path: &Path, caption: Option<&str>) -> Result<Vec<(Option<Segment>, Vec<f32>)>> {
        if is_video_dir(path) {
            return self.embed_video(path);
        }
        if std::fs::metadata(path).map(|m| !m.is_file()).unwrap_or(true) {
            return Err(Error::UnreadableMedia(path.display().to_string()));
        }
        std::fs::File::open(path).map_err(|_| Error::UnreadableMedia(path.display().to_string()))?;
        let sidecar = sidecar_path(path);
        let text = match std::fs::read_to_string(&sidecar) {
            Ok(t) => t,
            Err(_) => caption
                .map(str::to_string)
                .ok_or_else(|| Error::MissingCaptionSource(path.display().to_string()))?,
        };
        match self.embed_text(&text) {
            Ok(v) => Ok(vec![(None, v)]),
            Err(Error::EmptyQuery) => Err(Error::MissingCaptionSource(path.display().to_string())),
            Err(e) => Err(e),
        }
    }
}

/// `<media>.txt`, e.g. `truck.jpg.txt`.
pub fn sidecar_path(media: &Path) -> std::path::PathBuf {
    let mut name = media.as_os_str().to_owned();
    name.push(".txt");
    name.into()
}
