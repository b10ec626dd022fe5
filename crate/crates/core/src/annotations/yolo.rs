//! YOLO detection labels: one `<image-stem>.txt` per image with lines
//! `class cx cy w h` (normalized to [0, 1]) and a `classes.txt` listing class
//! names by index.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Map;

use super::{read_text, AnnotationError, BoxLabel, LabelSet, LabeledItem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloBox {
    pub class: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloBox {
    /// Pixel box, top-left origin.
    pub fn to_pixels(&self, width: u32, height: u32) -> (f64, f64, f64, f64) {
        let (wf, hf) = (f64::from(width), f64::from(height));
        (
            (self.cx - self.w / 2.0) * wf,
            (self.cy - self.h / 2.0) * hf,
            self.w * wf,
            self.h * hf,
        )
    }

    pub fn from_pixels(class: usize, b: &BoxLabel, width: u32, height: u32) -> Self {
        let (wf, hf) = (f64::from(width), f64::from(height));
        YoloBox {
            class,
            cx: (b.x + b.w / 2.0) / wf,
            cy: (b.y + b.h / 2.0) / hf,
            w: b.w / wf,
            h: b.h / hf,
        }
    }
}

/// Image name and pixel size, needed to denormalize labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInfo {
    pub file_name: String,
    pub uri: String,
    pub width: u32,
    pub height: u32,
}

pub fn parse_classes(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses one label file. Blank lines are skipped.
pub fn parse_label_file(
    text: &str,
    file: &str,
    class_count: usize,
) -> Result<Vec<YoloBox>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let bad = |message: String| AnnotationError::BadLine {
            file: file.to_string(),
            line,
            message,
        };
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let class: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad class index {:?}", fields[0])))?;
        let mut values = [0f64; 4];
        for (slot, text) in values.iter_mut().zip(&fields[1..]) {
            let v: f64 = text
                .parse()
                .map_err(|_| bad(format!("bad number {text:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(AnnotationError::NormalizedOutOfRange {
                    file: file.to_string(),
                    line,
                    value: v,
                });
            }
            *slot = v;
        }
        if class >= class_count {
            return Err(AnnotationError::ClassOutOfRange {
                file: file.to_string(),
                line,
                class,
                classes: class_count,
            });
        }
        let [cx, cy, w, h] = values;
        out.push(YoloBox { class, cx, cy, w, h });
    }
    Ok(out)
}

fn stem(file_name: &str) -> &str {
    let base = file_name.rsplit('/').next().unwrap_or(file_name);
    base.rsplit_once('.').map_or(base, |(s, _)| s)
}

/// Reads `labels_dir/<stem>.txt` for every image; images without a label file
/// get no boxes.
pub fn parse_yolo(
    labels_dir: &Path,
    classes_file: &Path,
    images: &[ImageInfo],
) -> Result<LabelSet, AnnotationError> {
    let classes = parse_classes(&read_text(classes_file)?);
    let mut labels = BTreeMap::new();
    for img in images {
        let name = format!("{}.txt", stem(&img.file_name));
        let path = labels_dir.join(&name);
        if path.exists() {
            labels.insert(img.file_name.clone(), (name, read_text(&path)?));
        }
    }
    let labels = labels
        .iter()
        .map(|(k, (n, t))| (k.as_str(), (n.as_str(), t.as_str())))
        .collect();
    from_texts(&classes, images, &labels)
}

/// Same as [`parse_yolo`] over in-memory label texts keyed by image file name.
pub fn from_texts(
    classes: &[String],
    images: &[ImageInfo],
    labels: &BTreeMap<&str, (&str, &str)>,
) -> Result<LabelSet, AnnotationError> {
    let mut items = Vec::with_capacity(images.len());
    for img in images {
        let mut boxes = Vec::new();
        if let Some((label_name, text)) = labels.get(img.file_name.as_str()) {
            for yb in parse_label_file(text, label_name, classes.len())? {
                let (x, y, w, h) = yb.to_pixels(img.width, img.height);
                let b = BoxLabel {
                    category: classes[yb.class].clone(),
                    x,
                    y,
                    w,
                    h,
                    extra: Map::new(),
                };
                super::validate_box(&b, img.width, img.height, &img.file_name)?;
                boxes.push(b);
            }
        }
        items.push(LabeledItem {
            file_name: img.file_name.clone(),
            uri: img.uri.clone(),
            content_hash: None,
            width: img.width,
            height: img.height,
            boxes,
            attributes: Map::new(),
        });
    }
    Ok(LabelSet {
        categories: classes.to_vec(),
        items,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoloExport {
    /// `classes.txt` content.
    pub classes: String,
    /// Label file name -> content.
    pub files: BTreeMap<String, String>,
}

/// Class indices follow the set's sorted category list.
pub fn export_yolo(set: &LabelSet) -> YoloExport {
    let mut names: Vec<&str> = set
        .categories
        .iter()
        .map(String::as_str)
        .chain(set.items.iter().flat_map(|i| i.boxes.iter().map(|b| b.category.as_str())))
        .collect();
    names.sort();
    names.dedup();
    let mut files = BTreeMap::new();
    for item in &set.items {
        let mut text = String::new();
        for b in &item.boxes {
            let class = names.binary_search(&b.category.as_str()).expect("collected above");
            let yb = YoloBox::from_pixels(class, b, item.width, item.height);
            text.push_str(&format!("{} {} {} {} {}\n", yb.class, yb.cx, yb.cy, yb.w, yb.h));
        }
        files.insert(format!("{}.txt", stem(&item.file_name)), text);
    }
    let mut classes = names.join("\n");
    classes.push('\n');
    YoloExport { classes, files }
}

pub fn write_yolo(export: &YoloExport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("classes.txt"), &export.classes)?;
    for (name, text) in &export.files {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}
