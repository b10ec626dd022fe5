//! Random COCO fixtures and a raw-JSON normalizer.
//!
//! The normalizer reads COCO JSON on its own, joining ids by hand, so the
//! crate's parser is never its own judge.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub type Norm = (
    BTreeSet<String>,
    BTreeMap<String, (u64, u64, Vec<(String, [i64; 4], String)>)>,
);

/// Categories used plus, per file name: size and the sorted boxes, with
/// coordinates scaled to integers (fixtures use two decimals).
pub fn normalize(raw: &Value) -> Norm {
    let cats: BTreeMap<i64, String> = raw["categories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["id"].as_i64().unwrap(), c["name"].as_str().unwrap().to_string()))
        .collect();
    let mut images: BTreeMap<i64, (String, u64, u64)> = BTreeMap::new();
    for im in raw["images"].as_array().unwrap() {
        images.insert(
            im["id"].as_i64().unwrap(),
            (
                im["file_name"].as_str().unwrap().to_string(),
                im["width"].as_u64().unwrap(),
                im["height"].as_u64().unwrap(),
            ),
        );
    }
    let mut out: BTreeMap<String, (u64, u64, Vec<(String, [i64; 4], String)>)> = images
        .values()
        .map(|(f, w, h)| (f.clone(), (*w, *h, Vec::new())))
        .collect();
    let mut used = BTreeSet::new();
    for a in raw["annotations"].as_array().unwrap() {
        let (file, _, _) = &images[&a["image_id"].as_i64().unwrap()];
        let cat = cats[&a["category_id"].as_i64().unwrap()].clone();
        let b: Vec<f64> = a["bbox"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let scaled = [0, 1, 2, 3].map(|i| (b[i] * 100.0).round() as i64);
        let mut extra = a.as_object().unwrap().clone();
        for k in ["id", "image_id", "category_id", "bbox"] {
            extra.remove(k);
        }
        used.insert(cat.clone());
        out.get_mut(file).unwrap().2.push((cat, scaled, Value::Object(extra).to_string()));
    }
    for v in out.values_mut() {
        v.2.sort();
    }
    (used, out)
}

pub fn fixture(rng: &mut ChaCha8Rng) -> Value {
    let names = ["car", "truck", "person", "bike", "sign", "lane"];
    let n_cats = rng.random_range(1..=names.len());
    let cats: Vec<(i64, &str)> = (0..n_cats).map(|i| (100 + 7 * i as i64, names[i])).collect();
    let n_images = rng.random_range(1..8);
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for i in 0..n_images {
        let (w, h) = (rng.random_range(32..2000u32), rng.random_range(32..2000u32));
        let id = 1000 - 13 * i as i64;
        images.push(json!({"id": id, "file_name": format!("frame_{i:02}.jpg"), "width": w, "height": h}));
        for _ in 0..rng.random_range(0..5) {
            let bw = rng.random_range(1..=w * 100 / 2) as f64 / 100.0;
            let bh = rng.random_range(1..=h * 100 / 2) as f64 / 100.0;
            let x = rng.random_range(0..=((f64::from(w) - bw) * 100.0) as u32) as f64 / 100.0;
            let y = rng.random_range(0..=((f64::from(h) - bh) * 100.0) as u32) as f64 / 100.0;
            let mut a = json!({
                "id": 5000 + annotations.len() as i64 * 3,
                "image_id": id,
                "category_id": cats[rng.random_range(0..cats.len())].0,
                "bbox": [x, y, bw, bh],
            });
            if rng.random_bool(0.3) {
                a["iscrowd"] = json!(0);
                a["segmentation"] = json!([[x, y, x + bw, y, x + bw, y + bh]]);
            }
            annotations.push(a);
        }
    }
    images.reverse();
    json!({
        "info": {"description": "generated"},
        "images": images,
        "annotations": annotations,
        "categories": cats.iter().map(|(id, n)| json!({"id": id, "name": n})).collect::<Vec<_>>(),
    })
}


/// The worked conversion: 640x480, bbox [320,120,64,48] and its YOLO line.
pub fn worked_conversion() -> Value {
    json!({
        "images": [{"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}],
        "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [320, 120, 64, 48]}],
        "categories": [{"id": 1, "name": "car"}],
    })
}

pub const WORKED_YOLO_LINE: &str = "0 0.55 0.3 0.1 0.1";
