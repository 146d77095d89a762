use std::path::{Path, PathBuf};

use odbench::data::{
    to_instances_json, to_results_json, BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject, ImageBuffer,
};
use odbench::perceptual::{FeatureLayer, PerceptualFeatureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gen::image_record;

pub const MODELS: [&str; 2] = ["frcnn", "yolo"];
pub const ATTACKS: [&str; 3] = ["caa", "osfd", "pgd"];

fn dataset() -> Dataset {
    let obj = |x: f64, y: f64, c: usize| GroundTruthObject {
        bbox: BoundingBox::from_xywh(x, y, 8.0, 8.0).unwrap(),
        class_id: c,
        difficult: false,
    };
    let images = vec![
        image_record("a", vec![obj(2.0, 2.0, 0), obj(14.0, 14.0, 1)]),
        image_record("b", vec![obj(4.0, 10.0, 1)]),
        image_record("c", vec![obj(10.0, 3.0, 0), obj(1.0, 12.0, 0)]),
    ];
    Dataset::with_labels(&["car", "person"], images).unwrap()
}

/// Detections that find every object, then lose a seeded share of them.
fn detections(ds: &Dataset, rng: &mut ChaCha8Rng, keep: f64) -> DetectionSet {
    let mut out = DetectionSet::new("", "");
    for img in ds.images() {
        for o in &img.objects {
            if rng.random_bool(keep) {
                let class_id = if rng.random_bool(0.8) { o.class_id } else { 1 - o.class_id };
                let score = f64::from(rng.random_range(5..=9u32)) / 10.0;
                out.push(img.image_id.clone(), Detection::new(o.bbox, class_id, score).unwrap());
            }
        }
        let noise = BoundingBox::from_xywh(f64::from(rng.random_range(0..16u32)), 0.0, 4.0, 4.0).unwrap();
        out.push(img.image_id.clone(), Detection::new(noise, 0, 0.3).unwrap());
    }
    out
}

fn features(rng: &mut ChaCha8Rng) -> PerceptualFeatureSet {
    let (c, h, w) = (4, 3, 3);
    let mut activations = vec![0.0f32; c * h * w];
    for p in 0..h * w {
        let v: Vec<f32> = (0..c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        for (k, x) in v.iter().enumerate() {
            activations[k * h * w + p] = x / norm;
        }
    }
    PerceptualFeatureSet {
        layers: vec![FeatureLayer {
            layer_id: 0,
            channels: c,
            height: h,
            width: w,
            activations,
        }],
    }
}

/// A complete benchmark directory: ground truth, clean and adversarial
/// images, detections for two models under three attacks, PFEAT features.
/// Returns the manifest path.
pub fn write_benchmark(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ds = dataset();
    std::fs::write(dir.join("gt.json"), to_instances_json(&ds)).unwrap();

    std::fs::create_dir_all(dir.join("clean")).unwrap();
    for img in ds.images() {
        let pixels = (0..24 * 24 * 3).map(|_| rng.random::<u8>()).collect();
        ImageBuffer::new(24, 24, pixels)
            .unwrap()
            .save_png(&dir.join("clean").join(&img.clean_path))
            .unwrap();
    }
    let mut conditions = Vec::new();
    for model in MODELS {
        let benign = format!("dets/{model}_benign.json");
        std::fs::create_dir_all(dir.join("dets")).unwrap();
        std::fs::write(dir.join(&benign), to_results_json(&ds, &detections(&ds, &mut rng, 1.0))).unwrap();
        for attack in ATTACKS {
            let file = format!("dets/{model}_{attack}.json");
            std::fs::write(dir.join(&file), to_results_json(&ds, &detections(&ds, &mut rng, 0.4))).unwrap();
            let mut cond = serde_json::json!({
                "attack": attack,
                "model": model,
                "detections": file,
                "benign_detections": benign,
            });
            if model == "yolo" {
                let adv_dir = dir.join("adv").join(attack);
                let feat_dir = dir.join("feats").join(attack);
                std::fs::create_dir_all(&adv_dir).unwrap();
                std::fs::create_dir_all(&feat_dir).unwrap();
                let size = if attack == "osfd" { 30 } else { 24 };
                for img in ds.images() {
                    let clean = odbench::data::load_image(&dir.join("clean").join(&img.clean_path)).unwrap();
                    let clean = odbench::data::resize_bilinear(&clean, size, size).unwrap();
                    let pixels = clean
                        .pixels()
                        .iter()
                        .map(|&p| p.saturating_add_signed(rng.random_range(-8..=8i8)))
                        .collect();
                    ImageBuffer::new(size, size, pixels)
                        .unwrap()
                        .save_png(&adv_dir.join(&img.clean_path))
                        .unwrap();
                    std::fs::write(
                        feat_dir.join(format!("{}.pfeat", img.image_id)),
                        features(&mut rng).to_bytes(),
                    )
                    .unwrap();
                }
                cond["adversarial_root"] = format!("adv/{attack}").into();
                cond["features"] = serde_json::json!({"clean": "feats/clean", "adversarial": format!("feats/{attack}")});
            }
            conditions.push(cond);
        }
    }
    std::fs::create_dir_all(dir.join("feats/clean")).unwrap();
    for img in ds.images() {
        std::fs::write(
            dir.join("feats/clean").join(format!("{}.pfeat", img.image_id)),
            features(&mut rng).to_bytes(),
        )
        .unwrap();
    }
    let manifest = serde_json::json!({
        "dataset": {"path": "gt.json", "format": "coco"},
        "benign_image_root": "clean",
        "iou_threshold": 0.5,
        "conditions": conditions,
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

/// `n` source ids and one directory of empty PNG placeholders per component.
pub fn write_mixture(dir: &Path, n: usize, proportions: &[(&str, f64)], seed: Option<u64>) -> PathBuf {
    let ids: Vec<String> = (0..n).map(|i| format!("{i:04}")).collect();
    let mut components = Vec::new();
    for (tag, p) in proportions {
        let root = dir.join("variants").join(tag);
        std::fs::create_dir_all(&root).unwrap();
        for id in &ids {
            std::fs::write(root.join(format!("{id}.png")), tag.as_bytes()).unwrap();
        }
        components.push(serde_json::json!({"tag": tag, "root": format!("variants/{tag}"), "proportion": p}));
    }
    let mut spec = serde_json::json!({"source_ids": ids, "components": components});
    if let Some(s) = seed {
        spec["seed"] = s.into();
    }
    let path = dir.join("mix.json");
    std::fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}
