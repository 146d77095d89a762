use std::collections::BTreeMap;
use std::path::PathBuf;

use odbench::data::{BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject, ImageBuffer, ImageRecord};
use rand::Rng;

pub fn image_record(id: &str, objects: Vec<GroundTruthObject>) -> ImageRecord {
    ImageRecord {
        image_id: id.to_string(),
        width: 64,
        height: 64,
        objects,
        clean_path: PathBuf::from(format!("{id}.png")),
        adversarial_paths: BTreeMap::new(),
    }
}

fn random_box(rng: &mut impl Rng) -> BoundingBox {
    let x = f64::from(rng.random_range(0..40u32));
    let y = f64::from(rng.random_range(0..40u32));
    let w = f64::from(rng.random_range(2..20u32));
    let h = f64::from(rng.random_range(2..20u32));
    BoundingBox::from_xywh(x, y, w, h).unwrap()
}

fn jitter(b: &BoundingBox, rng: &mut impl Rng) -> BoundingBox {
    let mut d = || f64::from(rng.random_range(-3..=3i32));
    let x1 = (b.x1() + d()).max(0.0);
    let y1 = (b.y1() + d()).max(0.0);
    let x2 = (b.x2() + d()).max(x1 + 1.0);
    let y2 = (b.y2() + d()).max(y1 + 1.0);
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

/// Up to `max_images` images, `max_classes` classes and `max_dets`
/// detections in total. Coordinates are integers and scores lie on a
/// coarse grid so ties in both IoU and score occur regularly.
pub fn random_instance(
    rng: &mut impl Rng,
    max_images: usize,
    max_classes: usize,
    max_dets: usize,
    with_difficult: bool,
) -> (Dataset, DetectionSet) {
    let classes = rng.random_range(1..=max_classes);
    let labels: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    loop {
        let n_images = rng.random_range(1..=max_images);
        let mut images = Vec::new();
        for i in 0..n_images {
            let n_gt = rng.random_range(0..=4);
            let objects = (0..n_gt)
                .map(|_| GroundTruthObject {
                    bbox: random_box(rng),
                    class_id: rng.random_range(0..classes),
                    difficult: with_difficult && rng.random_bool(0.15),
                })
                .collect();
            images.push(image_record(&format!("img{i}"), objects));
        }
        let dataset = Dataset::with_labels(&label_refs, images).unwrap();
        if dataset.positive_count() == 0 {
            continue;
        }

        let mut dets = DetectionSet::new("model", "attack");
        let n_dets = rng.random_range(0..=max_dets);
        for _ in 0..n_dets {
            let img = &dataset.images()[rng.random_range(0..n_images)];
            let bbox = if !img.objects.is_empty() && rng.random_bool(0.7) {
                jitter(&img.objects[rng.random_range(0..img.objects.len())].bbox, rng)
            } else {
                random_box(rng)
            };
            let class_id = rng.random_range(0..classes);
            let score = f64::from(rng.random_range(1..=10u32)) / 10.0;
            dets.push(img.image_id.clone(), Detection::new(bbox, class_id, score).unwrap());
        }
        return (dataset, dets);
    }
}

pub fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> ImageBuffer {
    let pixels = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
    ImageBuffer::new(w, h, pixels).unwrap()
}
