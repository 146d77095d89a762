use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in corner form, pixel coordinates.
///
/// Construction enforces `x2 > x1`, `y2 > y1` and finite, non-negative
/// coordinates, so every `BoundingBox` in the program has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(format!(
                "box coordinates must be finite and non-negative, got {coords:?}"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::Validation(format!(
                "box must have positive extent, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Converts an `[x, y, w, h]` box as found in COCO files.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x1: f64,
            y1: f64,
            x2: f64,
            y2: f64,
        }
        let r = Raw::deserialize(d)?;
        BoundingBox::new(r.x1, r.y1, r.x2, r.y2).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub bbox: BoundingBox,
    pub class_id: usize,
    /// VOC "difficult" or COCO "iscrowd": excluded from positives, never penalized.
    #[serde(default)]
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class_id: usize, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Validation(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GroundTruthObject>,
    /// Path of the clean image relative to the benign image root.
    pub clean_path: PathBuf,
    /// Attack tag to adversarial image path. Parsers leave this empty.
    #[serde(default)]
    pub adversarial_paths: BTreeMap<String, PathBuf>,
}

/// Annotated evaluation set.
///
/// `label_map[c]` names class `c`; `category_ids[c]` is the identifier the
/// class carries in external files (COCO `category_id`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    label_map: Vec<String>,
    category_ids: Vec<i64>,
    images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(
        label_map: Vec<String>,
        category_ids: Vec<i64>,
        images: Vec<ImageRecord>,
    ) -> Result<Self> {
        if label_map.len() != category_ids.len() {
            return Err(Error::Validation(format!(
                "{} labels but {} category ids",
                label_map.len(),
                category_ids.len()
            )));
        }
        let mut seen_cat = HashMap::new();
        for (idx, id) in category_ids.iter().enumerate() {
            if let Some(prev) = seen_cat.insert(*id, idx) {
                return Err(Error::Validation(format!(
                    "category id {id} used by classes {prev} and {idx}"
                )));
            }
        }
        let mut seen = HashMap::with_capacity(images.len());
        for img in &images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::Validation(format!(
                    "image {} has zero dimension",
                    img.image_id
                )));
            }
            if seen.insert(img.image_id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate image id {}",
                    img.image_id
                )));
            }
            if let Some(obj) = img.objects.iter().find(|o| o.class_id >= label_map.len()) {
                return Err(Error::Integrity(format!(
                    "image {} references class {} but only {} classes exist",
                    img.image_id,
                    obj.class_id,
                    label_map.len()
                )));
            }
        }
        Ok(Self {
            label_map,
            category_ids,
            images,
        })
    }

    /// Labels named `0..n`, external ids `1..=n`.
    pub fn with_labels(labels: &[&str], images: Vec<ImageRecord>) -> Result<Self> {
        let names = labels.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let ids = (1..=names.len() as i64).collect();
        Self::new(names, ids, images)
    }

    pub fn label_map(&self) -> &[String] {
        &self.label_map
    }

    pub fn category_ids(&self) -> &[i64] {
        &self.category_ids
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn class_count(&self) -> usize {
        self.label_map.len()
    }

    pub fn class_for_category(&self, category_id: i64) -> Option<usize> {
        self.category_ids.iter().position(|c| *c == category_id)
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Number of ground truths that count as positives.
    pub fn positive_count(&self) -> usize {
        self.images
            .iter()
            .flat_map(|i| &i.objects)
            .filter(|o| !o.difficult)
            .count()
    }

    /// Copy with every object moved to a single class `0`.
    pub fn fused(&self) -> Dataset {
        let images = self
            .images
            .iter()
            .map(|img| ImageRecord {
                objects: img
                    .objects
                    .iter()
                    .map(|o| GroundTruthObject {
                        class_id: 0,
                        ..o.clone()
                    })
                    .collect(),
                ..img.clone()
            })
            .collect();
        Dataset {
            label_map: vec!["object".to_string()],
            category_ids: vec![1],
            images,
        }
    }

    /// Copy where no object is flagged difficult.
    pub fn without_difficult(&self) -> Dataset {
        let mut out = self.clone();
        for obj in out.images.iter_mut().flat_map(|i| i.objects.iter_mut()) {
            obj.difficult = false;
        }
        out
    }
}

/// Predictions of one model on one (possibly attacked) version of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub by_image: BTreeMap<String, Vec<Detection>>,
    pub source_model: String,
    pub attack_tag: String,
}

impl DetectionSet {
    pub fn new(source_model: impl Into<String>, attack_tag: impl Into<String>) -> Self {
        Self {
            by_image: BTreeMap::new(),
            source_model: source_model.into(),
            attack_tag: attack_tag.into(),
        }
    }

    pub fn tagged(mut self, source_model: impl Into<String>, attack_tag: impl Into<String>) -> Self {
        self.source_model = source_model.into();
        self.attack_tag = attack_tag.into();
        self
    }

    pub fn push(&mut self, image_id: impl Into<String>, det: Detection) {
        self.by_image.entry(image_id.into()).or_default().push(det);
    }

    pub fn for_image(&self, image_id: &str) -> &[Detection] {
        self.by_image.get(image_id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_image.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fused(&self) -> DetectionSet {
        let mut out = self.clone();
        for det in out.by_image.values_mut().flatten() {
            det.class_id = 0;
        }
        out
    }

    pub fn scaled_scores(&self, factor: f64) -> DetectionSet {
        let mut out = self.clone();
        for det in out.by_image.values_mut().flatten() {
            det.score *= factor;
        }
        out
    }

    /// Fails on the first image id that the dataset does not contain.
    pub fn check_against(&self, dataset: &Dataset) -> Result<()> {
        let known: std::collections::HashSet<&str> =
            dataset.images().iter().map(|i| i.image_id.as_str()).collect();
        for (image_id, dets) in &self.by_image {
            if !known.contains(image_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "detections reference unknown image {image_id}"
                )));
            }
            if let Some(d) = dets.iter().find(|d| d.class_id >= dataset.class_count()) {
                return Err(Error::Integrity(format!(
                    "detection on image {image_id} references unknown class {}",
                    d.class_id
                )));
            }
        }
        Ok(())
    }
}
