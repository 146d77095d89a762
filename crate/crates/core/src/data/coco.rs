//! COCO instances files (ground truth) and COCO results files (detections).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject, ImageRecord};
use crate::error::{Error, Result};

/// COCO allows integer image ids; some exporters write strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ImageId {
    Int(i64),
    Str(String),
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageId::Int(i) => write!(f, "{i}"),
            ImageId::Str(s) => f.write_str(s),
        }
    }
}

impl ImageId {
    fn from_record(id: &str) -> Self {
        match id.parse::<i64>() {
            Ok(i) if i.to_string() == id => ImageId::Int(i),
            _ => ImageId::Str(id.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: ImageId,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<i64>,
    image_id: ImageId,
    category_id: i64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoInstances {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoResult {
    image_id: ImageId,
    category_id: i64,
    bbox: [f64; 4],
    score: f64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_context(path: &Path, e: &serde_json::Error) -> String {
    format!("{} (line {}, column {})", path.display(), e.line(), e.column())
}

fn annotation_label(index: usize, ann: &CocoAnnotation) -> String {
    match ann.id {
        Some(id) => format!("annotation id {id}"),
        None => format!("annotation #{index}"),
    }
}

pub(crate) fn parse_instances(path: &Path) -> Result<Dataset> {
    let text = read(path)?;
    parse_instances_str(&text, path)
}

pub(crate) fn parse_instances_str(text: &str, path: &Path) -> Result<Dataset> {
    let raw: CocoInstances =
        serde_json::from_str(text).map_err(|e| Error::parse(json_context(path, &e), e))?;

    // Classes are numbered by ascending COCO category id.
    let mut categories = raw.categories;
    categories.sort_by_key(|c| c.id);
    let label_map = categories.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    let category_ids = categories.iter().map(|c| c.id).collect::<Vec<_>>();
    let class_of: HashMap<i64, usize> = category_ids
        .iter()
        .enumerate()
        .map(|(idx, id)| (*id, idx))
        .collect();

    let mut images = Vec::with_capacity(raw.images.len());
    let mut slot: HashMap<String, usize> = HashMap::with_capacity(raw.images.len());
    for img in raw.images {
        let id = img.id.to_string();
        if slot.insert(id.clone(), images.len()).is_some() {
            return Err(Error::parse(
                path.display().to_string(),
                format!("image id {id} appears twice"),
            ));
        }
        images.push(ImageRecord {
            image_id: id,
            width: img.width,
            height: img.height,
            objects: Vec::new(),
            clean_path: img.file_name.into(),
            adversarial_paths: BTreeMap::new(),
        });
    }

    for (index, ann) in raw.annotations.iter().enumerate() {
        let what = annotation_label(index, ann);
        let image_id = ann.image_id.to_string();
        let Some(&img_idx) = slot.get(&image_id) else {
            return Err(Error::Integrity(format!(
                "{}: {what} references unknown image {image_id}",
                path.display()
            )));
        };
        let Some(&class_id) = class_of.get(&ann.category_id) else {
            return Err(Error::Integrity(format!(
                "{}: {what} references unknown category {}",
                path.display(),
                ann.category_id
            )));
        };
        let [x, y, w, h] = ann.bbox;
        let bbox = BoundingBox::from_xywh(x, y, w, h)
            .map_err(|e| Error::parse(format!("{}: {what}", path.display()), e))?;
        images[img_idx].objects.push(GroundTruthObject {
            bbox,
            class_id,
            difficult: ann.iscrowd != 0,
        });
    }

    Dataset::new(label_map, category_ids, images)
}

pub(crate) fn parse_results(path: &Path, dataset: &Dataset) -> Result<DetectionSet> {
    let text = read(path)?;
    parse_results_str(&text, path, dataset)
}

pub(crate) fn parse_results_str(text: &str, path: &Path, dataset: &Dataset) -> Result<DetectionSet> {
    let raw: Vec<CocoResult> =
        serde_json::from_str(text).map_err(|e| Error::parse(json_context(path, &e), e))?;
    let known: HashMap<&str, ()> = dataset
        .images()
        .iter()
        .map(|i| (i.image_id.as_str(), ()))
        .collect();

    let mut set = DetectionSet::default();
    for (index, r) in raw.into_iter().enumerate() {
        let image_id = r.image_id.to_string();
        if !known.contains_key(image_id.as_str()) {
            return Err(Error::Integrity(format!(
                "{}: result #{index} references unknown image {image_id}",
                path.display()
            )));
        }
        let Some(class_id) = dataset.class_for_category(r.category_id) else {
            return Err(Error::Integrity(format!(
                "{}: result #{index} references unknown category {}",
                path.display(),
                r.category_id
            )));
        };
        let [x, y, w, h] = r.bbox;
        let bbox = BoundingBox::from_xywh(x, y, w, h).map_err(|e| {
            Error::Validation(format!("{}: result #{index}: {e}", path.display()))
        })?;
        let det = Detection::new(bbox, class_id, r.score).map_err(|e| {
            Error::Validation(format!("{}: result #{index}: {e}", path.display()))
        })?;
        set.push(image_id, det);
    }
    Ok(set)
}

/// Serializes a dataset as a COCO instances document.
pub fn to_instances_json(dataset: &Dataset) -> String {
    let categories = dataset
        .label_map()
        .iter()
        .zip(dataset.category_ids())
        .map(|(name, id)| CocoCategory {
            id: *id,
            name: name.clone(),
        })
        .collect();
    let mut annotations = Vec::new();
    let images = dataset
        .images()
        .iter()
        .map(|img| {
            for obj in &img.objects {
                annotations.push(CocoAnnotation {
                    id: Some(annotations.len() as i64 + 1),
                    image_id: ImageId::from_record(&img.image_id),
                    category_id: dataset.category_ids()[obj.class_id],
                    bbox: obj.bbox.to_xywh(),
                    iscrowd: u8::from(obj.difficult),
                });
            }
            CocoImage {
                id: ImageId::from_record(&img.image_id),
                file_name: img.clean_path.to_string_lossy().into_owned(),
                width: img.width,
                height: img.height,
            }
        })
        .collect();
    let doc = CocoInstances {
        images,
        annotations,
        categories,
    };
    serde_json::to_string_pretty(&doc).expect("COCO document serializes")
}

/// Serializes detections in the COCO results layout.
pub fn to_results_json(dataset: &Dataset, dets: &DetectionSet) -> String {
    #[derive(Serialize)]
    struct Out {
        image_id: ImageId,
        category_id: i64,
        bbox: [f64; 4],
        score: f64,
    }
    let rows = dets
        .by_image
        .iter()
        .flat_map(|(image_id, list)| {
            list.iter().map(move |d| Out {
                image_id: ImageId::from_record(image_id),
                category_id: dataset.category_ids()[d.class_id],
                bbox: d.bbox.to_xywh(),
                score: d.score,
            })
        })
        .collect::<Vec<_>>();
    serde_json::to_string_pretty(&rows).expect("results serialize")
}
