//! Images, annotations and detections, plus readers for the formats the
//! benchmark consumes: COCO instances and results JSON, Pascal VOC XML,
//! PNG and JPEG images.

mod coco;
mod raster;
mod types;
pub mod voc;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::coco::{to_instances_json, to_results_json};
pub use self::raster::ImageBuffer;
pub use self::types::{
    BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject, ImageRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    Coco,
    VocXml,
}

impl FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco" => Ok(AnnotationFormat::Coco),
            "voc_xml" | "voc" => Ok(AnnotationFormat::VocXml),
            other => Err(Error::Argument(format!("unknown annotation format {other:?}"))),
        }
    }
}

/// Reads a ground-truth file (or, for VOC, a directory of XML files).
pub fn parse_ground_truth(path: &Path, format: AnnotationFormat) -> Result<Dataset> {
    match format {
        AnnotationFormat::Coco => coco::parse_instances(path),
        AnnotationFormat::VocXml => voc::parse(path),
    }
}

/// Reads a COCO results array and validates it against `dataset`.
pub fn parse_detections(path: &Path, dataset: &Dataset) -> Result<DetectionSet> {
    coco::parse_results(path, dataset)
}

pub fn parse_detections_str(text: &str, dataset: &Dataset) -> Result<DetectionSet> {
    coco::parse_results_str(text, Path::new("<memory>"), dataset)
}

pub fn parse_ground_truth_str(text: &str, format: AnnotationFormat) -> Result<Dataset> {
    match format {
        AnnotationFormat::Coco => coco::parse_instances_str(text, Path::new("<memory>")),
        AnnotationFormat::VocXml => voc::parse_str(text, "image"),
    }
}

/// Decodes a PNG or JPEG into 8-bit RGB; grayscale is expanded to three channels.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    raster::load(path)
}

pub fn resize_bilinear(img: &ImageBuffer, width: u32, height: u32) -> Result<ImageBuffer> {
    raster::resize_bilinear(img, width, height)
}
